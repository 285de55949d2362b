//! Nyström LS-SVM against RK4 and Adams-Bashforth on the same grid.

use lssvm_ode::harness::{run_recorded, RunConfig, SolverKind};

fn main() -> lssvm_ode::Result<()> {
    for id in [2, 3, 4, 11, 12] {
        for solver in [SolverKind::Nls, SolverKind::Rk4, SolverKind::Eab] {
            let mut cfg = RunConfig::defaults(id)?;
            cfg.solver = solver;
            let r = run_recorded(&cfg)?;
            match r.metrics {
                Some(m) => println!(
                    "{id:2} {:4} MAE {:.2e}  Linf {:.2e}  {:.4} s",
                    solver.name(),
                    m.mae,
                    m.linf,
                    r.timings.total()
                ),
                None => println!("{id:2} {:4} {}", solver.name(), r.error.unwrap_or_default()),
            }
        }
    }
    Ok(())
}

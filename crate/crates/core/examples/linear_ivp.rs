//! Linear initial value problems, including the stiff Prothero-Robinson
//! equation, at catalog defaults.

use lssvm_ode::harness::{run, RunConfig};
use lssvm_ode::ode_model::problem;

fn main() -> lssvm_ode::Result<()> {
    for id in [1, 2, 3, 7, 10] {
        let cfg = RunConfig::defaults(id)?;
        let r = run(&cfg)?;
        let m = r.metrics.expect("metrics");
        println!(
            "{:2} {:32} n={:5} m={:3} m_eff={:3}  MAE {:.2e}  Linf {:.2e}  {:.3} s",
            id,
            problem(id)?.name,
            cfg.n,
            cfg.m,
            r.diagnostics.m_eff.unwrap_or(0),
            m.mae,
            m.linf,
            r.timings.train_seconds
        );
    }
    Ok(())
}

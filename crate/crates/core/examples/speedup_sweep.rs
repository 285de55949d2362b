//! Training time against n for fixed m and for m = n.

use lssvm_ode::harness::{cli_sweep, loglog_slope, RunConfig, SolverKind, SweepAxis};
use lssvm_ode::metrics::compare_runs;

fn main() -> lssvm_ode::Result<()> {
    let ns = [250.0, 500.0, 1000.0, 2000.0];
    let nls = RunConfig::defaults(2)?;
    let full = RunConfig {
        solver: SolverKind::FullFeature,
        ..nls.clone()
    };
    let a = cli_sweep(&full, SweepAxis::N, &ns, 1)?;
    let b = cli_sweep(&nls, SweepAxis::N, &ns, 3)?;
    println!("     n   full (s)    nls (s)  speedup  dMAE");
    for (x, y) in a.iter().zip(&b) {
        let c = compare_runs(&x.result, &y.result)?;
        println!(
            "{:6} {:10.4} {:10.4} {:8.1} {:+.1e}",
            x.value, x.train_seconds + x.predict_seconds, y.train_seconds + y.predict_seconds, c.speedup, c.delta_mae
        );
    }
    let t = |rows: &[lssvm_ode::harness::SweepRow]| rows.iter().map(|r| r.train_seconds + r.predict_seconds).collect::<Vec<_>>();
    println!("log-log slope: full {:.2}, nls {:.2}", loglog_slope(&ns, &t(&a))?, loglog_slope(&ns, &t(&b))?);
    Ok(())
}

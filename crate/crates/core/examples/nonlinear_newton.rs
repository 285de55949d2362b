//! Newton's method on nonlinear problems: residual history and the
//! fitted local convergence order.

use lssvm_ode::harness::{run_recorded, RunConfig};

fn main() -> lssvm_ode::Result<()> {
    for id in [4, 5, 6, 14] {
        let r = run_recorded(&RunConfig::defaults(id)?)?;
        let d = &r.diagnostics;
        println!(
            "problem {id}: {} after {} iterations ({} Gauss-Newton), MAE {}",
            r.status,
            d.newton_iterations.unwrap_or(0),
            d.gauss_newton_steps.unwrap_or(0),
            r.metrics.map_or("-".into(), |m| format!("{:.2e}", m.mae)),
        );
        if let Some(trace) = &r.newton_trace {
            let shown: Vec<String> = trace.iter().take(12).map(|v| format!("{v:.1e}")).collect();
            println!("  |F|: {}", shown.join(" "));
        }
        if let Some(order) = d.convergence_order {
            println!("  fitted order {order:.2}");
        }
    }
    Ok(())
}

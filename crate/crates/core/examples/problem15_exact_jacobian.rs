//! Closed-form Newton blocks versus the generic Hessian path on the
//! second-order nonlinear boundary value problem.

use std::sync::Arc;

use lssvm_ode::kernel::RbfKernel;
use lssvm_ode::nonlinear_solver::{convergence_diagnostics, solve_nonlinear, solve_problem15, NewtonOptions};
use lssvm_ode::nystrom::{select_landmarks, NystromFeatureMap, SamplingStrategy, DEFAULT_DROP_TOL};
use lssvm_ode::ode_model::{problem, reference_solution, OdeSpec};

fn main() -> lssvm_ode::Result<()> {
    let p = problem(15)?;
    let d = p.defaults;
    let grid = p.grid(d.n);
    let kernel = RbfKernel::new(d.sigma2)?;
    let lm = select_landmarks(SamplingStrategy::Equidistant, &kernel, &grid, d.m)?;
    let map = Arc::new(NystromFeatureMap::build(kernel, &lm, DEFAULT_DROP_TOL)?);
    let opts = NewtonOptions::for_gamma(d.gamma, d.newton_iters.unwrap_or(50));
    let OdeSpec::Nonlinear(spec) = &p.spec else { unreachable!() };
    let reference = reference_solution(&p, &grid)?;

    let special = solve_problem15(&p.conditions, &map, &grid, d.gamma, &opts)?;
    let generic = solve_nonlinear(spec, &p.conditions, &map, &grid, d.gamma, &opts)?;
    for (name, (model, trace)) in [("closed form", special), ("generic", generic)] {
        let y = model.predict(0, &grid)?;
        let mae = y.iter().zip(&reference).map(|(a, b)| (a - b).abs()).sum::<f64>() / y.len() as f64;
        let order = convergence_diagnostics(&trace).map(|r| r.order).unwrap_or(f64::NAN);
        let res: Vec<String> = trace.residuals.iter().map(|v| format!("{v:.1e}")).collect();
        println!("{name:12} MAE {mae:.3e}  order {order:.2}  y(end) {:.9}", y[y.len() - 1]);
        println!("             |F|: {}", res.join(" "));
    }
    Ok(())
}

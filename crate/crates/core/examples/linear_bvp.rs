//! Boundary value problems up to fourth order. Also evaluates the first
//! derivative of the trained model against the closed form.

use lssvm_ode::harness::RunConfig;
use lssvm_ode::ode_model::{problem, reference_derivative};
use lssvm_ode::pipeline::fit;

fn main() -> lssvm_ode::Result<()> {
    for id in [8, 9, 11, 12, 13, 16] {
        let p = problem(id)?;
        let cfg = RunConfig::defaults(id)?;
        let grid = p.grid(cfg.n);
        let trained = fit(&p, &grid, &cfg.fit_config())?;
        let mut worst = [0.0f64; 2];
        for ell in 0..2 {
            let y = trained.model.predict(ell, &grid)?;
            let r = reference_derivative(&p, ell, &grid)?;
            worst[ell] = y.iter().zip(&r).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        }
        let kkt = trained.kkt.expect("linear");
        println!(
            "{id:2} order {}  max|y - y*| {:.2e}  max|y' - y*'| {:.2e}  backward error {:.1e}",
            p.order(),
            worst[0],
            worst[1],
            kkt.backward_error()
        );
    }
    Ok(())
}

//! Nyström feature map: effective rank and kernel reconstruction error
//! as the number of landmarks grows.

use lssvm_ode::kernel::RbfKernel;
use lssvm_ode::nystrom::{select_landmarks, NystromFeatureMap, SamplingStrategy, DEFAULT_DROP_TOL};
use lssvm_ode::ode_model::linspace;

fn main() -> lssvm_ode::Result<()> {
    let kernel = RbfKernel::new(1.0)?;
    let grid = linspace(0.0, 10.0, 400);
    let probe = linspace(0.0, 10.0, 57);
    let exact = kernel.kernel_matrix(0, &probe, &probe)?;
    println!("    m  m_eff  max |K - Phi Phi^T|");
    for m in [5, 10, 20, 40, 80] {
        let lm = select_landmarks(SamplingStrategy::Equidistant, &kernel, &grid, m)?;
        let map = NystromFeatureMap::build(kernel.clone(), &lm, DEFAULT_DROP_TOL)?;
        let phi = map.feature_matrix(0, &probe)?;
        let mut err = 0.0f64;
        for i in 0..probe.len() {
            for j in 0..probe.len() {
                let dot: f64 = (0..map.m_eff()).map(|c| phi[(i, c)] * phi[(j, c)]).sum();
                err = err.max((dot - exact[(i, j)]).abs());
            }
        }
        println!("{m:5}  {:5}  {err:.3e}", map.m_eff());
    }
    Ok(())
}

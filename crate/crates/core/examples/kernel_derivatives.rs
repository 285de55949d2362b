//! RBF kernel derivatives against central differences.

use lssvm_ode::kernel::RbfKernel;

fn main() -> lssvm_ode::Result<()> {
    let k = RbfKernel::new(1.0)?;
    let (u, v) = (0.3, 1.1);
    let h = 1e-5;
    println!("order  analytic            central difference");
    for order in 1..=4 {
        let exact = k.eval_deriv(order, u, v)?;
        let fd = (k.eval_deriv(order - 1, u, v + h)? - k.eval_deriv(order - 1, u, v - h)?) / (2.0 * h);
        println!("{order:5}  {exact:+.12e}  {fd:+.12e}");
    }
    let p = k.polynomial(3)?;
    println!("order-3 polynomial coefficients: {:?}", p.coefficients());
    Ok(())
}

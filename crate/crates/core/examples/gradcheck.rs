//! Compares analytic gradients with central differences, first for one
//! function and then for the full probe suite used by `dishnet gradcheck`.

use dishnet::gradcheck::{run_gradcheck, GradcheckConfig};
use dishnet::tensor::finite_difference_check;
use dishnet::Tensor;

fn main() -> dishnet::Result<()> {
    let point = Tensor::<f64>::new(vec![0.3, -0.7, 1.1, 0.05], &[4])?;
    let err = finite_difference_check(|x| x.mul(x)?.exp()?.sum_all(), &point, 1e-5)?;
    println!("sum(exp(x^2)): max rel err {err:.3e}");

    let report = run_gradcheck(&GradcheckConfig { seeds: 3, ..Default::default() })?;
    for p in &report.probes {
        println!("{:<20} {:.3e}", p.name, p.max_error);
    }
    println!("passed: {}", report.passed());
    Ok(())
}

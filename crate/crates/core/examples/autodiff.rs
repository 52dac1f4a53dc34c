//! Builds a small graph by hand, runs backward and prints leaf gradients.

use dishnet::Tensor;

fn main() -> dishnet::Result<()> {
    let x = Tensor::<f64>::param(vec![0.5, -1.0, 2.0], &[1, 3])?;
    let w = Tensor::<f64>::param(vec![1.0, 0.0, -2.0, 0.5, 0.25, 1.0], &[3, 2])?;

    // loss = mean(sigmoid(x @ w)^2) + sum(x)
    let h = x.matmul(&w)?.sigmoid()?;
    let loss = h.mul(&h)?.mean_all()?.add(&x.sum_all()?)?;
    loss.backward()?;

    println!("loss   = {:.6}", loss.item()?);
    println!("dL/dx  = {:?}", x.grad().unwrap());
    println!("dL/dw  = {:?}", w.grad().unwrap());

    // Fan-out accumulates: d(x*x + x)/dx = 2x + 1.
    let a = Tensor::<f64>::param(vec![1.0], &[1])?;
    a.mul(&a)?.add(&a)?.sum_all()?.backward()?;
    println!("d(a*a + a)/da at 1 = {:?}", a.grad().unwrap());
    Ok(())
}

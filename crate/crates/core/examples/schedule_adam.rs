//! Warmup-cosine learning rates and Adam fitting a least-squares problem.

use dishnet::optim::{adam_step, learning_rate_at, AdamState, ScheduleConfig};
use dishnet::params::ParamStore;
use dishnet::Tensor;

fn main() -> dishnet::Result<()> {
    let sched = ScheduleConfig { peak_lr: 0.05, final_lr: 1e-4, warmup_iters: 20, total_iters: 300 };
    for it in [0, 10, 20, 100, 200, 299] {
        println!("lr[{it:>3}] = {:.6}", learning_rate_at(it, &sched)?);
    }

    // Fit w to minimize |A w - y|^2 with A w* = y for w* = [1, -2].
    let a = Tensor::<f64>::new(vec![1.0, 2.0, 3.0, -1.0, 0.5, 0.5], &[3, 2])?;
    let y = Tensor::<f64>::new(vec![-3.0, 5.0, -0.5], &[3, 1])?;
    let mut params = ParamStore::new();
    params.insert("w", vec![0.0, 0.0], &[2, 1])?;
    let mut state = AdamState::new(&params);
    for it in 0..sched.total_iters {
        params.zero_grad();
        let r = a.matmul(params.get("w")?)?.sub(&y)?;
        let loss = r.mul(&r)?.sum_all()?;
        loss.backward()?;
        let grads = params.grads();
        adam_step(&mut params, &grads, &mut state, learning_rate_at(it, &sched)?)?;
        if it % 60 == 0 {
            println!("step {it:>3}  loss {:.6}", loss.item()?);
        }
    }
    println!("w = {:?}", params.get("w")?.data());
    Ok(())
}

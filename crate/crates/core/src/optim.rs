//! Adam with a linear-warmup, cosine-decay learning-rate schedule.

use serde::{Deserialize, Serialize};

use crate::codec::{put_u32, to_u32, ByteReader};
use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::tensor::serialize::read_tensor_from;
use crate::tensor::{write_tensor, Element, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    pub peak_lr: f64,
    pub final_lr: f64,
    pub warmup_iters: usize,
    pub total_iters: usize,
}

impl ScheduleConfig {
    pub fn new(total_iters: usize) -> Self {
        ScheduleConfig { peak_lr: 1e-3, final_lr: 1e-6, warmup_iters: 200, total_iters }
    }

    /// `ceil(num_train / batch_size) * epochs` iterations.
    pub fn for_run(num_train: usize, batch_size: usize, epochs: usize) -> Self {
        Self::new(num_train.div_ceil(batch_size) * epochs)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.final_lr > 0.0 && self.final_lr <= self.peak_lr && self.peak_lr.is_finite()) {
            return Err(Error::InvalidSpec(format!(
                "learning rates must satisfy 0 < final ({}) <= peak ({})",
                self.final_lr, self.peak_lr
            )));
        }
        if self.warmup_iters == 0 || self.warmup_iters >= self.total_iters {
            return Err(Error::InvalidSpec(format!(
                "warmup ({}) must be in 1..total ({})",
                self.warmup_iters, self.total_iters
            )));
        }
        Ok(())
    }
}

/// Learning rate for 0-based iteration `it`.
///
/// Rises linearly to the peak at `warmup - 1`, then follows a half cosine that
/// lands exactly on `final_lr` at the last iteration.
pub fn learning_rate_at(it: usize, cfg: &ScheduleConfig) -> Result<f64> {
    cfg.validate()?;
    if it >= cfg.total_iters {
        return Err(Error::OutOfRange { it, total: cfg.total_iters });
    }
    if it < cfg.warmup_iters {
        return Ok(cfg.peak_lr * ((it + 1) as f64 / cfg.warmup_iters as f64));
    }
    let span = cfg.total_iters - 1 - cfg.warmup_iters;
    if span == 0 {
        return Ok(cfg.final_lr);
    }
    let frac = (it - cfg.warmup_iters) as f64 / span as f64;
    let lr = cfg.final_lr + 0.5 * (cfg.peak_lr - cfg.final_lr) * (1.0 + (std::f64::consts::PI * frac).cos());
    // `final + (peak - final)` can round one ulp past the peak.
    Ok(lr.min(cfg.peak_lr))
}

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// Moment estimates for every parameter of a [`ParamStore`], in store order.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T: Element> {
    names: Vec<String>,
    shapes: Vec<Vec<usize>>,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
    step: u64,
}

const MAGIC: &[u8; 4] = b"ADAM";

impl<T: Element> AdamState<T> {
    pub fn new(params: &ParamStore<T>) -> Self {
        let (mut names, mut shapes, mut m) = (Vec::new(), Vec::new(), Vec::new());
        for (n, t) in params.iter() {
            names.push(n.to_string());
            shapes.push(t.shape().to_vec());
            m.push(vec![T::zero(); t.numel()]);
        }
        AdamState { names, shapes, v: m.clone(), m, step: 0 }
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self, i: usize) -> &[T] {
        &self.m[i]
    }

    pub fn second_moment(&self, i: usize) -> &[T] {
        &self.v[i]
    }

    /// `ADAM`, u32 step low / high words, u32 entry count, then per entry the
    /// name (u32 length + UTF-8) followed by `m` and `v` as tensor records.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = MAGIC.to_vec();
        put_u32(&mut out, self.step as u32);
        put_u32(&mut out, (self.step >> 32) as u32);
        put_u32(&mut out, to_u32(self.names.len())?);
        for (i, name) in self.names.iter().enumerate() {
            put_u32(&mut out, to_u32(name.len())?);
            out.extend_from_slice(name.as_bytes());
            write_tensor(&mut out, &Tensor::new(self.m[i].clone(), &self.shapes[i])?)?;
            write_tensor(&mut out, &Tensor::new(self.v[i].clone(), &self.shapes[i])?)?;
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        r.magic(MAGIC)?;
        let step = r.u32()? as u64 | (r.u32()? as u64) << 32;
        let n = r.u32()? as usize;
        let mut state = AdamState { names: Vec::new(), shapes: Vec::new(), m: Vec::new(), v: Vec::new(), step };
        for _ in 0..n {
            let len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(len)?).map_err(|e| Error::Malformed(e.to_string()))?;
            let m = read_tensor_from(&mut r)?.into_precision::<T>();
            let v = read_tensor_from(&mut r)?.into_precision::<T>();
            if m.shape() != v.shape() {
                return Err(Error::Malformed(format!("moment shapes differ for `{name}`")));
            }
            state.names.push(name.to_string());
            state.shapes.push(m.shape().to_vec());
            state.m.push(m.to_vec());
            state.v.push(v.to_vec());
        }
        if r.remaining() != 0 {
            return Err(Error::Malformed(format!("{} trailing bytes after optimizer state", r.remaining())));
        }
        Ok(state)
    }

    fn check(&self, params: &ParamStore<T>, grads: &[Vec<T>]) -> Result<()> {
        if params.len() != self.names.len() || grads.len() != params.len() {
            return Err(Error::shape(
                "adam_step",
                format!("{} params, {} grads, {} state entries", params.len(), grads.len(), self.names.len()),
            ));
        }
        for (((name, t), g), (sname, sshape)) in params.iter().zip(grads).zip(self.names.iter().zip(&self.shapes)) {
            if name != sname || t.shape() != sshape.as_slice() || g.len() != t.numel() {
                return Err(Error::shape("adam_step", format!("parameter `{name}` does not match its gradient or state")));
            }
            if g.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFiniteGrad(name.to_string()));
            }
        }
        Ok(())
    }
}

/// One Adam update of every parameter in place. Nothing is modified when the
/// shapes disagree or a gradient is not finite.
pub fn adam_step<T: Element>(params: &mut ParamStore<T>, grads: &[Vec<T>], state: &mut AdamState<T>, lr: f64) -> Result<()> {
    state.check(params, grads)?;
    state.step += 1;
    let t = state.step as i32;
    let c1 = T::from_f64_lossy(1.0 - BETA1.powi(t));
    let c2 = T::from_f64_lossy(1.0 - BETA2.powi(t));
    let (b1, b2) = (T::from_f64_lossy(BETA1), T::from_f64_lossy(BETA2));
    let (lr, eps) = (T::from_f64_lossy(lr), T::from_f64_lossy(EPSILON));
    let one = T::one();
    let names: Vec<String> = params.names().map(str::to_string).collect();
    for (i, name) in names.iter().enumerate() {
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        let mut theta = params.get(name)?.to_vec();
        for (((p, &g), m), v) in theta.iter_mut().zip(&grads[i]).zip(m.iter_mut()).zip(v.iter_mut()) {
            *m = b1 * *m + (one - b1) * g;
            *v = b2 * *v + (one - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p = *p - lr * m_hat / (v_hat.sqrt() + eps);
        }
        params.set(name, theta)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(v: f64) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        s.insert("theta", vec![v], &[1]).unwrap();
        s
    }

    #[test]
    fn schedule_values() {
        let cfg = ScheduleConfig::new(1000);
        assert!((learning_rate_at(99, &cfg).unwrap() - 5.0e-4).abs() < 1e-12);
        assert!((learning_rate_at(199, &cfg).unwrap() - 1e-3).abs() < 1e-12);
        assert!((learning_rate_at(999, &cfg).unwrap() - 1e-6).abs() < 1e-12);
        assert!(matches!(learning_rate_at(1000, &cfg), Err(Error::OutOfRange { it: 1000, total: 1000 })));
        assert!(learning_rate_at(0, &ScheduleConfig::new(200)).is_err());
    }

    #[test]
    fn first_step_closed_form() {
        let mut p = store(0.0);
        let mut s = AdamState::new(&p);
        adam_step(&mut p, &[vec![0.5]], &mut s, 1e-3).unwrap();
        let expect = -1e-3 * 0.5 / (0.5 + 1e-8);
        assert!((p.get("theta").unwrap().data()[0] - expect).abs() < 1e-18);
        assert_eq!(s.step(), 1);
    }

    #[test]
    fn zero_gradient_keeps_params() {
        let mut p = store(2.0);
        let mut s = AdamState::new(&p);
        adam_step(&mut p, &[vec![0.0]], &mut s, 1e-3).unwrap();
        assert_eq!(p.get("theta").unwrap().data(), &[2.0]);
        assert_eq!(s.step(), 1);
    }

    #[test]
    fn rejects_non_finite() {
        let mut p = store(2.0);
        let mut s = AdamState::new(&p);
        assert!(matches!(adam_step(&mut p, &[vec![f64::NAN]], &mut s, 1e-3), Err(Error::NonFiniteGrad(n)) if n == "theta"));
        assert_eq!(s.step(), 0);
        assert!(matches!(adam_step(&mut p, &[vec![0.0, 1.0]], &mut s, 1e-3), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn state_roundtrip() {
        let mut p = store(1.0);
        let mut s = AdamState::new(&p);
        for _ in 0..3 {
            let g = vec![2.0 * p.get("theta").unwrap().data()[0]];
            adam_step(&mut p, &[g], &mut s, 0.1).unwrap();
        }
        let back = AdamState::<f64>::from_bytes(&s.to_bytes().unwrap()).unwrap();
        assert_eq!(back, s);
    }
}

//! Named, ordered parameter storage shared by the model, optimizer and checkpoints.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// Ordered collection of named trainable leaves.
///
/// Values are immutable tensors; the optimizer swaps in fresh leaves after
/// every update, so gradients never leak between steps.
#[derive(Clone, Debug, Default)]
pub struct ParamStore<T: Element> {
    entries: Vec<(String, Tensor<T>)>,
}

impl<T: Element> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore { entries: Vec::new() }
    }

    /// Adds a parameter as a grad-requiring leaf. Names must be unique.
    pub fn insert(&mut self, name: impl Into<String>, data: Vec<T>, shape: &[usize]) -> Result<()> {
        let name = name.into();
        if self.position(&name).is_some() {
            return Err(Error::InvalidSpec(format!("duplicate parameter `{name}`")));
        }
        self.entries.push((name, Tensor::param(data, shape)?));
        Ok(())
    }

    fn position(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|(n, _)| n == name)
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<T>> {
        self.position(name)
            .map(|i| &self.entries[i].1)
            .ok_or_else(|| Error::shape("params", format!("missing parameter `{name}`")))
    }

    /// Replaces the values of an existing parameter, keeping its shape.
    pub fn set(&mut self, name: &str, data: Vec<T>) -> Result<()> {
        let i = self
            .position(name)
            .ok_or_else(|| Error::shape("params", format!("missing parameter `{name}`")))?;
        let shape = self.entries[i].1.shape().to_vec();
        self.entries[i].1 = Tensor::param(data, &shape)?;
        Ok(())
    }

    /// Swaps in `tensor` as is, graph links included. Shapes must agree.
    pub fn replace(&mut self, name: &str, tensor: Tensor<T>) -> Result<()> {
        let i = self
            .position(name)
            .ok_or_else(|| Error::shape("params", format!("missing parameter `{name}`")))?;
        if self.entries[i].1.shape() != tensor.shape() {
            return Err(Error::shape("params", format!("`{name}` is {:?}, got {:?}", self.entries[i].1.shape(), tensor.shape())));
        }
        self.entries[i].1 = tensor;
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total scalar count over all parameters.
    pub fn numel(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.numel()).sum()
    }

    /// Scalar count over parameters whose name starts with `prefix`.
    pub fn numel_with_prefix(&self, prefix: &str) -> usize {
        self.iter().filter(|(n, _)| n.starts_with(prefix)).map(|(_, t)| t.numel()).sum()
    }

    pub fn zero_grad(&self) {
        self.entries.iter().for_each(|(_, t)| t.zero_grad());
    }

    /// Accumulated gradients in parameter order; zeros where none arrived.
    pub fn grads(&self) -> Vec<Vec<T>> {
        self.entries
            .iter()
            .map(|(_, t)| t.grad().unwrap_or_else(|| vec![T::zero(); t.numel()]))
            .collect()
    }

    /// Same values as constants, for graph-free inference.
    pub fn frozen(&self) -> ParamStore<T> {
        ParamStore { entries: self.entries.iter().map(|(n, t)| (n.clone(), t.detach())).collect() }
    }

    pub fn cast<U: Element>(&self) -> ParamStore<U> {
        ParamStore {
            entries: self
                .entries
                .iter()
                .map(|(n, t)| {
                    let c = t.cast::<U>();
                    (n.clone(), Tensor::param(c.to_vec(), c.shape()).expect("same shape"))
                })
                .collect(),
        }
    }
}

/// Normal samples with standard deviation `std`.
pub fn normal<T: Element>(rng: &mut impl Rng, n: usize, std: f64) -> Vec<T> {
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            T::from_f64_lossy(z * std)
        })
        .collect()
}

/// He initialization: normal with standard deviation sqrt(2 / fan_in).
pub fn he_normal<T: Element>(rng: &mut impl Rng, n: usize, fan_in: usize) -> Vec<T> {
    normal(rng, n, (2.0 / fan_in as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn insert_get_set() {
        let mut s = ParamStore::<f64>::new();
        s.insert("w", vec![1.0, 2.0], &[2]).unwrap();
        assert!(s.insert("w", vec![0.0], &[1]).is_err());
        s.set("w", vec![3.0, 4.0]).unwrap();
        assert_eq!(s.get("w").unwrap().data(), &[3.0, 4.0]);
        assert!(s.get("w").unwrap().requires_grad());
        assert!(s.set("w", vec![1.0]).is_err());
        assert!(s.get("b").is_err());
        assert_eq!(s.numel(), 2);
    }

    #[test]
    fn he_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v: Vec<f64> = he_normal(&mut rng, 20_000, 50);
        let var = v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64;
        assert!((var - 2.0 / 50.0).abs() < 0.004, "{var}");
    }
}

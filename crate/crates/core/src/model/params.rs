use alloc::string::{String, ToString};
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{dim_err, Error, Result};
use crate::numerics::{Real, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named tensors of a model: trainable weights plus non-trainable buffers
/// (batch-norm running statistics).
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<F> {
    names: Vec<String>,
    tensors: Vec<Tensor<F>>,
    trainable: Vec<bool>,
}

impl<F: Real> Default for ParamStore<F> {
    fn default() -> Self {
        Self::new()
    }
}

fn name_seed(seed: u64, name: &str) -> u64 {
    // FNV-1a over the name, folded into the model seed
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

impl<F: Real> ParamStore<F> {
    pub fn new() -> Self {
        ParamStore { names: Vec::new(), tensors: Vec::new(), trainable: Vec::new() }
    }

    pub fn insert(&mut self, name: &str, t: Tensor<F>, trainable: bool) -> Result<ParamId> {
        if self.find(name).is_some() {
            return Err(Error::Config(alloc::format!("duplicate parameter {name}")));
        }
        self.names.push(name.to_string());
        self.tensors.push(t);
        self.trainable.push(trainable);
        Ok(ParamId(self.names.len() - 1))
    }

    /// Kaiming-uniform weights with fan-in `shape[1..]`; the draw depends only
    /// on `(seed, name)` so insertion order does not matter.
    pub fn kaiming(&mut self, name: &str, shape: &[usize], seed: u64) -> Result<ParamId> {
        let fan_in: usize = shape[1..].iter().product();
        let bound = (6.0 / fan_in.max(1) as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(name_seed(seed, name));
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| F::of(rng.gen_range(-bound..bound))).collect();
        self.insert(name, Tensor::new(shape, data)?, true)
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.names.len()).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn get(&self, id: ParamId) -> &Tensor<F> {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<F> {
        &mut self.tensors[id.0]
    }

    pub fn is_trainable(&self, id: ParamId) -> bool {
        self.trainable[id.0]
    }

    /// Mutable access to two distinct entries.
    pub fn pair_mut(&mut self, a: ParamId, b: ParamId) -> (&mut Tensor<F>, &mut Tensor<F>) {
        assert_ne!(a, b);
        if a.0 < b.0 {
            let (lo, hi) = self.tensors.split_at_mut(b.0);
            (&mut lo[a.0], &mut hi[0])
        } else {
            let (lo, hi) = self.tensors.split_at_mut(a.0);
            (&mut hi[0], &mut lo[b.0])
        }
    }

    /// Number of trainable scalars.
    pub fn param_count(&self) -> usize {
        self.tensors.iter().zip(&self.trainable).filter(|(_, &t)| t).map(|(t, _)| t.len()).sum()
    }

    /// Replace every tensor from `(name, tensor)` pairs; names and shapes
    /// must match the current layout exactly.
    pub fn load(&mut self, entries: &[(String, Tensor<F>)]) -> Result<()> {
        if entries.len() != self.names.len() {
            return Err(Error::Config(alloc::format!(
                "checkpoint has {} tensors, model expects {}",
                entries.len(),
                self.names.len()
            )));
        }
        let mut seen = alloc::vec![false; self.names.len()];
        for (name, t) in entries {
            let id = self.find(name).ok_or_else(|| Error::Config(alloc::format!("unexpected tensor {name}")))?;
            if core::mem::replace(&mut seen[id.0], true) {
                return Err(Error::Config(alloc::format!("duplicate tensor {name}")));
            }
            if self.tensors[id.0].shape() != t.shape() {
                return Err(dim_err!("tensor {name}: shape {:?}, expected {:?}", t.shape(), self.tensors[id.0].shape()));
            }
            self.tensors[id.0] = t.clone();
        }
        Ok(())
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &Tensor<F>)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn cast<G: Real>(&self) -> ParamStore<G> {
        ParamStore {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(Tensor::cast).collect(),
            trainable: self.trainable.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv_param_count() {
        let mut s = ParamStore::<f32>::new();
        s.kaiming("c.w", &[4, 2, 3, 3], 0).unwrap();
        s.insert("c.b", Tensor::zeros(&[4]), true).unwrap();
        s.insert("c.running", Tensor::zeros(&[4]), false).unwrap();
        assert_eq!(s.param_count(), 76);
        assert_eq!(ParamStore::<f32>::new().param_count(), 0);
    }

    #[test]
    fn init_is_order_independent_and_bounded() {
        let mut a = ParamStore::<f64>::new();
        a.kaiming("x", &[3, 4], 9).unwrap();
        a.kaiming("y", &[3, 4], 9).unwrap();
        let mut b = ParamStore::<f64>::new();
        b.kaiming("y", &[3, 4], 9).unwrap();
        b.kaiming("x", &[3, 4], 9).unwrap();
        assert_eq!(a.get(a.find("x").unwrap()), b.get(b.find("x").unwrap()));
        let bound = (6.0f64 / 4.0).sqrt();
        assert!(a.get(ParamId(0)).data().iter().all(|v| v.abs() <= bound));
    }
}

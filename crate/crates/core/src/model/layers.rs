use alloc::vec;
use alloc::vec::Vec;

use super::params::{ParamId, ParamStore};
use crate::error::Result;
use crate::numerics::{BnMode, Graph, Real, Tensor, Var};

/// Batch-norm behaviour of a forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics, running statistics updated.
    Train,
    /// Batch statistics, running statistics untouched (gradient checks).
    Batch,
    /// Running statistics.
    Eval,
}

#[derive(Debug, Clone)]
pub(crate) struct Conv {
    pub w: ParamId,
    pub b: ParamId,
    pub pad: usize,
}

impl Conv {
    pub fn new<F: Real>(store: &mut ParamStore<F>, name: &str, cin: usize, cout: usize, k: usize, seed: u64) -> Result<Self> {
        let w = store.kaiming(&alloc::format!("{name}.w"), &[cout, cin, k, k], seed)?;
        let b = store.insert(&alloc::format!("{name}.b"), Tensor::zeros(&[cout]), true)?;
        Ok(Conv { w, b, pad: k / 2 })
    }
}

#[derive(Debug, Clone)]
pub(crate) struct ConvBn {
    pub conv: Conv,
    pub gamma: ParamId,
    pub beta: ParamId,
    pub mean: ParamId,
    pub var: ParamId,
}

impl ConvBn {
    pub fn new<F: Real>(store: &mut ParamStore<F>, name: &str, cin: usize, cout: usize, k: usize, seed: u64) -> Result<Self> {
        let conv = Conv::new(store, &alloc::format!("{name}.conv"), cin, cout, k, seed)?;
        let gamma = store.insert(&alloc::format!("{name}.bn.gamma"), Tensor::full(&[cout], F::one()), true)?;
        let beta = store.insert(&alloc::format!("{name}.bn.beta"), Tensor::zeros(&[cout]), true)?;
        let mean = store.insert(&alloc::format!("{name}.bn.mean"), Tensor::zeros(&[cout]), false)?;
        let var = store.insert(&alloc::format!("{name}.bn.var"), Tensor::full(&[cout], F::one()), false)?;
        Ok(ConvBn { conv, gamma, beta, mean, var })
    }
}

pub(crate) enum StoreRef<'a, F> {
    Shared(&'a ParamStore<F>),
    Exclusive(&'a mut ParamStore<F>),
}

impl<F: Real> StoreRef<'_, F> {
    fn get(&self, id: ParamId) -> &Tensor<F> {
        match self {
            StoreRef::Shared(s) => s.get(id),
            StoreRef::Exclusive(s) => s.get(id),
        }
    }
}

/// One forward pass: the graph being recorded, the parameters it reads and
/// the leaf each parameter was bound to.
pub(crate) struct Forward<'a, F> {
    pub g: &'a mut Graph<F>,
    store: StoreRef<'a, F>,
    bound: Vec<Option<Var>>,
    pub mode: Mode,
}

impl<'a, F: Real> Forward<'a, F> {
    pub fn new(g: &'a mut Graph<F>, store: StoreRef<'a, F>, mode: Mode) -> Self {
        let n = match &store {
            StoreRef::Shared(s) => s.len(),
            StoreRef::Exclusive(s) => s.len(),
        };
        Forward { g, store, bound: vec![None; n], mode }
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.bound[id.0] {
            return v;
        }
        let t = self.store.get(id).clone();
        let v = self.g.param(t);
        self.bound[id.0] = Some(v);
        v
    }

    pub fn bindings(&self) -> Vec<(ParamId, Var)> {
        self.bound.iter().enumerate().filter_map(|(i, v)| v.map(|v| (ParamId(i), v))).collect()
    }

    pub fn conv(&mut self, c: &Conv, x: Var) -> Result<Var> {
        let (w, b) = (self.param(c.w), self.param(c.b));
        self.g.conv2d(x, w, Some(b), 1, c.pad)
    }

    pub fn conv_bn(&mut self, l: &ConvBn, x: Var) -> Result<Var> {
        self.g.enter("conv");
        let y = self.conv(&l.conv, x);
        self.g.exit();
        let y = y?;
        let (gamma, beta) = (self.param(l.gamma), self.param(l.beta));
        self.g.enter("bn");
        let out = match (self.mode, &mut self.store) {
            (Mode::Train, StoreRef::Exclusive(store)) => {
                let (m, v) = store.pair_mut(l.mean, l.var);
                self.g.batch_norm(y, gamma, beta, BnMode::Train { running_mean: m.data_mut(), running_var: v.data_mut() })
            }
            (Mode::Eval, store) => {
                let (m, v) = (store.get(l.mean).data(), store.get(l.var).data());
                self.g.batch_norm(y, gamma, beta, BnMode::Eval { running_mean: m, running_var: v })
            }
            _ => self.g.batch_norm(y, gamma, beta, BnMode::Batch),
        };
        self.g.exit();
        out
    }
}

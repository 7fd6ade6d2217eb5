use alloc::vec;
use alloc::vec::Vec;

use super::graph::{Node, Saved};
use super::{Graph, OpKind, Real, Tensor, Var};
use crate::error::{dim_err, Result};
use crate::neuron::{self, LifParams};

/// How a spiking residual shortcut combines its two binary operands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MergeRule {
    /// Integer add then clamp to {0, 1}; logical OR on spikes.
    #[default]
    ClampOr,
    /// Plain integer add (membrane-shortcut style); output may reach 2.
    Add,
}

impl<F: Real> Graph<F> {
    /// Multistep LIF over `x[T*B, ...]`, time-major: the first `len / steps`
    /// values are timestep 0 for every sample.
    pub fn mlif(&mut self, x: Var, steps: usize, params: &LifParams) -> Result<Var> {
        if self.shape(x).is_empty() || steps == 0 || !self.shape(x)[0].is_multiple_of(steps) {
            return Err(dim_err!("mlif: leading dim of {:?} is not a multiple of T = {steps}", self.shape(x)));
        }
        let (spikes, h) = neuron::mlif_forward(self.value(x).data(), steps, params)?;
        let value = Tensor::new(self.shape(x), spikes)?;
        self.push(value, OpKind::Mlif, vec![x], Saved::Lif { h, steps, params: *params })
    }

    pub(super) fn mlif_backward(&self, node: &Node<F>, gout: &[F], grads: &mut [Option<Vec<F>>]) -> Result<()> {
        let Saved::Lif { ref h, steps, ref params } = node.saved else { unreachable!() };
        let dx = neuron::lif_backward(h, node.value.data(), gout, steps, params)?;
        self.accumulate(grads, node.inputs[0], dx);
        Ok(())
    }

    /// Spiking residual shortcut `a (+) b`.
    pub fn residual_merge(&mut self, a: Var, b: Var, rule: MergeRule) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(dim_err!("residual merge: {:?} vs {:?}", self.shape(a), self.shape(b)));
        }
        match rule {
            MergeRule::Add => self.add(a, b),
            MergeRule::ClampOr => {
                let out: Vec<F> = self
                    .value(a)
                    .data()
                    .iter()
                    .zip(self.value(b).data())
                    .map(|(&x, &y)| (x + y).max(F::zero()).min(F::one()))
                    .collect();
                let value = Tensor::new(self.shape(a), out)?;
                self.push(value, OpKind::ResidualMerge, vec![a, b], Saved::None)
            }
        }
    }

    /// Firing rate over time: `x[T*B, ...] -> [B, ...]`, mean (or sum) over T.
    pub fn rate_encode(&mut self, x: Var, steps: usize, sum: bool) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if shape.is_empty() || steps == 0 || !shape[0].is_multiple_of(steps) {
            return Err(dim_err!("rate_encode: leading dim of {:?} is not a multiple of T = {steps}", shape));
        }
        let xd = self.value(x).data();
        let per = xd.len() / steps;
        let mut out = vec![F::zero(); per];
        for t in 0..steps {
            out.iter_mut().zip(&xd[t * per..(t + 1) * per]).for_each(|(o, &v)| *o += v);
        }
        if !sum {
            let inv = F::of(1.0 / steps as f64);
            out.iter_mut().for_each(|o| *o *= inv);
        }
        let mut oshape = shape;
        oshape[0] /= steps;
        self.push(Tensor::new(&oshape, out)?, OpKind::RateEncode, vec![x], Saved::Rate { steps, sum })
    }

    pub(super) fn rate_encode_backward(&self, node: &Node<F>, gout: &[F], grads: &mut [Option<Vec<F>>]) -> Result<()> {
        let Saved::Rate { steps, sum } = node.saved else { unreachable!() };
        let k = if sum { F::one() } else { F::of(1.0 / steps as f64) };
        let mut dx = Vec::with_capacity(gout.len() * steps);
        for _ in 0..steps {
            dx.extend(gout.iter().map(|&g| g * k));
        }
        self.accumulate(grads, node.inputs[0], dx);
        Ok(())
    }
}

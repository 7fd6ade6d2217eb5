use alloc::vec;
use alloc::vec::Vec;

use super::graph::{Node, Saved};
use super::{Graph, OpKind, Real, Tensor, Var};
use crate::error::{dim_err, Error, Result};

/// Options of the residual-variance depth loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SiL2Options {
    /// Weight of the `mean(r)^2` term: 1 gives the pure variance form.
    pub mean_weight: f64,
    /// Compare `ln` depths instead of depths.
    pub log_domain: bool,
    /// Floor applied before `ln`.
    pub eps: f64,
}

impl Default for SiL2Options {
    fn default() -> Self {
        SiL2Options { mean_weight: 1.0, log_domain: false, eps: 1e-6 }
    }
}

impl<F: Real> Graph<F> {
    /// Mean squared difference over all elements.
    pub fn mse(&mut self, x: Var, target: Var) -> Result<Var> {
        if self.shape(x) != self.shape(target) {
            return Err(dim_err!("mse: {:?} vs {:?}", self.shape(x), self.shape(target)));
        }
        let n = self.value(x).len();
        if n == 0 {
            return Err(dim_err!("mse of empty tensors"));
        }
        let s: F = self.value(x).data().iter().zip(self.value(target).data()).map(|(&a, &b)| (a - b) * (a - b)).sum();
        self.push(Tensor::scalar(s / F::of(n as f64)), OpKind::Mse, vec![x, target], Saved::None)
    }

    pub(super) fn mse_backward(&self, node: &Node<F>, gout: &[F], grads: &mut [Option<Vec<F>>]) -> Result<()> {
        let (x, t) = (node.inputs[0], node.inputs[1]);
        let (xd, td) = (self.value(x).data(), self.value(t).data());
        let k = gout[0] * F::of(2.0 / xd.len() as f64);
        let d: Vec<F> = xd.iter().zip(td).map(|(&a, &b)| k * (a - b)).collect();
        if self.needs(t) {
            self.accumulate(grads, t, d.iter().map(|&v| -v).collect());
        }
        self.accumulate(grads, x, d);
        Ok(())
    }

    /// Per-sample `mean(r^2) - w * mean(r)^2` with `r = gt - pred` over valid
    /// pixels, averaged over the leading batch axis.
    pub fn si_l2(&mut self, pred: Var, gt: &Tensor<F>, mask: &[bool], opts: SiL2Options) -> Result<Var> {
        let shape = self.shape(pred);
        if shape != gt.shape() || mask.len() != gt.len() || shape.is_empty() {
            return Err(dim_err!("si_l2: pred {:?}, gt {:?}, mask {}", shape, gt.shape(), mask.len()));
        }
        let batch = shape[0];
        let per = gt.len() / batch.max(1);
        let pd = self.value(pred).data();
        let eps = F::of(opts.eps);
        let wmean = F::of(opts.mean_weight);
        let mut total = F::zero();
        let mut grad = vec![F::zero(); pd.len()];
        let inv_b = F::of(1.0 / batch as f64);
        for b in 0..batch {
            let r = b * per..(b + 1) * per;
            let n = mask[r.clone()].iter().filter(|&&m| m).count();
            if n == 0 {
                return Err(Error::EmptyMask);
            }
            let nf = F::of(n as f64);
            let resid = |i: usize| -> F {
                if opts.log_domain {
                    gt.data()[i].max(eps).ln() - pd[i].max(eps).ln()
                } else {
                    gt.data()[i] - pd[i]
                }
            };
            let (mut s1, mut s2) = (F::zero(), F::zero());
            for i in r.clone().filter(|&i| mask[i]) {
                let ri = resid(i);
                s1 += ri;
                s2 += ri * ri;
            }
            let mean_r = s1 / nf;
            total += (s2 / nf - wmean * mean_r * mean_r) * inv_b;
            for i in r.filter(|&i| mask[i]) {
                // dL/dr_i = 2 (r_i - w mean_r) / n ; dr_i/dpred_i = -g'(pred_i)
                let dr = F::of(2.0) * (resid(i) - wmean * mean_r) / nf * inv_b;
                let dpred = if opts.log_domain {
                    if pd[i] > eps { -F::one() / pd[i] } else { F::zero() }
                } else {
                    -F::one()
                };
                grad[i] = dr * dpred;
            }
        }
        self.push(Tensor::scalar(total), OpKind::SiL2, vec![pred], Saved::SiL2 { grad })
    }

    pub(super) fn si_l2_backward(&self, node: &Node<F>, gout: &[F], grads: &mut [Option<Vec<F>>]) -> Result<()> {
        let Saved::SiL2 { ref grad } = node.saved else { unreachable!() };
        self.accumulate(grads, node.inputs[0], grad.iter().map(|&g| g * gout[0]).collect());
        Ok(())
    }
}

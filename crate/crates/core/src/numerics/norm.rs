use alloc::vec;

use super::graph::{Node, Saved};
use super::{Graph, OpKind, Real, Tensor, Var};
use crate::error::{dim_err, Result};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Which statistics a batch-norm op normalizes with.
pub enum BnMode<'a, F> {
    /// Batch statistics; running buffers updated with momentum 0.1.
    Train { running_mean: &'a mut [F], running_var: &'a mut [F] },
    /// Batch statistics without touching any running buffer.
    Batch,
    /// Running statistics.
    Eval { running_mean: &'a [F], running_var: &'a [F] },
}

/// `(N, C, inner)` for a tensor with channels on axis 1.
fn layout(shape: &[usize]) -> Result<(usize, usize, usize)> {
    if shape.len() < 2 {
        return Err(dim_err!("batchnorm input needs at least 2 dims, got {:?}", shape));
    }
    let inner: usize = shape[2..].iter().product();
    Ok((shape[0], shape[1], inner))
}

impl<F: Real> Graph<F> {
    /// Per-channel normalization over every axis except axis 1, eps = 1e-5.
    pub fn batch_norm(&mut self, x: Var, gamma: Var, beta: Var, mode: BnMode<'_, F>) -> Result<Var> {
        let (n, c, inner) = layout(self.shape(x))?;
        let m = n * inner;
        if c == 0 || m == 0 {
            return Err(dim_err!("batchnorm over zero-size channel (shape {:?})", self.shape(x)));
        }
        if self.shape(gamma) != [c] || self.shape(beta) != [c] {
            return Err(dim_err!("batchnorm parameters must be [{c}]"));
        }
        let xd = self.value(x).data();
        let eps = F::of(BN_EPS);
        let mut mean = vec![F::zero(); c];
        let mut var = vec![F::zero(); c];
        let batch_stats = !matches!(mode, BnMode::Eval { .. });
        match &mode {
            BnMode::Eval { running_mean, running_var } => {
                if running_mean.len() != c || running_var.len() != c {
                    return Err(dim_err!("running statistics must have {c} channels"));
                }
                mean.copy_from_slice(running_mean);
                var.copy_from_slice(running_var);
            }
            _ => {
                let mf = F::of(m as f64);
                for b in 0..n {
                    for ch in 0..c {
                        let s: F = xd[(b * c + ch) * inner..][..inner].iter().copied().sum();
                        mean[ch] += s;
                    }
                }
                mean.iter_mut().for_each(|v| *v /= mf);
                for b in 0..n {
                    for ch in 0..c {
                        let mu = mean[ch];
                        let s: F = xd[(b * c + ch) * inner..][..inner].iter().map(|&v| (v - mu) * (v - mu)).sum();
                        var[ch] += s;
                    }
                }
                var.iter_mut().for_each(|v| *v /= mf);
            }
        }
        if let BnMode::Train { running_mean, running_var } = mode {
            if running_mean.len() != c || running_var.len() != c {
                return Err(dim_err!("running statistics must have {c} channels"));
            }
            let mom = F::of(BN_MOMENTUM);
            let unbias = if m > 1 { F::of(m as f64 / (m - 1) as f64) } else { F::one() };
            for ch in 0..c {
                running_mean[ch] = (F::one() - mom) * running_mean[ch] + mom * mean[ch];
                running_var[ch] = (F::one() - mom) * running_var[ch] + mom * var[ch] * unbias;
            }
        }
        let inv_std: alloc::vec::Vec<F> = var.iter().map(|&v| F::one() / (v + eps).sqrt()).collect();
        let gd = self.value(gamma).data();
        let bd = self.value(beta).data();
        let mut xhat = vec![F::zero(); xd.len()];
        let mut out = vec![F::zero(); xd.len()];
        for b in 0..n {
            for ch in 0..c {
                let off = (b * c + ch) * inner;
                for i in off..off + inner {
                    let h = (xd[i] - mean[ch]) * inv_std[ch];
                    xhat[i] = h;
                    out[i] = gd[ch] * h + bd[ch];
                }
            }
        }
        let value = Tensor::new(self.shape(x), out)?;
        self.push(value, OpKind::BatchNorm, vec![x, gamma, beta], Saved::Norm { xhat, inv_std, batch_stats })
    }

    pub(super) fn batch_norm_backward(&self, node: &Node<F>, gout: &[F], grads: &mut [Option<alloc::vec::Vec<F>>]) -> Result<()> {
        let Saved::Norm { ref xhat, ref inv_std, batch_stats } = node.saved else { unreachable!() };
        let (x, gamma, beta) = (node.inputs[0], node.inputs[1], node.inputs[2]);
        let (n, c, inner) = layout(self.shape(x))?;
        let mut dgamma = vec![F::zero(); c];
        let mut dbeta = vec![F::zero(); c];
        for b in 0..n {
            for ch in 0..c {
                let off = (b * c + ch) * inner;
                for i in off..off + inner {
                    dgamma[ch] += gout[i] * xhat[i];
                    dbeta[ch] += gout[i];
                }
            }
        }
        if self.needs(x) {
            let gd = self.value(gamma).data();
            let mut dx = vec![F::zero(); gout.len()];
            let mf = F::of((n * inner) as f64);
            for ch in 0..c {
                let k = gd[ch] * inv_std[ch];
                let (sum_dy, sum_dy_xhat) = (dbeta[ch], dgamma[ch]);
                for b in 0..n {
                    let off = (b * c + ch) * inner;
                    for i in off..off + inner {
                        dx[i] = if batch_stats {
                            k * (gout[i] - sum_dy / mf - xhat[i] * sum_dy_xhat / mf)
                        } else {
                            k * gout[i]
                        };
                    }
                }
            }
            self.accumulate(grads, x, dx);
        }
        self.accumulate(grads, gamma, dgamma);
        self.accumulate(grads, beta, dbeta);
        Ok(())
    }
}

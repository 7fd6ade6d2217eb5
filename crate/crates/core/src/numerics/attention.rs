use alloc::vec;
use alloc::vec::Vec;

use super::graph::{Node, Saved};
use super::{gemm, Graph, Mat, OpKind, Real, Tensor, Var};
use crate::error::{dim_err, Result};

impl<F: Real> Graph<F> {
    /// Softmax-free attention product `s * (Q K^T) V` per leading index.
    ///
    /// Operands are `[M, D, h, w]` with tokens `N = h * w` laid out
    /// channel-major, i.e. each slice `[D, N]` is the transpose of the usual
    /// token matrix. The result has the same layout.
    pub fn attention_product(&mut self, q: Var, k: Var, v: Var, scale: F) -> Result<Var> {
        let shape = self.shape(q).to_vec();
        if shape.len() != 4 {
            return Err(dim_err!("attention operands must be [M, D, h, w], got {:?}", shape));
        }
        if self.shape(k) != &shape[..] || self.shape(v) != &shape[..] {
            return Err(dim_err!("attention operands must share one shape"));
        }
        let (m, d, n) = (shape[0], shape[1], shape[2] * shape[3]);
        let (qd, kd, vd) = (self.value(q).data(), self.value(k).data(), self.value(v).data());
        let mut scores = vec![F::zero(); m * n * n];
        let mut out = vec![F::zero(); m * d * n];
        for b in 0..m {
            let sl = b * d * n..(b + 1) * d * n;
            let a = &mut scores[b * n * n..(b + 1) * n * n];
            // A[i, j] = sum_d Q[d, i] K[d, j]
            gemm(F::one(), Mat::t(&qd[sl.clone()], d, n), Mat::new(&kd[sl.clone()], d, n), F::zero(), a);
            // out[d, i] = s * sum_j V[d, j] A[i, j]
            gemm(scale, Mat::new(&vd[sl.clone()], d, n), Mat::t(a, n, n), F::zero(), &mut out[sl]);
        }
        let value = Tensor::new(&shape, out)?;
        self.push(value, OpKind::Attention, vec![q, k, v], Saved::Attn { scores, scale })
    }

    pub(super) fn attention_backward(&self, node: &Node<F>, gout: &[F], grads: &mut [Option<Vec<F>>]) -> Result<()> {
        let Saved::Attn { ref scores, scale } = node.saved else { unreachable!() };
        let (q, k, v) = (node.inputs[0], node.inputs[1], node.inputs[2]);
        let shape = self.shape(q);
        let (m, d, n) = (shape[0], shape[1], shape[2] * shape[3]);
        let (qd, kd, vd) = (self.value(q).data(), self.value(k).data(), self.value(v).data());
        let mut dq = vec![F::zero(); qd.len()];
        let mut dk = vec![F::zero(); kd.len()];
        let mut dv = vec![F::zero(); vd.len()];
        let mut da = vec![F::zero(); n * n];
        for b in 0..m {
            let sl = b * d * n..(b + 1) * d * n;
            let go = &gout[sl.clone()];
            let a = &scores[b * n * n..(b + 1) * n * n];
            if self.needs(v) {
                gemm(scale, Mat::new(go, d, n), Mat::new(a, n, n), F::zero(), &mut dv[sl.clone()]);
            }
            if self.needs(q) || self.needs(k) {
                // dA[i, j] = s * sum_d dOut[d, i] V[d, j]
                gemm(scale, Mat::t(go, d, n), Mat::new(&vd[sl.clone()], d, n), F::zero(), &mut da);
                gemm(F::one(), Mat::new(&kd[sl.clone()], d, n), Mat::t(&da, n, n), F::zero(), &mut dq[sl.clone()]);
                gemm(F::one(), Mat::new(&qd[sl.clone()], d, n), Mat::new(&da, n, n), F::zero(), &mut dk[sl.clone()]);
            }
        }
        self.accumulate(grads, q, dq);
        self.accumulate(grads, k, dk);
        self.accumulate(grads, v, dv);
        Ok(())
    }
}

use alloc::vec;
use alloc::vec::Vec;

use super::graph::{Node, Saved};
use super::{gemm, Graph, Mat, OpKind, Real, Tensor, Var};
use crate::error::{dim_err, Result};

impl<F: Real> Graph<F> {
    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(dim_err!("{what}: shapes {:?} and {:?} differ", self.shape(a), self.shape(b)));
        }
        Ok(())
    }

    fn zip_with(&mut self, a: Var, b: Var, kind: OpKind, f: impl Fn(F, F) -> F) -> Result<Var> {
        self.same_shape(a, b, kind.name())?;
        let out: Vec<F> = self.value(a).data().iter().zip(self.value(b).data()).map(|(&x, &y)| f(x, y)).collect();
        let value = Tensor::new(self.shape(a), out)?;
        self.push(value, kind, vec![a, b], Saved::None)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, OpKind::Add, |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, OpKind::Sub, |x, y| x - y)
    }

    /// Elementwise product. Never used between two spike tensors in the backbone.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, OpKind::Mul, |x, y| x * y)
    }

    pub fn scale(&mut self, x: Var, s: F) -> Result<Var> {
        let out: Vec<F> = self.value(x).data().iter().map(|&v| v * s).collect();
        let value = Tensor::new(self.shape(x), out)?;
        self.push(value, OpKind::Scale, vec![x], Saved::Scale(s))
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let out: Vec<F> = self.value(x).data().iter().map(|&v| F::one() / (F::one() + (-v).exp())).collect();
        let value = Tensor::new(self.shape(x), out)?;
        self.push(value, OpKind::Sigmoid, vec![x], Saved::None)
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s: F = self.value(x).data().iter().copied().sum();
        self.push(Tensor::scalar(s), OpKind::Sum, vec![x], Saved::None)
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let n = self.value(x).len();
        if n == 0 {
            return Err(dim_err!("mean of an empty tensor"));
        }
        let s: F = self.value(x).data().iter().copied().sum();
        self.push(Tensor::scalar(s / F::of(n as f64)), OpKind::Mean, vec![x], Saved::None)
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).clone().reshape(shape)?;
        self.push(value, OpKind::Reshape, vec![x], Saved::None)
    }

    /// 2-d matrix product `a[m,k] * b[k,n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = match *self.shape(a) {
            [m, k] => (m, k),
            ref s => return Err(dim_err!("matmul lhs must be 2-d, got {:?}", s)),
        };
        let (k2, n) = match *self.shape(b) {
            [k2, n] => (k2, n),
            ref s => return Err(dim_err!("matmul rhs must be 2-d, got {:?}", s)),
        };
        if k != k2 {
            return Err(dim_err!("matmul inner dimensions differ: {k} vs {k2}"));
        }
        let mut out = vec![F::zero(); m * n];
        gemm(F::one(), Mat::new(self.value(a).data(), m, k), Mat::new(self.value(b).data(), k, n), F::zero(), &mut out);
        self.push(Tensor::new(&[m, n], out)?, OpKind::Matmul, vec![a, b], Saved::None)
    }

    pub(super) fn matmul_backward(&self, node: &Node<F>, gout: &[F], grads: &mut [Option<Vec<F>>]) -> Result<()> {
        let (a, b) = (node.inputs[0], node.inputs[1]);
        let [m, k] = [self.shape(a)[0], self.shape(a)[1]];
        let n = self.shape(b)[1];
        if self.needs(a) {
            let mut da = vec![F::zero(); m * k];
            gemm(F::one(), Mat::new(gout, m, n), Mat::t(self.value(b).data(), k, n), F::zero(), &mut da);
            self.accumulate(grads, a, da);
        }
        if self.needs(b) {
            let mut db = vec![F::zero(); k * n];
            gemm(F::one(), Mat::t(self.value(a).data(), m, k), Mat::new(gout, m, n), F::zero(), &mut db);
            self.accumulate(grads, b, db);
        }
        Ok(())
    }

    pub(super) fn pointwise_backward(&self, node: &Node<F>, gout: &[F], grads: &mut [Option<Vec<F>>]) -> Result<()> {
        let ins = &node.inputs;
        match node.kind {
            OpKind::Add => {
                self.accumulate(grads, ins[0], gout.to_vec());
                self.accumulate(grads, ins[1], gout.to_vec());
            }
            // Straight-through on both branches; the clamp has no useful derivative.
            OpKind::ResidualMerge => {
                self.accumulate(grads, ins[0], gout.to_vec());
                self.accumulate(grads, ins[1], gout.to_vec());
            }
            OpKind::Sub => {
                self.accumulate(grads, ins[0], gout.to_vec());
                self.accumulate(grads, ins[1], gout.iter().map(|&g| -g).collect());
            }
            OpKind::Mul => {
                let (a, b) = (self.value(ins[0]).data(), self.value(ins[1]).data());
                if self.needs(ins[0]) {
                    self.accumulate(grads, ins[0], gout.iter().zip(b).map(|(&g, &y)| g * y).collect());
                }
                if self.needs(ins[1]) {
                    self.accumulate(grads, ins[1], gout.iter().zip(a).map(|(&g, &x)| g * x).collect());
                }
            }
            OpKind::Scale => {
                let Saved::Scale(s) = node.saved else { unreachable!() };
                self.accumulate(grads, ins[0], gout.iter().map(|&g| g * s).collect());
            }
            OpKind::Sigmoid => {
                let y = node.value.data();
                self.accumulate(grads, ins[0], gout.iter().zip(y).map(|(&g, &s)| g * s * (F::one() - s)).collect());
            }
            OpKind::Sum => {
                let n = self.value(ins[0]).len();
                self.accumulate(grads, ins[0], vec![gout[0]; n]);
            }
            OpKind::Mean => {
                let n = self.value(ins[0]).len();
                self.accumulate(grads, ins[0], vec![gout[0] / F::of(n as f64); n]);
            }
            OpKind::Reshape => self.accumulate(grads, ins[0], gout.to_vec()),
            other => unreachable!("no pointwise backward for {}", other.name()),
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_matmul() {
        let mut g = Graph::<f64>::new();
        let i = g.constant(Tensor::from_f64(&[2, 2], &[1., 0., 0., 1.]).unwrap());
        let a = g.constant(Tensor::from_f64(&[2, 2], &[3., -1., 2.5, 7.]).unwrap());
        let y = g.matmul(i, a).unwrap();
        assert_eq!(g.value(y).data(), &[3., -1., 2.5, 7.]);
        let bad = g.constant(Tensor::zeros(&[3, 2]));
        assert!(matches!(g.matmul(a, bad), Err(crate::Error::Dimension(_))));
    }

    #[test]
    fn sigmoid_at_zero() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::zeros(&[3]));
        let y = g.sigmoid(x).unwrap();
        assert!(g.value(y).data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn no_silent_broadcasting() {
        let mut g = Graph::<f64>::new();
        let a = g.constant(Tensor::zeros(&[2, 3]));
        let b = g.constant(Tensor::zeros(&[3]));
        assert!(g.add(a, b).is_err());
        assert!(g.mul(a, b).is_err());
    }

    #[test]
    fn sum_and_square_gradients() {
        let mut g = Graph::<f64>::new();
        let x = g.input(Tensor::from_f64(&[2], &[1.0, 2.0]).unwrap(), true);
        let s = g.sum(x).unwrap();
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[1.0, 1.0]);

        let mut g = Graph::<f64>::new();
        let x = g.input(Tensor::from_f64(&[2], &[1.0, 2.0]).unwrap(), true);
        let sq = g.mul(x, x).unwrap();
        let s = g.sum(sq).unwrap();
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[2.0, 4.0]);
    }

    #[test]
    fn second_backward_is_stale() {
        let mut g = Graph::<f64>::new();
        let x = g.input(Tensor::from_f64(&[2], &[1.0, 2.0]).unwrap(), true);
        let s = g.sum(x).unwrap();
        g.backward(s).unwrap();
        assert_eq!(g.backward(s).unwrap_err(), crate::Error::StaleTape);
        assert_eq!(g.sum(x).unwrap_err(), crate::Error::StaleTape);
    }

    #[test]
    fn non_finite_output_is_numeric_error() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::from_f64(&[1], &[f64::MAX]).unwrap());
        assert!(matches!(g.scale(x, 10.0), Err(crate::Error::Numeric(_))));
    }
}

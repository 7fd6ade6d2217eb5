//! Central finite-difference checks of reverse-mode gradients.

use alloc::vec::Vec;

use super::{Graph, Tensor, Var};
use crate::error::Result;

/// Denominator floor of [`rel_error`].
pub const REL_FLOOR: f64 = 1e-6;

/// `|a - n| / max(|a|, |n|, REL_FLOOR)`.
pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Tally of compared coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GradCheck {
    pub coords: usize,
    /// Coordinates within the tolerance the check ran with.
    pub within: usize,
    pub worst: f64,
}

impl GradCheck {
    pub fn record(&mut self, analytic: f64, numeric: f64, tol: f64) {
        let e = rel_error(analytic, numeric);
        self.coords += 1;
        self.within += (e <= tol) as usize;
        self.worst = self.worst.max(e);
    }

    pub fn merge(&mut self, o: &GradCheck) {
        self.coords += o.coords;
        self.within += o.within;
        self.worst = self.worst.max(o.worst);
    }

    pub fn fraction_within(&self) -> f64 {
        if self.coords == 0 {
            1.0
        } else {
            self.within as f64 / self.coords as f64
        }
    }
}

/// Fixed projection weights that turn any output into a scalar loss with
/// non-uniform upstream gradient.
fn probe(n: usize) -> Vec<f64> {
    (0..n).map(|i| num_traits::Float::sin(1.37 * i as f64 + 0.61) + 0.25).collect()
}

fn scalar_of(f: &impl Fn(&mut Graph<f64>, &[Var]) -> Result<Var>, inputs: &[Tensor<f64>], grad: bool) -> Result<(Graph<f64>, Vec<Var>, Var)> {
    let mut g = if grad { Graph::new() } else { Graph::inference() };
    let vars: Vec<Var> = inputs.iter().map(|t| g.input(t.clone(), true)).collect();
    let y = f(&mut g, &vars)?;
    let p = g.constant(Tensor::new(g.shape(y), probe(g.value(y).len()))?);
    let yp = g.mul(y, p)?;
    let loss = g.sum(yp)?;
    Ok((g, vars, loss))
}

/// Compare autodiff against central differences with step `h` for every
/// coordinate of every input of `f`.
pub fn check_op(inputs: &[Tensor<f64>], h: f64, tol: f64, f: impl Fn(&mut Graph<f64>, &[Var]) -> Result<Var>) -> Result<GradCheck> {
    let (mut g, vars, loss) = scalar_of(&f, inputs, true)?;
    let grads = g.backward(loss)?;
    let mut out = GradCheck::default();
    let mut work: Vec<Tensor<f64>> = inputs.to_vec();
    for (j, &v) in vars.iter().enumerate() {
        let analytic = grads.get(v).map(|t| t.data().to_vec()).unwrap_or_default();
        for i in 0..inputs[j].len() {
            let x0 = inputs[j].data()[i];
            work[j].data_mut()[i] = x0 + h;
            let (gp, _, lp) = scalar_of(&f, &work, false)?;
            work[j].data_mut()[i] = x0 - h;
            let (gm, _, lm) = scalar_of(&f, &work, false)?;
            work[j].data_mut()[i] = x0;
            let numeric = (gp.value(lp).item() - gm.value(lm).item()) / (2.0 * h);
            out.record(analytic.get(i).copied().unwrap_or(0.0), numeric, tol);
        }
    }
    Ok(out)
}

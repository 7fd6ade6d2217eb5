//! Leaky integrate-and-fire neurons in multistep form.
//!
//! The membrane follows `dv/dt = I - v/tau` discretized with explicit Euler
//! at unit step, `v <- v + (I - v) / tau`, with a hard reset to `v_reset`
//! after a spike. Training replaces the Heaviside derivative by an arctan
//! surrogate; the reset path carries no gradient.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{cfg_err, dim_err, Error, Result};
use crate::numerics::{Real, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LifParams {
    /// Membrane time constant in steps.
    pub tau: f64,
    pub v_threshold: f64,
    pub v_reset: f64,
    /// Sharpness of the arctan surrogate.
    pub surrogate_alpha: f64,
}

impl Default for LifParams {
    fn default() -> Self {
        LifParams { tau: 2.0, v_threshold: 1.0, v_reset: 0.0, surrogate_alpha: 2.0 }
    }
}

impl LifParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau >= 1.0) {
            return Err(cfg_err!("lif tau must be >= 1.0, got {}", self.tau));
        }
        if !(self.v_threshold > self.v_reset) {
            return Err(cfg_err!("lif v_threshold ({}) must exceed v_reset ({})", self.v_threshold, self.v_reset));
        }
        if !(self.surrogate_alpha > 0.0) {
            return Err(cfg_err!("surrogate_alpha must be positive"));
        }
        Ok(())
    }

    /// Arctan surrogate `alpha / (2 (1 + (pi alpha x / 2)^2))` at `x = v - threshold`.
    pub fn surrogate(&self, x: f64) -> f64 {
        let a = self.surrogate_alpha;
        let z = PI * a * x / 2.0;
        a / (2.0 * (1.0 + z * z))
    }
}

/// Membrane potential carried between steps of one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct LifState<F> {
    pub v: Tensor<F>,
}

impl<F: Real> LifState<F> {
    /// Fresh state at `v_reset`.
    pub fn new(shape: &[usize], params: &LifParams) -> Self {
        LifState { v: Tensor::full(shape, F::of(params.v_reset)) }
    }

    pub fn reset(&mut self, params: &LifParams) {
        self.v.data_mut().fill(F::of(params.v_reset));
    }
}

/// One Euler step. Returns the binary spike plane; `state` holds the
/// post-reset potential afterwards.
pub fn lif_step<F: Real>(state: &mut LifState<F>, input: &Tensor<F>, params: &LifParams) -> Result<Tensor<F>> {
    if state.v.shape() != input.shape() {
        return Err(dim_err!("lif state {:?} vs input {:?}", state.v.shape(), input.shape()));
    }
    input.check_finite("lif input")?;
    let mut spikes = vec![F::zero(); input.len()];
    let mut pre = vec![F::zero(); input.len()];
    step_slice(state.v.data_mut(), input.data(), &mut spikes, &mut pre, params);
    Tensor::new(input.shape(), spikes)
}

#[inline]
fn step_slice<F: Real>(v: &mut [F], input: &[F], spikes: &mut [F], pre: &mut [F], p: &LifParams) {
    let inv_tau = F::of(1.0 / p.tau);
    let (theta, reset) = (F::of(p.v_threshold), F::of(p.v_reset));
    for i in 0..v.len() {
        let h = v[i] + (input[i] - v[i]) * inv_tau;
        pre[i] = h;
        if h >= theta {
            spikes[i] = F::one();
            v[i] = reset;
        } else {
            spikes[i] = F::zero();
            v[i] = h;
        }
    }
}

/// Multistep LIF over a buffer whose leading `steps` blocks are timesteps.
///
/// Returns `(spikes, pre_reset_membrane)`, both the size of `x`.
pub fn mlif_forward<F: Real>(x: &[F], steps: usize, params: &LifParams) -> Result<(Vec<F>, Vec<F>)> {
    if steps == 0 || !x.len().is_multiple_of(steps) {
        return Err(dim_err!("mlif: {} values cannot be split into {} timesteps", x.len(), steps));
    }
    if !x.iter().all(|v| v.is_finite()) {
        return Err(Error::Numeric("non-finite input current to mlif".into()));
    }
    let per = x.len() / steps;
    let mut v = vec![F::of(params.v_reset); per];
    let mut spikes = vec![F::zero(); x.len()];
    let mut pre = vec![F::zero(); x.len()];
    for t in 0..steps {
        let r = t * per..(t + 1) * per;
        step_slice(&mut v, &x[r.clone()], &mut spikes[r.clone()], &mut pre[r], params);
    }
    Ok((spikes, pre))
}

/// Multistep LIF over `x[T, ...]` with fresh state at the first step.
pub fn mlif<F: Real>(x: &Tensor<F>, params: &LifParams) -> Result<Tensor<F>> {
    let steps = *x.shape().first().ok_or_else(|| dim_err!("mlif needs a leading time axis"))?;
    if steps == 0 {
        return Err(dim_err!("mlif over T = 0"));
    }
    let (spikes, _) = mlif_forward(x.data(), steps, params)?;
    Tensor::new(x.shape(), spikes)
}

/// Gradient of the multistep LIF w.r.t. its input currents.
///
/// `pre` is the saved pre-reset membrane, `spikes` the forward output and
/// `upstream` the gradient w.r.t. the spikes. Walks time backwards through
/// `h_t = (1 - 1/tau) v_{t-1} + x_t / tau` and `v_t = h_t (1 - s_t) + v_reset s_t`
/// with `s_t` detached in the reset term.
pub fn lif_backward<F: Real>(pre: &[F], spikes: &[F], upstream: &[F], steps: usize, params: &LifParams) -> Result<Vec<F>> {
    if pre.len() != upstream.len() || spikes.len() != upstream.len() || steps == 0 || !pre.len().is_multiple_of(steps) {
        return Err(dim_err!("lif_backward: inconsistent buffer sizes"));
    }
    let per = pre.len() / steps;
    let inv_tau = F::of(1.0 / params.tau);
    let decay = F::one() - inv_tau;
    let theta = params.v_threshold;
    let mut dv = vec![F::zero(); per];
    let mut dx = vec![F::zero(); pre.len()];
    for t in (0..steps).rev() {
        let off = t * per;
        for i in 0..per {
            let j = off + i;
            let sg = F::of(params.surrogate(pre[j].as_f64() - theta));
            let dh = upstream[j] * sg + dv[i] * (F::one() - spikes[j]);
            dx[j] = dh * inv_tau;
            dv[i] = dh * decay;
        }
    }
    Ok(dx)
}

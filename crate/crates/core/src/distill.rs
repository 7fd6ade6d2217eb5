//! Distillation and depth losses.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::data::DepthMap;
use crate::error::{cfg_err, dim_err, Error, Result};
use crate::model::Outputs;
use crate::numerics::{Graph, Real, SiL2Options, Tensor, Var};

/// Loss weights and the student blocks matched to teacher features.
#[derive(Debug, Clone, PartialEq)]
pub struct DistillConfig {
    pub lambda_p: f64,
    pub lambda_2: f64,
    /// 1-based student block indices compared against the teacher.
    pub matched_blocks: Vec<usize>,
    /// Teacher feature width d.
    pub teacher_dim: usize,
    /// Share of the squared mean residual kept in the training objective:
    /// the depth term is `mean(r^2) - (1 - anchor) mean(r)^2`. 0 is the pure
    /// scale-invariant loss.
    pub anchor: f64,
    /// Compare log depths instead of depths.
    pub log_domain: bool,
}

impl Default for DistillConfig {
    fn default() -> Self {
        DistillConfig { lambda_p: 1.0, lambda_2: 1.0, matched_blocks: vec![4], teacher_dim: 16, anchor: 0.5, log_domain: false }
    }
}

impl DistillConfig {
    pub fn validate(&self, blocks: usize) -> Result<()> {
        if !(self.lambda_p >= 0.0 && self.lambda_2 >= 0.0) {
            return Err(cfg_err!("loss weights must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.anchor) {
            return Err(cfg_err!("anchor must lie in [0, 1], got {}", self.anchor));
        }
        if let Some(&b) = self.matched_blocks.iter().find(|&&b| b == 0 || b > blocks) {
            return Err(cfg_err!("matched block {b} outside 1..={blocks}"));
        }
        if self.lambda_p > 0.0 && !self.matched_blocks.is_empty() && self.teacher_dim == 0 {
            return Err(cfg_err!("teacher_dim must be positive"));
        }
        Ok(())
    }

    /// Whether the perceptual term takes part in training.
    pub fn kd_active(&self) -> bool {
        self.lambda_p > 0.0 && !self.matched_blocks.is_empty()
    }

    fn si_options(&self) -> SiL2Options {
        SiL2Options { mean_weight: 1.0 - self.anchor, log_domain: self.log_domain, eps: 1e-6 }
    }
}

/// `||x - x'||^2 / (C H W)`.
pub fn perceptual_loss<F: Real>(x: &Tensor<F>, teacher: &Tensor<F>) -> Result<f64> {
    if x.shape() != teacher.shape() {
        return Err(dim_err!("perceptual loss: {:?} vs {:?}", x.shape(), teacher.shape()));
    }
    if x.is_empty() {
        return Err(dim_err!("perceptual loss of empty tensors"));
    }
    let s: f64 = x.data().iter().zip(teacher.data()).map(|(&a, &b)| (a.as_f64() - b.as_f64()).powi(2)).sum();
    Ok(s / x.len() as f64)
}

/// Residual statistics `(n, mean(r), mean(r^2))` with `r = gt - pred` over
/// jointly valid pixels.
fn residual_moments(pred: &DepthMap, gt: &DepthMap, log: bool) -> Result<(usize, f64, f64)> {
    if pred.h() != gt.h() || pred.w() != gt.w() {
        return Err(dim_err!("depth maps {}x{} vs {}x{}", pred.h(), pred.w(), gt.h(), gt.w()));
    }
    let (mut n, mut s1, mut s2) = (0usize, 0.0, 0.0);
    let f = |v: f32| if log { (v as f64).max(1e-6).ln() } else { v as f64 };
    for i in 0..gt.values().len() {
        if pred.mask()[i] && gt.mask()[i] {
            let r = f(gt.values()[i]) - f(pred.values()[i]);
            n += 1;
            s1 += r;
            s2 += r * r;
        }
    }
    if n == 0 {
        return Err(Error::EmptyMask);
    }
    Ok((n, s1 / n as f64, s2 / n as f64))
}

/// Scale-invariant L2: the population variance of `gt - pred` over jointly
/// valid pixels.
pub fn si_l2_loss(pred: &DepthMap, gt: &DepthMap) -> Result<f64> {
    let (_, m1, m2) = residual_moments(pred, gt, false)?;
    Ok((m2 - m1 * m1).max(0.0))
}

/// Same variance on `ln` depths.
pub fn si_log_loss(pred: &DepthMap, gt: &DepthMap) -> Result<f64> {
    let (_, m1, m2) = residual_moments(pred, gt, true)?;
    Ok((m2 - m1 * m1).max(0.0))
}

/// Recorded training objective of one batch.
#[derive(Debug, Clone, Copy)]
pub struct LossParts {
    /// Scalar to differentiate.
    pub total: Var,
    /// Sum of perceptual terms over matched blocks (0 when KD is off).
    pub l_p: f64,
    /// Pure scale-invariant L2 averaged over the batch.
    pub l_2: f64,
}

/// `lambda_p * sum_i L_Pi + lambda_2 * L_depth` for a batch.
///
/// `gt` holds the ground truth as `[B, 1, H, W]` with its validity mask;
/// `teacher` holds `[B, d, H/8, W/8]` features and is required whenever the
/// perceptual term is active. Teacher features enter the graph as constants.
pub fn total_loss<F: Real>(
    g: &mut Graph<F>,
    out: &Outputs,
    gt: &Tensor<F>,
    mask: &[bool],
    teacher: Option<&Tensor<F>>,
    cfg: &DistillConfig,
) -> Result<LossParts> {
    let mut terms: Vec<Var> = Vec::new();
    let mut l_p = 0.0;
    if cfg.kd_active() {
        let teacher = teacher.ok_or_else(|| Error::Data("teacher features required for distillation".into()))?;
        let t = g.constant(teacher.clone());
        for &b in &cfg.matched_blocks {
            let &(_, x) = out
                .adapted
                .iter()
                .find(|a| a.0 == b)
                .ok_or_else(|| cfg_err!("no adapter for matched block {b}"))?;
            let lp = g.mse(x, t)?;
            l_p += g.value(lp).item().as_f64();
            terms.push(g.scale(lp, F::of(cfg.lambda_p))?);
        }
    }
    let pure = g.value(out.depth).clone();
    let l_2 = {
        let opts = SiL2Options { mean_weight: 1.0, log_domain: false, eps: 1e-6 };
        pure_si(&pure, gt, mask, opts)?
    };
    if cfg.lambda_2 > 0.0 {
        let d = g.si_l2(out.depth, gt, mask, cfg.si_options())?;
        terms.push(g.scale(d, F::of(cfg.lambda_2))?);
    }
    let total = match terms.split_first() {
        None => g.constant(Tensor::scalar(F::zero())),
        Some((&first, rest)) => {
            let mut acc = first;
            for &t in rest {
                acc = g.add(acc, t)?;
            }
            acc
        }
    };
    Ok(LossParts { total, l_p, l_2 })
}

fn pure_si<F: Real>(pred: &Tensor<F>, gt: &Tensor<F>, mask: &[bool], opts: SiL2Options) -> Result<f64> {
    let mut g = Graph::<F>::inference();
    let p = g.constant(pred.clone());
    let v = g.si_l2(p, gt, mask, opts)?;
    Ok(g.value(v).item().as_f64())
}

//! Deterministic training loop and checkpoint evaluation.

use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{DepthMap, SampleTuple, SpikeTensor};
use crate::distill::{total_loss, DistillConfig};
use crate::energy::{audit, EnergyConstants, EnergyReport};
use crate::error::{cfg_err, Error, Result};
use crate::metrics::{evaluate, MetricsReport, METRIC_EPS};
use crate::model::{HeadKind, Mode, ModelConfig, Network, ParamId};
use crate::numerics::{Graph, Real, Tensor};

/// Ablation switches: decoder head and distillation on or off.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ablation {
    pub head: HeadKind,
    pub kd: bool,
}

impl Default for Ablation {
    fn default() -> Self {
        Ablation { head: HeadKind::Fusion, kd: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Global gradient-norm bound; 0 disables clipping.
    pub grad_clip: f64,
    pub ablation: Ablation,
    /// Steps between checkpoint callbacks; 0 means only at the end.
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 7,
            epochs: 500,
            batch_size: 4,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            grad_clip: 1.0,
            ablation: Ablation::default(),
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(cfg_err!("lr must be positive"));
        }
        if self.batch_size == 0 {
            return Err(cfg_err!("batch_size must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.adam_eps > 0.0) {
            return Err(cfg_err!("invalid Adam constants"));
        }
        if !(self.grad_clip >= 0.0) {
            return Err(cfg_err!("grad_clip must be non-negative"));
        }
        Ok(())
    }
}

/// One row of the loss curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    /// 1-based optimizer step.
    pub step: usize,
    pub total: f64,
    pub l_p: f64,
    pub l_2: f64,
}

pub struct TrainOutcome {
    pub network: Network<f32>,
    pub curve: Vec<LossRecord>,
}

/// Model and loss configuration after applying the ablation switches.
pub fn resolve(model: &ModelConfig, distill: &DistillConfig, tc: &TrainConfig) -> (ModelConfig, DistillConfig) {
    let mut m = model.clone();
    m.head = tc.ablation.head;
    let mut d = distill.clone();
    if !tc.ablation.kd {
        d.lambda_p = 0.0;
    }
    (m, d)
}

/// Fresh network for a training run, with adapters for the matched blocks
/// when distillation is active.
pub fn build_network(model: &ModelConfig, distill: &DistillConfig, seed: u64) -> Result<Network<f32>> {
    if distill.kd_active() {
        Network::with_adapters(model, seed, &distill.matched_blocks, distill.teacher_dim)
    } else {
        Network::new(model, seed)
    }
}

struct Adam {
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
    t: i32,
}

/// Batched inputs of one step: stacked spikes, ground truth `[B, 1, H, W]`
/// with its mask, teacher features `[B, d, h, w]` when needed.
pub struct Batch<F> {
    pub spikes: Tensor<F>,
    pub gt: Tensor<F>,
    pub mask: Vec<bool>,
    pub teacher: Option<Tensor<F>>,
}

pub fn make_batch<F: Real>(samples: &[&SampleTuple], need_teacher: bool) -> Result<Batch<F>> {
    let first = samples.first().ok_or(Error::EmptyMask)?;
    let (h, w) = (first.depth.h(), first.depth.w());
    let spikes: Vec<&SpikeTensor> = samples.iter().map(|s| &s.spikes).collect();
    let spikes = SpikeTensor::stack(&spikes)?;
    let mut gt = Vec::with_capacity(samples.len() * h * w);
    let mut mask = Vec::with_capacity(gt.capacity());
    for s in samples {
        s.validate()?;
        if s.depth.h() != h || s.depth.w() != w {
            return Err(Error::Data("samples in a batch differ in size".to_string()));
        }
        for (&v, &m) in s.depth.values().iter().zip(s.depth.mask()) {
            gt.push(if m { F::of(v as f64) } else { F::zero() });
            mask.push(m);
        }
    }
    let gt = Tensor::new(&[samples.len(), 1, h, w], gt)?;
    let teacher = if need_teacher {
        let mut data = Vec::new();
        let mut shape = None;
        for s in samples {
            let t = s.teacher.as_ref().ok_or_else(|| Error::Data("missing teacher features".to_string()))?;
            if shape.get_or_insert_with(|| t.shape().to_vec()).as_slice() != t.shape() {
                return Err(Error::Data("teacher feature shapes differ".to_string()));
            }
            data.extend(t.data().iter().map(|&v| F::of(v as f64)));
        }
        let s = shape.unwrap_or_default();
        let mut full = vec![samples.len()];
        full.extend_from_slice(&s);
        Some(Tensor::new(&full, data)?)
    } else {
        None
    };
    Ok(Batch { spikes, gt, mask, teacher })
}

/// Train a fresh network on `data`.
///
/// Each epoch visits the samples in a seeded permutation, one optimizer step
/// per batch. `on_checkpoint(step, net)` runs every `checkpoint_every` steps
/// and after the last one.
pub fn train(
    data: &[SampleTuple],
    model: &ModelConfig,
    distill: &DistillConfig,
    tc: &TrainConfig,
    mut on_checkpoint: impl FnMut(usize, &Network<f32>) -> Result<()>,
) -> Result<TrainOutcome> {
    tc.validate()?;
    if data.is_empty() {
        return Err(Error::Data("training set is empty".to_string()));
    }
    let (model, distill) = resolve(model, distill, tc);
    model.validate()?;
    distill.validate(model.blocks)?;
    let mut net = build_network(&model, &distill, tc.seed)?;
    for s in data {
        net.check_input(&s.spikes)?;
    }
    let ids: Vec<ParamId> = net.params().ids().collect();
    let mut adam = Adam {
        m: ids.iter().map(|&i| vec![0.0; net.params().get(i).len()]).collect(),
        v: ids.iter().map(|&i| vec![0.0; net.params().get(i).len()]).collect(),
        t: 0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(tc.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut curve = Vec::new();
    let per_epoch = data.len().div_ceil(tc.batch_size);
    let total_steps = tc.epochs * per_epoch;
    for _ in 0..tc.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(tc.batch_size) {
            let step = curve.len() + 1;
            let samples: Vec<&SampleTuple> = chunk.iter().map(|&i| &data[i]).collect();
            let rec = train_step(&mut net, &samples, &distill, tc, &mut adam)
                .map_err(|e| match e {
                    Error::Numeric(m) => Error::Numeric(alloc::format!("step {step}: {m}")),
                    e => e,
                })?;
            curve.push(LossRecord { step, ..rec });
            if (tc.checkpoint_every > 0 && step % tc.checkpoint_every == 0) || step == total_steps {
                on_checkpoint(step, &net)?;
            }
        }
    }
    Ok(TrainOutcome { network: net, curve })
}

fn train_step(net: &mut Network<f32>, samples: &[&SampleTuple], distill: &DistillConfig, tc: &TrainConfig, adam: &mut Adam) -> Result<LossRecord> {
    let batch = make_batch::<f32>(samples, distill.kd_active())?;
    let mut g = Graph::new();
    let x = g.constant(batch.spikes);
    let out = net.forward(&mut g, x, Mode::Train)?;
    let parts = total_loss(&mut g, &out, &batch.gt, &batch.mask, batch.teacher.as_ref(), distill)?;
    let total = g.value(parts.total).item().as_f64();
    if !total.is_finite() {
        return Err(Error::Numeric(alloc::format!("non-finite loss {total}")));
    }
    let mut grads = g.backward(parts.total)?;
    let mut bound: Vec<(ParamId, Tensor<f32>)> = Vec::with_capacity(out.bindings.len());
    for &(id, v) in &out.bindings {
        if let Some(t) = grads.take(v) {
            bound.push((id, t));
        }
    }
    let norm = bound.iter().flat_map(|(_, t)| t.data()).map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt();
    if !norm.is_finite() {
        return Err(Error::Numeric("non-finite gradient".to_string()));
    }
    let clip = if tc.grad_clip > 0.0 && norm > tc.grad_clip { tc.grad_clip / norm } else { 1.0 };
    adam.t += 1;
    let bc1 = 1.0 - tc.beta1.powi(adam.t);
    let bc2 = 1.0 - tc.beta2.powi(adam.t);
    let (b1, b2) = (tc.beta1 as f32, tc.beta2 as f32);
    let step = (tc.lr / bc1) as f32;
    let (inv_bc2, eps) = ((1.0 / bc2) as f32, tc.adam_eps as f32);
    for (id, grad) in bound {
        if !net.params().is_trainable(id) {
            continue;
        }
        let (m, v) = (&mut adam.m[id.index()], &mut adam.v[id.index()]);
        let p = net.params_mut().get_mut(id).data_mut();
        for i in 0..p.len() {
            let gi = grad.data()[i] * clip as f32;
            m[i] = b1 * m[i] + (1.0 - b1) * gi;
            v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
            p[i] -= step * m[i] / ((v[i] * inv_bc2).sqrt() + eps);
        }
    }
    Ok(LossRecord { step: 0, total, l_p: parts.l_p, l_2: parts.l_2 })
}

/// Per-sample metrics of `net` on `data`, averaged in dataset order.
pub fn evaluate_dataset(net: &Network<f32>, data: &[SampleTuple]) -> Result<MetricsReport> {
    let mut reports = Vec::with_capacity(data.len());
    for s in data {
        let pred: DepthMap = net.infer(&s.spikes)?;
        reports.push(evaluate(&pred, &s.depth, METRIC_EPS)?);
    }
    MetricsReport::average(&reports)
}

/// Averaged metrics over `data` plus one energy audit on its first sample.
pub fn evaluate_checkpoint(net: &Network<f32>, data: &[SampleTuple], c: &EnergyConstants) -> Result<(MetricsReport, EnergyReport)> {
    let first = data.first().ok_or(Error::EmptyMask)?;
    let metrics = evaluate_dataset(net, data)?;
    let energy = audit(net, first, c)?;
    Ok((metrics, energy))
}

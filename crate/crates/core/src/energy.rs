//! Theoretical energy audit: accumulate (AC) vs multiply-accumulate (MAC)
//! operation counts per layer, weighted by measured firing rates.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::data::SampleTuple;
use crate::error::Result;
use crate::model::Network;
use crate::numerics::{Graph, OpKind, Real};
use crate::data::SpikeTensor;

/// Per-operation energy in picojoules (45 nm CMOS figures).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyConstants {
    pub e_mac_pj: f64,
    pub e_ac_pj: f64,
}

impl Default for EnergyConstants {
    fn default() -> Self {
        EnergyConstants { e_mac_pj: 4.6, e_ac_pj: 0.9 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    /// Binary inputs: each active input costs one accumulate per weight.
    SpikeDriven,
    /// Real-valued inputs: every connection costs a multiply-accumulate.
    Float,
}

impl LayerKind {
    pub fn name(self) -> &'static str {
        match self {
            LayerKind::SpikeDriven => "spike",
            LayerKind::Float => "float",
        }
    }
}

/// Structure and activity of one weighted layer for a single sample.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerProfile {
    pub name: String,
    pub kind: LayerKind,
    /// Dense-equivalent MACs of one timestep.
    pub macs_per_step: u64,
    /// Timesteps the layer runs for (1 for layers after rate decoding).
    pub steps: usize,
    /// Fraction of non-zero input entries.
    pub firing_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyRow {
    pub name: String,
    pub kind: LayerKind,
    /// Synaptic operations charged: ACs for spike layers, MACs for float.
    pub synop_count: f64,
    pub firing_rate: f64,
    pub energy_pj: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyReport {
    pub rows: Vec<EnergyRow>,
    pub constants: EnergyConstants,
    pub total_pj: f64,
    pub param_count: usize,
}

impl EnergyReport {
    pub fn energy_mj(&self) -> f64 {
        self.total_pj * 1e-9
    }

    /// Total over rows of one kind, in picojoules.
    pub fn total_of(&self, kind: LayerKind) -> f64 {
        self.rows.iter().filter(|r| r.kind == kind).map(|r| r.energy_pj).sum()
    }
}

/// Energy of one layer:
/// spike-driven `e_ac * macs_per_step * rate * T`, float `e_mac * macs_per_step * T`.
pub fn layer_energy(p: &LayerProfile, c: &EnergyConstants) -> (f64, f64) {
    let macs = p.macs_per_step as f64 * p.steps as f64;
    match p.kind {
        LayerKind::SpikeDriven => {
            let ops = macs * p.firing_rate;
            (ops, ops * c.e_ac_pj)
        }
        LayerKind::Float => (macs, macs * c.e_mac_pj),
    }
}

/// Price a list of layer profiles.
pub fn price(profiles: &[LayerProfile], c: &EnergyConstants, param_count: usize) -> EnergyReport {
    let mut total = 0.0;
    let rows = profiles
        .iter()
        .map(|p| {
            let (synop_count, energy_pj) = layer_energy(p, c);
            total += energy_pj;
            EnergyRow { name: p.name.clone(), kind: p.kind, synop_count, firing_rate: p.firing_rate, energy_pj }
        })
        .collect();
    EnergyReport { rows, constants: *c, total_pj: total, param_count }
}

/// The same layers in a conventional network: every spike-driven layer
/// becomes a float layer evaluated once on real-valued activations.
pub fn float_twin(profiles: &[LayerProfile]) -> Vec<LayerProfile> {
    profiles
        .iter()
        .map(|p| match p.kind {
            LayerKind::SpikeDriven => LayerProfile { kind: LayerKind::Float, steps: 1, firing_rate: 1.0, ..p.clone() },
            LayerKind::Float => p.clone(),
        })
        .collect()
}

fn nonzero_rate<F: Real>(data: &[F]) -> f64 {
    if data.is_empty() {
        return 0.0;
    }
    data.iter().filter(|&&v| v != F::zero()).count() as f64 / data.len() as f64
}

/// Weighted layers of a recorded forward pass over `batch` samples with
/// `steps` timesteps. Backbone layers are spike-driven except the first
/// patch-embedding stage, which is charged as float; adapter projections
/// (training only) are skipped.
pub fn profile_layers<F: Real>(g: &Graph<F>, batch: usize, steps: usize) -> Vec<LayerProfile> {
    let batch = batch.max(1);
    let mut out = Vec::new();
    for e in g.trace() {
        let backbone = e.scope.starts_with("backbone");
        if !(backbone || e.scope.starts_with("head")) {
            continue;
        }
        let lead = e.shape[0] as u64;
        let per_sample_step = |total: u64| if backbone { total / (steps as u64).max(1) } else { total } / batch as u64;
        let (macs, input_rate) = match e.kind {
            OpKind::Conv2d => {
                let ws = g.shape(e.inputs[1]);
                let spatial: u64 = e.shape[2..].iter().map(|&v| v as u64).product();
                let total = lead * ws.iter().map(|&v| v as u64).product::<u64>() * spatial;
                (per_sample_step(total), nonzero_rate(g.value(e.inputs[0]).data()))
            }
            OpKind::Attention => {
                let d = e.shape[1] as u64;
                let n: u64 = e.shape[2..].iter().map(|&v| v as u64).product();
                let total = lead * 2 * n * n * d;
                let rate = e.inputs.iter().map(|&v| nonzero_rate(g.value(v).data())).sum::<f64>() / e.inputs.len() as f64;
                (per_sample_step(total), rate)
            }
            _ => continue,
        };
        let float = !backbone || e.scope.starts_with("backbone.embed0");
        out.push(LayerProfile {
            name: e.scope.to_string(),
            kind: if float { LayerKind::Float } else { LayerKind::SpikeDriven },
            macs_per_step: macs,
            steps: if backbone { steps } else { 1 },
            firing_rate: input_rate,
        });
    }
    out
}

/// Profile the layers of `net` on one spike stream (eval mode).
pub fn profile_network<F: Real>(net: &Network<F>, spikes: &SpikeTensor) -> Result<Vec<LayerProfile>> {
    net.check_input(spikes)?;
    let mut g = Graph::inference();
    let x = g.constant(SpikeTensor::stack(&[spikes])?);
    net.forward_eval(&mut g, x)?;
    Ok(profile_layers(&g, 1, net.config().timesteps))
}

/// Run one instrumented forward pass on `sample` and price it.
pub fn audit<F: Real>(net: &Network<F>, sample: &SampleTuple, c: &EnergyConstants) -> Result<EnergyReport> {
    let profiles = profile_network(net, &sample.spikes)?;
    Ok(price(&profiles, c, param_count(net)))
}

/// Trainable scalars of the deployed model (distillation adapters excluded).
pub fn param_count<F: Real>(net: &Network<F>) -> usize {
    let p = net.params();
    p.ids().filter(|&id| p.is_trainable(id) && !p.name(id).starts_with("kd.")).map(|id| p.get(id).len()).sum()
}

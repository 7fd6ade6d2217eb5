use alloc::string::String;
use alloc::vec::Vec;

use crate::numerics::{Graph, OpKind, Real, Var};

/// Result of the spike-purity instrumentation pass over a backbone trace.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PurityReport {
    /// Ops recorded under the backbone scope.
    pub ops: usize,
    /// MLIF and residual-merge outputs checked for binarity.
    pub spike_tensors: usize,
    pub softmax_ops: usize,
    /// Weighted ops (conv, attention, matmul, mul) whose activation operand
    /// was not a spike tensor.
    pub float_products: usize,
    /// Real-valued backbone tensors consumed by something other than the
    /// membrane-current chain (batch-norm, pooling, MLIF).
    pub leaked_currents: usize,
    pub violations: Vec<String>,
}

impl PurityReport {
    pub fn is_pure(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Check that every inter-layer tensor in the `backbone` scope is binary,
/// that weighted ops only multiply spikes, and that real-valued currents only
/// flow into batch-norm, pooling or an MLIF.
pub fn audit_spike_purity<F: Real>(g: &Graph<F>) -> PurityReport {
    let entries: Vec<_> = g.trace().collect();
    let in_backbone = |scope: &str| scope == "backbone" || scope.starts_with("backbone.");
    let mut rep = PurityReport::default();
    let mut consumers: Vec<Vec<OpKind>> = alloc::vec![Vec::new(); entries.len()];
    for e in &entries {
        for v in e.inputs {
            consumers[v.index()].push(e.kind);
        }
    }
    let binary = |v: Var| g.value(v).is_binary();
    for e in entries.iter().filter(|e| in_backbone(e.scope) && e.kind != OpKind::Leaf) {
        rep.ops += 1;
        match e.kind {
            OpKind::Mlif | OpKind::ResidualMerge => {
                rep.spike_tensors += 1;
                if !binary(e.var) {
                    rep.violations.push(alloc::format!("{} output of {} is not binary", e.kind.name(), e.scope));
                }
            }
            OpKind::Conv2d | OpKind::Matmul | OpKind::Mul | OpKind::Attention => {
                let acts: Vec<Var> = match e.kind {
                    OpKind::Conv2d => alloc::vec![e.inputs[0]],
                    OpKind::Attention => e.inputs.to_vec(),
                    _ => e.inputs.iter().copied().filter(|v| !entries[v.index()].is_param).collect(),
                };
                if acts.iter().any(|&v| !binary(v)) {
                    rep.float_products += 1;
                    rep.violations.push(alloc::format!("{} in {} multiplies a non-spike operand", e.kind.name(), e.scope));
                }
            }
            _ => {}
        }
        if e.kind.name().contains("softmax") {
            rep.softmax_ops += 1;
            rep.violations.push(alloc::format!("softmax in {}", e.scope));
        }
        let current = matches!(e.kind, OpKind::Conv2d | OpKind::BatchNorm | OpKind::MaxPool | OpKind::Attention);
        if current {
            let ok = consumers[e.var.index()]
                .iter()
                .all(|k| matches!(k, OpKind::BatchNorm | OpKind::MaxPool | OpKind::Mlif));
            if !ok {
                rep.leaked_currents += 1;
                rep.violations.push(alloc::format!("real-valued {} output in {} escapes the MLIF chain", e.kind.name(), e.scope));
            }
        }
    }
    rep
}

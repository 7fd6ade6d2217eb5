use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::{Real, Tensor};
use crate::error::{Error, Result};
use crate::neuron::LifParams;

/// Handle to a tensor recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OpKind {
    Leaf,
    Conv2d,
    BatchNorm,
    MaxPool,
    Mlif,
    Attention,
    Matmul,
    Add,
    Sub,
    Mul,
    Scale,
    Sigmoid,
    Sum,
    Mean,
    Upsample,
    RateEncode,
    ResidualMerge,
    Mse,
    SiL2,
    Reshape,
}

impl OpKind {
    pub fn name(self) -> &'static str {
        match self {
            OpKind::Leaf => "leaf",
            OpKind::Conv2d => "conv2d",
            OpKind::BatchNorm => "batchnorm",
            OpKind::MaxPool => "maxpool2d",
            OpKind::Mlif => "mlif",
            OpKind::Attention => "spike_attention",
            OpKind::Matmul => "matmul",
            OpKind::Add => "add",
            OpKind::Sub => "sub",
            OpKind::Mul => "mul",
            OpKind::Scale => "scale",
            OpKind::Sigmoid => "sigmoid",
            OpKind::Sum => "sum",
            OpKind::Mean => "mean",
            OpKind::Upsample => "upsample_bilinear",
            OpKind::RateEncode => "rate_encode",
            OpKind::ResidualMerge => "residual_merge",
            OpKind::Mse => "mse",
            OpKind::SiL2 => "si_l2",
            OpKind::Reshape => "reshape",
        }
    }
}

/// Intermediates kept for the backward pass.
pub(super) enum Saved<F> {
    None,
    Conv { stride: usize, pad: usize, cols: Vec<F> },
    Norm { xhat: Vec<F>, inv_std: Vec<F>, batch_stats: bool },
    Pool { argmax: Vec<u32> },
    Lif { h: Vec<F>, steps: usize, params: LifParams },
    Attn { scores: Vec<F>, scale: F },
    Scale(F),
    Upsample { factor: usize },
    Rate { steps: usize, sum: bool },
    SiL2 { grad: Vec<F> },
}

pub(super) struct Node<F> {
    pub value: Tensor<F>,
    pub kind: OpKind,
    pub inputs: Vec<Var>,
    pub saved: Saved<F>,
    pub requires_grad: bool,
    pub is_param: bool,
    pub scope: usize,
}

/// One executed op as seen by instrumentation passes.
#[derive(Debug, Clone, Copy)]
pub struct TraceEntry<'a> {
    pub var: Var,
    pub kind: OpKind,
    pub scope: &'a str,
    pub inputs: &'a [Var],
    pub shape: &'a [usize],
    pub is_param: bool,
}

/// Recording context for one forward pass.
///
/// Every op appends a node; `backward` replays them in reverse and then
/// clears the tape. The node list doubles as the op trace used by the
/// spike-purity and energy passes.
pub struct Graph<F> {
    pub(super) nodes: Vec<Node<F>>,
    scopes: Vec<String>,
    scope_stack: Vec<usize>,
    grad_enabled: bool,
    consumed: bool,
}

impl<F: Real> Default for Graph<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Real> Graph<F> {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            scopes: vec![String::new()],
            scope_stack: vec![0],
            grad_enabled: true,
            consumed: false,
        }
    }

    /// A graph that records the op trace but keeps nothing for backward.
    pub fn inference() -> Self {
        Graph { grad_enabled: false, ..Self::new() }
    }

    pub fn grad_enabled(&self) -> bool {
        self.grad_enabled
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Push a dotted scope segment, e.g. `enter("block1")` then `enter("attn")`.
    pub fn enter(&mut self, name: &str) {
        let parent = &self.scopes[*self.scope_stack.last().unwrap()];
        let full = if parent.is_empty() { String::from(name) } else { alloc::format!("{parent}.{name}") };
        let idx = match self.scopes.iter().position(|s| *s == full) {
            Some(i) => i,
            None => {
                self.scopes.push(full);
                self.scopes.len() - 1
            }
        };
        self.scope_stack.push(idx);
    }

    pub fn exit(&mut self) {
        if self.scope_stack.len() > 1 {
            self.scope_stack.pop();
        }
    }

    pub fn value(&self, v: Var) -> &Tensor<F> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Trainable leaf.
    pub fn param(&mut self, t: Tensor<F>) -> Var {
        self.leaf(t, self.grad_enabled, true)
    }

    /// Leaf that never receives a gradient (inputs, targets, teacher features).
    pub fn constant(&mut self, t: Tensor<F>) -> Var {
        self.leaf(t, false, false)
    }

    /// Leaf with explicit gradient tracking, used by gradient checks.
    pub fn input(&mut self, t: Tensor<F>, requires_grad: bool) -> Var {
        self.leaf(t, requires_grad && self.grad_enabled, false)
    }

    fn leaf(&mut self, t: Tensor<F>, requires_grad: bool, is_param: bool) -> Var {
        self.nodes.push(Node {
            value: t,
            kind: OpKind::Leaf,
            inputs: Vec::new(),
            saved: Saved::None,
            requires_grad,
            is_param,
            scope: *self.scope_stack.last().unwrap(),
        });
        Var(self.nodes.len() - 1)
    }

    pub(super) fn push(&mut self, value: Tensor<F>, kind: OpKind, inputs: Vec<Var>, saved: Saved<F>) -> Result<Var> {
        if self.consumed {
            return Err(Error::StaleTape);
        }
        value.check_finite(kind.name())?;
        let requires_grad = self.grad_enabled && inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        let saved = if requires_grad { saved } else { Saved::None };
        self.nodes.push(Node {
            value,
            kind,
            inputs,
            saved,
            requires_grad,
            is_param: false,
            scope: *self.scope_stack.last().unwrap(),
        });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn trace(&self) -> impl Iterator<Item = TraceEntry<'_>> {
        self.nodes.iter().enumerate().map(move |(i, n)| TraceEntry {
            var: Var(i),
            kind: n.kind,
            scope: &self.scopes[n.scope],
            inputs: &n.inputs,
            shape: n.value.shape(),
            is_param: n.is_param,
        })
    }

    /// Reverse-mode sweep from a scalar `loss`.
    ///
    /// Returns gradients for every leaf that requires them (zeros when the
    /// leaf does not influence the loss) and clears the tape: saved
    /// intermediates are dropped and any further op or backward call fails
    /// with [`Error::StaleTape`]. Forward values remain readable.
    pub fn backward(&mut self, loss: Var) -> Result<Grads<F>> {
        if self.consumed || self.nodes.is_empty() {
            return Err(Error::StaleTape);
        }
        if self.nodes[loss.0].value.len() != 1 {
            return Err(Error::Dimension(alloc::format!(
                "backward needs a scalar loss, got shape {:?}",
                self.nodes[loss.0].value.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<F>>> = (0..self.nodes.len()).map(|_| None).collect();
        if self.nodes[loss.0].requires_grad {
            grads[loss.0] = Some(vec![F::one()]);
        }
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad || node.kind == OpKind::Leaf {
                continue;
            }
            let Some(gout) = grads[i].take() else { continue };
            self.backward_node(i, &gout, &mut grads)?;
        }
        let mut out: Vec<Option<Tensor<F>>> = Vec::with_capacity(self.nodes.len());
        for (i, node) in self.nodes.iter_mut().enumerate() {
            if node.kind == OpKind::Leaf && node.requires_grad {
                let g = grads[i].take().unwrap_or_else(|| vec![F::zero(); node.value.len()]);
                out.push(Some(Tensor::new(node.value.shape(), g)?));
            } else {
                out.push(None);
            }
            // values stay readable; everything kept for the reverse sweep goes
            node.saved = Saved::None;
        }
        self.consumed = true;
        Ok(Grads { grads: out })
    }

    fn backward_node(&self, i: usize, gout: &[F], grads: &mut [Option<Vec<F>>]) -> Result<()> {
        let node = &self.nodes[i];
        match node.kind {
            OpKind::Leaf => Ok(()),
            OpKind::Conv2d => self.conv2d_backward(node, gout, grads),
            OpKind::BatchNorm => self.batch_norm_backward(node, gout, grads),
            OpKind::MaxPool => self.max_pool_backward(node, gout, grads),
            OpKind::Mlif => self.mlif_backward(node, gout, grads),
            OpKind::Attention => self.attention_backward(node, gout, grads),
            OpKind::Matmul => self.matmul_backward(node, gout, grads),
            OpKind::Upsample => self.upsample_backward(node, gout, grads),
            OpKind::RateEncode => self.rate_encode_backward(node, gout, grads),
            OpKind::Mse => self.mse_backward(node, gout, grads),
            OpKind::SiL2 => self.si_l2_backward(node, gout, grads),
            _ => self.pointwise_backward(node, gout, grads),
        }
    }

    /// Add `g` into the gradient slot of `v` if `v` participates.
    pub(super) fn accumulate(&self, grads: &mut [Option<Vec<F>>], v: Var, g: Vec<F>) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b)| *a += b),
            slot @ None => *slot = Some(g),
        }
    }

    pub(super) fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }
}

/// Gradients produced by [`Graph::backward`], indexed by leaf [`Var`].
#[derive(Debug, Clone)]
pub struct Grads<F> {
    grads: Vec<Option<Tensor<F>>>,
}

impl<F: Real> Grads<F> {
    pub fn get(&self, v: Var) -> Option<&Tensor<F>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<F>> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

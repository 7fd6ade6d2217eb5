//! The spike-driven transformer backbone and its depth heads.
//!
//! Activations between layers are time-major `[T*B, C, h, w]` tensors whose
//! values are exactly 0 or 1; the only real-valued tensors inside the
//! backbone are the ConvBN / pooling / attention currents that feed an MLIF.

mod attention;
mod audit;
mod layers;
mod network;
mod params;

pub use attention::{right_associated_counts, spike_attention_product, AttentionProduct};
pub use audit::{audit_spike_purity, PurityReport};
pub use layers::Mode;
pub use network::{Network, Outputs};
pub use params::{ParamId, ParamStore};

use crate::error::{cfg_err, Result};
use crate::neuron::LifParams;
use crate::numerics::MergeRule;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HeadKind {
    /// Coarse-to-fine fusion of all four block outputs.
    #[default]
    Fusion,
    /// 1x1 ConvBN on the last block, x8 upsample, sigmoid.
    LinearFcn,
}

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub timesteps: usize,
    pub in_channels: usize,
    pub height: usize,
    pub width: usize,
    /// Embedding dimension D.
    pub dim: usize,
    /// Transformer block count L.
    pub blocks: usize,
    /// Attention scaling factor s.
    pub attn_scale: f64,
    pub mlp_ratio: usize,
    pub lif: LifParams,
    /// Output channels of the three patch-embedding stages; the last is D.
    pub embed_channels: [usize; 3],
    pub merge: MergeRule,
    pub head: HeadKind,
    /// Kernel size of the fusion-level ConvBNs (odd).
    pub head_kernel: usize,
    /// Decode spikes by summing over T instead of averaging.
    pub rate_sum: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::desk(4, 64, 64, 128)
    }
}

impl ModelConfig {
    /// Two polarity channels, L = 4, embed schedule `[D/4, D/2, D]`.
    pub fn desk(timesteps: usize, height: usize, width: usize, dim: usize) -> Self {
        ModelConfig {
            timesteps,
            in_channels: 2,
            height,
            width,
            dim,
            blocks: 4,
            attn_scale: 0.25,
            mlp_ratio: 4,
            lif: LifParams::default(),
            embed_channels: [dim / 4, dim / 2, dim],
            merge: MergeRule::ClampOr,
            head: HeadKind::Fusion,
            head_kernel: 1,
            rate_sum: false,
        }
    }

    /// Tokens per timestep, `(H/8) * (W/8)`.
    pub fn tokens(&self) -> usize {
        (self.height / 8) * (self.width / 8)
    }

    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 || !self.height.is_multiple_of(8) || !self.width.is_multiple_of(8) {
            return Err(cfg_err!("height and width must be positive multiples of 8, got {}x{}", self.height, self.width));
        }
        if self.timesteps == 0 || self.in_channels == 0 {
            return Err(cfg_err!("timesteps and in_channels must be positive"));
        }
        if self.blocks == 0 {
            return Err(cfg_err!("need at least one transformer block"));
        }
        if !(self.attn_scale > 0.0) {
            return Err(cfg_err!("attention scale must be positive"));
        }
        if self.dim == 0 || self.mlp_ratio == 0 || self.embed_channels.contains(&0) {
            return Err(cfg_err!("dimensions must be positive"));
        }
        if self.embed_channels[2] != self.dim {
            return Err(cfg_err!("last embed stage must output D = {}", self.dim));
        }
        if self.head == HeadKind::Fusion && self.blocks != 4 {
            return Err(cfg_err!("fusion head needs exactly 4 blocks, got {}", self.blocks));
        }
        if self.head_kernel.is_multiple_of(2) {
            return Err(cfg_err!("head_kernel must be odd"));
        }
        self.lif.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        assert!(ModelConfig::default().validate().is_ok());
        let mut c = ModelConfig::desk(4, 60, 64, 64);
        assert!(c.validate().is_err());
        c.height = 64;
        c.blocks = 3;
        assert!(c.validate().is_err());
        c.head = HeadKind::LinearFcn;
        assert!(c.validate().is_ok());
        c.attn_scale = 0.0;
        assert!(c.validate().is_err());
        assert_eq!(ModelConfig::default().tokens(), 64);
    }
}

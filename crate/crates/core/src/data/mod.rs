//! In-memory sample types and the synthetic event-scene generator.

mod depth;
mod spike;
mod synth;

pub use depth::DepthMap;
pub use spike::SpikeTensor;
pub use synth::{gen_synthetic, render_scene, teacher_features, Rect, Scene, SynthConfig, Texture};

use crate::error::{dim_err, Result};
use crate::numerics::Tensor;

/// One training/evaluation example: event spikes, ground-truth depth and
/// (optionally) precomputed teacher features `[d, H/8, W/8]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleTuple {
    pub spikes: SpikeTensor,
    pub depth: DepthMap,
    pub teacher: Option<Tensor<f32>>,
}

impl SampleTuple {
    pub fn new(spikes: SpikeTensor, depth: DepthMap, teacher: Option<Tensor<f32>>) -> Result<Self> {
        let s = SampleTuple { spikes, depth, teacher };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let (h, w) = (self.spikes.h(), self.spikes.w());
        if self.depth.h() != h || self.depth.w() != w {
            return Err(dim_err!("depth {}x{} does not match spikes {h}x{w}", self.depth.h(), self.depth.w()));
        }
        if let Some(t) = &self.teacher {
            let s = t.shape();
            if s.len() != 3 || s[1] * 8 != h || s[2] * 8 != w {
                return Err(dim_err!("teacher features {:?} must be [d, {}, {}]", s, h / 8, w / 8));
            }
        }
        Ok(())
    }
}

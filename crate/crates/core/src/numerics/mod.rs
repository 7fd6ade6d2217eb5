//! Dense tensors and a reverse-mode tape over the fixed op set the model needs.

mod attention;
mod conv;
pub mod gradcheck;
mod graph;
mod loss;
mod norm;
mod pointwise;
mod real;
mod resample;
mod spiking;
mod tensor;

pub use graph::{Grads, Graph, OpKind, TraceEntry, Var};
pub use norm::{BnMode, BN_EPS, BN_MOMENTUM};
pub use real::{gemm, Mat, Real};
pub use resample::upsample_bilinear_plain;
pub use spiking::MergeRule;
pub use tensor::Tensor;
pub use loss::SiL2Options;

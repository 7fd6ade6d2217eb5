//! Spike-driven transformer for monocular depth estimation from event streams.
//!
//! The crate is `no_std` + `alloc`. Everything here is pure computation:
//! dense tensors with a reverse-mode tape, multistep LIF neurons, the spiking
//! backbone and fusion depth head, distillation losses, depth metrics, the
//! theoretical energy audit, a deterministic training loop and a synthetic
//! event-scene generator. File formats and the command line live in the `sdt`
//! crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod data;
pub mod distill;
pub mod energy;
pub mod error;
pub mod metrics;
pub mod model;
pub mod neuron;
pub mod numerics;
pub mod train;

pub use error::{Error, Result};

//! Trains small recurrent policies on finite-memory benchmark environments,
//! quantizes their memory and observation features through ternary bottleneck
//! autoencoders, and extracts, minimizes, and verifies the equivalent finite
//! Moore machines.
//!
//! The crate is organized around the pipeline stages:
//!
//! * [`tensor`], [`tape`], [`adam`], [`gradcheck`] — a minimal 64-bit
//!   reverse-mode differentiation engine and optimizer,
//! * [`env`] — mode-counter environments and the seven Tomita grammars,
//!   with optimal-policy oracles and ground-truth machine constructors,
//! * [`policy`] — GRU policy networks, imitation training, rollout capture,
//! * [`qbn`] — quantized bottleneck autoencoders (ternary codes),
//! * [`mmn`] — bottleneck insertion and fine-tuning of the quantized network,
//! * [`machine`] — Moore machine extraction, minimization, equivalence
//!   checking, and DOT export,
//! * [`config`], [`artifact`], [`pipeline`] — reproducible experiment
//!   configs, bit-exact model persistence, and the staged batch pipeline.

pub mod adam;
pub mod artifact;
pub mod config;
pub mod env;
pub mod gradcheck;
pub mod layers;
pub mod machine;
pub mod mmn;
pub mod pipeline;
pub mod policy;
pub mod qbn;
pub mod rng;
pub mod tape;
pub mod tensor;

pub use tensor::Tensor;

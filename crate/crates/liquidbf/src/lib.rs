//! Hybrid beamforming simulator for sub-THz multi-user MIMO downlinks.
//!
//! The library models the full transmit chain at desk scale:
//!
//! - [`channel`] — synthetic multipath path sets, pattern-weighted channel
//!   matrices, and calibrated channel-estimation error injection.
//! - [`codebook`] — steered element radiation patterns (liquid-crystal style
//!   parametric mainlobes, a TR 38.901 comparison element, isotropic), and
//!   exhaustive analog pattern selection.
//! - [`bf`] — SINR matrices, spectral efficiency, row-space precoder
//!   projection, and exact sum-power normalization.
//! - [`diff`] — a small tape-based reverse-mode autodiff engine and the
//!   differentiable precoding pipeline built on it.
//! - [`lnn`] — closed-form continuous-time (liquid) network layers, the LTC
//!   ODE reference, Adam, training, and checkpointing.
//! - [`baselines`] — gradient-ascent and GRU digital precoders plus a
//!   matched-filter floor, sharing the pipeline contract with the LNN.
//! - [`harness`] — experiment configuration, seeded sweeps over transmit
//!   power and estimation error, CSV/JSON persistence, and aggregation.
//!
//! Every randomized operation is a pure function of an explicitly named RNG
//! stream (see [`rng`]), so sweep cells are reproducible and independent.

pub mod baselines;
pub mod bf;
pub mod channel;
pub mod codebook;
pub mod diff;
pub mod error;
pub mod harness;
pub mod lnn;
pub mod rng;

pub use error::{Error, Result};

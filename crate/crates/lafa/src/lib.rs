//! Longitudinal active feature acquisition.
//!
//! The crate trains three jointly optimized components on longitudinal
//! classification data where every feature read has a price:
//!
//! * a **context selector** — per-feature logits over static context
//!   features, gated once per trajectory;
//! * a **planner** — an MLP that maps the acquired history to a full
//!   time-by-feature acquisition plan, re-run after every acquisition;
//! * a **predictor** — an MLP classifier evaluated at every timestep on
//!   whatever has been acquired so far.
//!
//! Gates are binary in the forward direction and differentiable through a
//! Gumbel-sigmoid straight-through surrogate, so selector, planner, and
//! predictor train end to end against one relaxed objective: prediction
//! cross-entropy summed over future timesteps plus a cost-weighted penalty
//! on planned acquisitions. A cost weight `lambda` trades accuracy against
//! acquisition spend; sweeping it traces the cost/accuracy frontier.

pub mod ablation;
pub mod data;
pub mod error;
pub mod export;
pub mod gating;
pub mod infer;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod objective;
pub mod rng;
pub mod sweep;
pub mod train;

pub use error::{Error, Result};

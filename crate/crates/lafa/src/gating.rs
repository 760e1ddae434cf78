//! Stochastic binary gates with a straight-through surrogate gradient.
//!
//! A gate with logit `l` draws Gumbel noise `g`, forms the relaxed value
//! `m̃ = σ((l+g)/τ)`, and emits the hard bit `m̂ = 1[m̃ > 0.5]` in the forward
//! direction. The backward direction treats the gate as if it were `m̃`, so
//! the gradient w.r.t. the logit is `σ'((l+g)/τ)/τ`. Deterministic mode sets
//! `g = 0`, which makes the hard bit a plain sign threshold on the logit.

use ndarray::ArrayView1;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Uniform draws are clamped into [`UNIFORM_CLAMP`, 1 - `UNIFORM_CLAMP`]
/// before the double-log transform so the noise is always finite.
pub const UNIFORM_CLAMP: f64 = 1e-12;

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Standard Gumbel noise from a uniform draw: `g = -log(-log u)`.
pub fn gumbel_from_uniform(u: f64) -> f64 {
    let u = u.clamp(UNIFORM_CLAMP, 1.0 - UNIFORM_CLAMP);
    -(-u.ln()).ln()
}

pub fn sample_gumbel(rng: &mut ChaCha8Rng) -> f64 {
    gumbel_from_uniform(rng.random::<f64>())
}

/// One gate evaluation: the hard forward bit, the relaxed value it was
/// thresholded from, and the straight-through gradient d(soft)/d(logit).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateSample {
    pub hard: f64,
    pub soft: f64,
    pub grad: f64,
}

/// Straight-through gate. A relaxed value of exactly 0.5 gates to 0
/// (strict threshold).
pub fn st_gate(logit: f64, gumbel: f64, tau: f64) -> GateSample {
    debug_assert!(tau > 0.0, "temperature must be positive");
    let z = (logit + gumbel) / tau;
    let soft = sigmoid(z);
    let hard = if soft > 0.5 { 1.0 } else { 0.0 };
    let grad = soft * (1.0 - soft) / tau;
    GateSample { hard, soft, grad }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateMode {
    /// Fresh Gumbel noise per entry (training).
    Stochastic,
    /// Zero noise: hard bit is `1[σ(l/τ) > 0.5]` (inference).
    Deterministic,
}

/// Gate every entry of a logit vector. `rng` is required in stochastic mode
/// and unused otherwise; entries are gated in index order, which pins the
/// noise stream layout.
pub fn gate_vector(
    logits: ArrayView1<f64>,
    mode: GateMode,
    tau: f64,
    mut rng: Option<&mut ChaCha8Rng>,
) -> Result<Vec<GateSample>> {
    if tau <= 0.0 || !tau.is_finite() {
        return Err(Error::Config(format!("temperature {tau} must be positive and finite")));
    }
    if matches!(mode, GateMode::Stochastic) && rng.is_none() {
        return Err(Error::Config("stochastic gating requires a noise source".into()));
    }
    Ok(logits
        .iter()
        .map(|&l| {
            let g = match mode {
                GateMode::Stochastic => sample_gumbel(rng.as_mut().unwrap()),
                GateMode::Deterministic => 0.0,
            };
            st_gate(l, g, tau)
        })
        .collect())
}

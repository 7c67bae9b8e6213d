//! Binormal synthetic prediction panels with known AUC, and perfectly
//! calibrated prediction sets, used as test fixtures.
//!
//! For model `m` and sample `i` of class `y`, the latent score is
//! `y·d_m + σ_m·(√ρ·z_i + √(1−ρ)·z_{i,m})` with standard normals drawn from
//! [`SplitMix64`], and the probability is `logistic(latent)`. Samples are
//! generated positives first (ids `pos_00000…`), then negatives; for each
//! sample the shared draw comes before the per-model draws in model order.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::predictions::{
    align_panel, PredictionError, PredictionPanel, PredictionRecord, PredictionSet,
};
use crate::rng::SplitMix64;
use crate::scalar::{sigmoid, Scalar};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Predictions(#[from] PredictionError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticModel {
    pub name: String,
    /// Gap between class means of the latent score.
    pub separation: f64,
    pub noise: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_pos: usize,
    pub n_neg: usize,
    pub models: Vec<SyntheticModel>,
    /// Correlation of latent noise between models, in `[0, 1)`.
    #[serde(default)]
    pub correlation: f64,
    #[serde(default)]
    pub seed: u64,
}

impl SyntheticSpec {
    /// `n_models` models sharing one separation and noise level.
    pub fn uniform(
        n_pos: usize,
        n_neg: usize,
        n_models: usize,
        separation: f64,
        noise: f64,
        seed: u64,
    ) -> Self {
        Self {
            n_pos,
            n_neg,
            models: (0..n_models)
                .map(|m| SyntheticModel {
                    name: format!("model_{m}"),
                    separation,
                    noise,
                })
                .collect(),
            correlation: 0.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidSpec(m));
        if self.n_pos < 1 || self.n_neg < 1 {
            return bad("n_pos and n_neg must be at least 1".into());
        }
        if self.models.is_empty() {
            return bad("need at least one model".into());
        }
        if !(0.0..1.0).contains(&self.correlation) {
            return bad(format!("correlation {} outside [0, 1)", self.correlation));
        }
        for m in &self.models {
            if !(m.noise > 0.0 && m.noise.is_finite()) {
                return bad(format!("model `{}` needs positive finite noise", m.name));
            }
            if !m.separation.is_finite() {
                return bad(format!("model `{}` has non-finite separation", m.name));
            }
        }
        Ok(())
    }

    /// Closed-form AUC of model `index`'s marginal scores.
    pub fn theoretical_auc(&self, index: usize) -> f64 {
        let m = &self.models[index];
        binormal_auc(m.separation, m.noise)
    }
}

pub fn standard_normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

/// `Φ(d / (σ·√2))`: AUC of two Gaussians with mean gap `d` and common `σ`.
pub fn binormal_auc(separation: f64, noise: f64) -> f64 {
    standard_normal_cdf(separation / (noise * std::f64::consts::SQRT_2))
}

pub fn generate_panel<T: Scalar>(spec: &SyntheticSpec) -> Result<PredictionPanel<T>, SynthError> {
    spec.validate()?;
    let mut rng = SplitMix64::new(spec.seed);
    let shared_w = spec.correlation.sqrt();
    let private_w = (1.0 - spec.correlation).sqrt();
    let n = spec.n_pos + spec.n_neg;
    let mut columns: Vec<Vec<PredictionRecord<T>>> = vec![Vec::with_capacity(n); spec.models.len()];
    for i in 0..n {
        let (label, id) = if i < spec.n_pos {
            (1u8, format!("pos_{i:05}"))
        } else {
            (0u8, format!("neg_{:05}", i - spec.n_pos))
        };
        let shared = rng.standard_normal();
        for (model, column) in spec.models.iter().zip(&mut columns) {
            let private = rng.standard_normal();
            let mean = if label == 1 { model.separation } else { 0.0 };
            let latent = mean + model.noise * (shared_w * shared + private_w * private);
            let prob = sigmoid(T::of(latent));
            column.push(PredictionRecord::new(id.as_str(), label, prob, i + 1)?);
        }
    }
    let sets = spec
        .models
        .iter()
        .zip(columns)
        .map(|(m, records)| PredictionSet::new(m.name.clone(), records))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(align_panel(sets)?)
}

/// `prob ~ U(0,1)`, `label ~ Bernoulli(prob)`; calibrated in expectation.
pub fn generate_calibrated_set<T: Scalar>(
    n: usize,
    seed: u64,
) -> Result<PredictionSet<T>, SynthError> {
    if n < 1 {
        return Err(SynthError::InvalidSpec("n must be at least 1".into()));
    }
    let mut rng = SplitMix64::new(seed);
    let records = (0..n)
        .map(|i| {
            let p = rng.next_f64();
            let label = u8::from(rng.bernoulli(p));
            PredictionRecord::new(format!("cal_{i:06}"), label, T::of(p), i + 1)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(PredictionSet::new("calibrated", records)?)
}

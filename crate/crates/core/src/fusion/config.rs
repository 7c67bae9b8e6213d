use serde::{Deserialize, Serialize};

use super::FusionError;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    #[default]
    BinaryCrossEntropy,
}

/// Hyper-parameters for fusion training. Missing JSON keys take defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub validation_fraction: f64,
    pub learning_rate: f64,
    /// Per-epoch multiplicative learning-rate decay.
    pub decay: f64,
    pub hidden1: usize,
    pub hidden2: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub ece_bins: usize,
    pub loss: LossKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 16,
            seed: 42,
            validation_fraction: 0.2,
            learning_rate: 1e-3,
            decay: 0.99,
            hidden1: 16,
            hidden2: 8,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            ece_bins: crate::metrics::DEFAULT_ECE_BINS,
            loss: LossKind::BinaryCrossEntropy,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), FusionError> {
        let bad = |m: &str| Err(FusionError::InvalidConfig(m.to_string()));
        if self.epochs < 1 {
            return bad("epochs must be at least 1");
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return bad("validation_fraction must lie strictly between 0 and 1");
        }
        if self.batch_size < 1 {
            return bad("batch_size must be at least 1");
        }
        if self.hidden1 < 1 || self.hidden2 < 1 {
            return bad("hidden layer widths must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return bad("decay must lie in (0, 1]");
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return bad("beta1 and beta2 must lie in [0, 1)");
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return bad("epsilon must be positive");
        }
        if self.ece_bins < 1 {
            return bad("ece_bins must be at least 1");
        }
        Ok(())
    }

    /// Layer widths for `n_models` inputs: `[M, H1, H2, 1]`.
    pub fn layer_dims(&self, n_models: usize) -> Vec<usize> {
        vec![n_models, self.hidden1, self.hidden2, 1]
    }
}

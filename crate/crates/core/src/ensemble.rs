//! Fusion of a [`PredictionPanel`] into a single prediction set by plurality
//! voting, unweighted probability averaging, or a trained fusion network.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fusion::{FusionError, FusionNetwork};
use crate::predictions::{PredictionError, PredictionPanel, PredictionSet};
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnsembleError {
    #[error(transparent)]
    Predictions(#[from] PredictionError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error("unknown strategy `{0}` (expected plurality, averaging or label_fusion)")]
    UnknownStrategy(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Plurality,
    Averaging,
    LabelFusion,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [
        Strategy::Plurality,
        Strategy::Averaging,
        Strategy::LabelFusion,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Plurality => "plurality",
            Strategy::Averaging => "averaging",
            Strategy::LabelFusion => "label_fusion",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = EnsembleError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "plurality" | "plurality_voting" | "voting" => Ok(Strategy::Plurality),
            "averaging" | "average" | "mean" => Ok(Strategy::Averaging),
            "label_fusion" | "fusion" => Ok(Strategy::LabelFusion),
            _ => Err(EnsembleError::UnknownStrategy(s.to_string())),
        }
    }
}

/// Class chosen when exactly half the models vote positive.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    #[default]
    Positive,
    Negative,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleOutput<T> {
    pub strategy: Strategy,
    /// Fused set, named after the strategy, in the panel's sample order.
    pub fused: PredictionSet<T>,
}

impl<T: Scalar> EnsembleOutput<T> {
    /// Class decisions at the 0.5 cutoff.
    pub fn predicted_classes(&self) -> Vec<u8> {
        let half = T::of(0.5);
        self.fused
            .records()
            .iter()
            .map(|r| u8::from(r.prob >= half))
            .collect()
    }
}

/// Each model votes 1 iff its prob ≥ `threshold`; the fused prob is the
/// fraction of positive votes.
///
/// An exact tie yields 0.5 under [`TieBreak::Positive`] (so the 0.5 cutoff
/// picks class 1) and the largest value below 0.5 under
/// [`TieBreak::Negative`].
pub fn plurality_vote<T: Scalar>(
    panel: &PredictionPanel<T>,
    threshold: T,
    tie_break: TieBreak,
) -> Result<EnsembleOutput<T>, EnsembleError> {
    let m = panel.n_models();
    let probs = (0..panel.n_samples())
        .map(|i| {
            let votes = panel
                .models()
                .iter()
                .filter(|s| s.records()[i].prob >= threshold)
                .count();
            if 2 * votes == m {
                match tie_break {
                    TieBreak::Positive => T::of(0.5),
                    TieBreak::Negative => T::of(0.5) - T::epsilon() * T::of(0.5),
                }
            } else {
                T::of_usize(votes) / T::of_usize(m)
            }
        })
        .collect();
    output(panel, Strategy::Plurality, probs)
}

/// Unweighted mean of member probabilities.
///
/// Accumulated as `p_0 + Σ (p_i − p_0) / M` so that a panel of identical
/// members reproduces the member exactly.
pub fn average_probs<T: Scalar>(
    panel: &PredictionPanel<T>,
) -> Result<EnsembleOutput<T>, EnsembleError> {
    let m = T::of_usize(panel.n_models());
    let probs = (0..panel.n_samples())
        .map(|i| {
            let first = panel.models()[0].records()[i].prob;
            let offset: T = panel.models()[1..]
                .iter()
                .map(|s| s.records()[i].prob - first)
                .sum();
            (first + offset / m).max(T::zero()).min(T::one())
        })
        .collect();
    output(panel, Strategy::Averaging, probs)
}

/// Forward pass of a trained fusion network on each sample's member
/// probabilities in panel model order. A network that records model names
/// only accepts a panel with the same names in the same order.
pub fn label_fusion_predict<T: Scalar>(
    net: &FusionNetwork<T>,
    panel: &PredictionPanel<T>,
) -> Result<EnsembleOutput<T>, EnsembleError> {
    if net.n_inputs() != panel.n_models() {
        return Err(FusionError::DimensionMismatch {
            expected: net.n_inputs(),
            got: panel.n_models(),
        }
        .into());
    }
    let names = panel.model_names();
    if !net.model_names().is_empty() && net.model_names() != names.as_slice() {
        return Err(FusionError::ModelOrder {
            expected: net.model_names().to_vec(),
            got: names,
        }
        .into());
    }
    let probs = (0..panel.n_samples())
        .map(|i| net.forward(&panel.features(i)))
        .collect::<Result<Vec<_>, _>>()?;
    output(panel, Strategy::LabelFusion, probs)
}

fn output<T: Scalar>(
    panel: &PredictionPanel<T>,
    strategy: Strategy,
    probs: Vec<T>,
) -> Result<EnsembleOutput<T>, EnsembleError> {
    Ok(EnsembleOutput {
        strategy,
        fused: panel.with_probs(strategy.name(), probs)?,
    })
}

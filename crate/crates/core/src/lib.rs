//! Classifier ensembling and calibration toolkit.
//!
//! Per-model binary predictions are loaded and aligned into a panel
//! ([`predictions`]), fused by plurality voting, probability averaging or a
//! trained label-fusion network ([`ensemble`], [`fusion`]), and scored with
//! AUC, F1, ECE and the composite `S = AUC + 0.5·F1 + 0.5·(1 − ECE)`
//! ([`metrics`]). [`harness`] ties these into ranked reports, [`augment`]
//! holds the image preprocessing chain and [`synthgen`] generates fixtures
//! with known AUC and calibration.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the scalar to `f64`, with `*32` variants for `f32`.

pub mod augment;
pub mod ensemble;
pub mod fusion;
pub mod harness;
pub mod metrics;
pub mod predictions;
pub mod rng;
pub mod scalar;
pub mod synthgen;

pub use scalar::Scalar;

pub type PredictionRecord = predictions::PredictionRecord<f64>;
pub type PredictionSet = predictions::PredictionSet<f64>;
pub type PredictionPanel = predictions::PredictionPanel<f64>;
pub type MetricsReport = metrics::MetricsReport<f64>;
pub type BinStats = metrics::BinStats<f64>;
pub type EnsembleOutput = ensemble::EnsembleOutput<f64>;
pub type FusionNetwork = fusion::FusionNetwork<f64>;
pub type AdamState = fusion::AdamState<f64>;
pub type Image = augment::Image<f64>;

pub type PredictionSet32 = predictions::PredictionSet<f32>;
pub type PredictionPanel32 = predictions::PredictionPanel<f32>;
pub type MetricsReport32 = metrics::MetricsReport<f32>;
pub type FusionNetwork32 = fusion::FusionNetwork<f32>;
pub type Image32 = augment::Image<f32>;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{
    adam_step, init_network, loss_and_gradient, mean_loss, AdamState, FusionError, FusionNetwork,
    TrainConfig,
};
use crate::metrics::{evaluate_columns, MetricsReport};
use crate::predictions::PredictionPanel;
use crate::rng::SplitMix64;
use crate::scalar::Scalar;

pub const LOG_HEADER: &str = "epoch,loss,val_auc,val_f1,val_ece,val_S,lr";

/// Sample indices (canonical order) of the two partitions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

/// Seeded split that keeps each class's share in both partitions.
///
/// Each class contributes `round(fraction · n_class)` samples to
/// validation, clamped so that both partitions keep at least one sample of
/// every class.
pub fn stratified_split(labels: &[u8], fraction: f64, seed: u64) -> Result<Split, FusionError> {
    let mut rng = SplitMix64::derive(seed, 1);
    let mut train = Vec::new();
    let mut validation = Vec::new();
    for class in [0u8, 1] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if idx.len() < 2 {
            return Err(FusionError::DegenerateSplit(format!(
                "class {class} has {} sample(s); each partition needs at least one",
                idx.len()
            )));
        }
        rng.shuffle(&mut idx);
        let n_val = ((fraction * idx.len() as f64).round() as usize).clamp(1, idx.len() - 1);
        validation.extend_from_slice(&idx[..n_val]);
        train.extend_from_slice(&idx[n_val..]);
    }
    train.sort_unstable();
    validation.sort_unstable();
    Ok(Split { train, validation })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// Completed epochs; row 0 is the untrained network.
    pub epoch: usize,
    pub loss: f64,
    pub val_auc: f64,
    pub val_f1: f64,
    pub val_ece: f64,
    pub val_s: f64,
    /// Rate applied during this epoch (0 for the untrained row).
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub records: Vec<EpochRecord>,
    pub best_epoch: usize,
}

impl TrainingLog {
    pub fn best(&self) -> &EpochRecord {
        &self.records[self.best_epoch]
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{LOG_HEADER}\n");
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.epoch, r.loss, r.val_auc, r.val_f1, r.val_ece, r.val_s, r.lr
            );
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct TrainedFusion<T> {
    /// Checkpoint with the highest validation score.
    pub network: FusionNetwork<T>,
    pub log: TrainingLog,
    pub split: Split,
}

fn gather<T: Clone>(rows: &[T], idx: &[usize]) -> Vec<T> {
    idx.iter().map(|&i| rows[i].clone()).collect()
}

fn validation_report<T: Scalar>(
    net: &FusionNetwork<T>,
    inputs: &[Vec<T>],
    labels: &[u8],
    bins: usize,
) -> Result<MetricsReport<T>, FusionError> {
    let probs = inputs
        .iter()
        .map(|x| net.forward(x))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(evaluate_columns("label_fusion", &probs, labels, bins)?)
}

/// Trains the fusion network with Adam and keeps the epoch whose
/// validation score `S` is highest (earliest on ties, untrained included).
pub fn train<T: Scalar>(
    panel: &PredictionPanel<T>,
    config: &TrainConfig,
) -> Result<TrainedFusion<T>, FusionError> {
    config.validate()?;
    let labels = panel.labels();
    let split = stratified_split(&labels, config.validation_fraction, config.seed)?;
    let features = panel.feature_rows();
    let train_x = gather(&features, &split.train);
    let train_y = gather(&labels, &split.train);
    let val_x = gather(&features, &split.validation);
    let val_y = gather(&labels, &split.validation);

    let mut net: FusionNetwork<T> = init_network(&panel.model_names(), config)?;
    let mut adam = AdamState::new(&net, config);
    let mut order_rng = SplitMix64::derive(config.seed, 2);

    let record =
        |net: &FusionNetwork<T>, epoch: usize, lr: f64| -> Result<(EpochRecord, T), FusionError> {
            let loss = mean_loss(net, &train_x, &train_y)?;
            let report = validation_report(net, &val_x, &val_y, config.ece_bins)?;
            Ok((
                EpochRecord {
                    epoch,
                    loss: loss.as_f64(),
                    val_auc: report.auc.as_f64(),
                    val_f1: report.f1.as_f64(),
                    val_ece: report.ece.as_f64(),
                    val_s: report.overall.as_f64(),
                    lr,
                },
                report.overall,
            ))
        };

    let (first, mut best_score) = record(&net, 0, 0.0)?;
    let mut records = vec![first];
    let mut best_epoch = 0;
    let mut best_net = net.clone();

    let mut order: Vec<usize> = (0..train_x.len()).collect();
    for epoch in 1..=config.epochs {
        let lr_index = epoch - 1;
        order_rng.shuffle(&mut order);
        for batch in order.chunks(config.batch_size) {
            let xs = gather(&train_x, batch);
            let ys = gather(&train_y, batch);
            let (_, grads) = loss_and_gradient(&net, &xs, &ys)?;
            adam_step(&mut net, &grads, &mut adam, lr_index)?;
        }
        let (row, score) = record(&net, epoch, adam.learning_rate(lr_index))?;
        if !row.loss.is_finite() {
            return Err(FusionError::InvalidNetwork(format!(
                "training loss diverged at epoch {epoch}"
            )));
        }
        records.push(row);
        if score > best_score {
            best_score = score;
            best_epoch = epoch;
            best_net = net.clone();
        }
    }

    Ok(TrainedFusion {
        network: best_net,
        log: TrainingLog {
            records,
            best_epoch,
        },
        split,
    })
}

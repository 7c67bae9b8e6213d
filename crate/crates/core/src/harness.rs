//! End-to-end evaluation: load base-model predictions, run every ensemble
//! strategy, rank all sources by the composite score and render the result
//! in the `Network | AUC | F1 Score | ECE | Overall Score` layout.
//!
//! All rows, base models included, are evaluated on the fusion network's
//! validation split so that the learned ensemble is never scored on
//! samples it was trained on.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ensemble::{
    average_probs, label_fusion_predict, plurality_vote, EnsembleError, TieBreak,
};
use crate::fusion::{train, FusionError, TrainConfig, TrainedFusion};
use crate::metrics::{
    evaluate, overall_score, MetricsError, MetricsReport, DEFAULT_ECE_BINS, DEFAULT_THRESHOLD,
};
use crate::predictions::{align_panel, load_prediction_set, PredictionError, PredictionPanel};

/// Largest |printed − recomputed| overall score accepted as rounding.
pub const SCORE_TOLERANCE: f64 = 5e-4;

/// Rows of the two published results tables, as printed.
pub const PUBLISHED_ROWS_CSV: &str = include_str!("../data/published_rows.csv");

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Predictions(#[from] PredictionError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid run config: {0}")]
    Config(String),
    #[error("malformed published row {row}: {message}")]
    PublishedRow { row: usize, message: String },
    #[error("unknown report format `{0}` (expected text, csv, json or markdown)")]
    UnknownFormat(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputFile {
    pub path: PathBuf,
    pub name: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Text,
    Csv,
    Json,
    Markdown,
}

impl ReportFormat {
    pub const ALL: [ReportFormat; 4] = [
        ReportFormat::Text,
        ReportFormat::Csv,
        ReportFormat::Json,
        ReportFormat::Markdown,
    ];

    /// Fixed output file name inside a run directory.
    pub fn file_name(self) -> &'static str {
        match self {
            ReportFormat::Text => "report.txt",
            ReportFormat::Csv => "report.csv",
            ReportFormat::Json => "report.json",
            ReportFormat::Markdown => "report.md",
        }
    }
}

impl FromStr for ReportFormat {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "text" | "text-table" | "txt" => Ok(ReportFormat::Text),
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            _ => Err(HarnessError::UnknownFormat(s.to_string())),
        }
    }
}

fn default_formats() -> Vec<ReportFormat> {
    vec![
        ReportFormat::Markdown,
        ReportFormat::Csv,
        ReportFormat::Json,
    ]
}

fn default_bins() -> usize {
    DEFAULT_ECE_BINS
}

fn default_threshold() -> f64 {
    DEFAULT_THRESHOLD
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub inputs: Vec<InputFile>,
    #[serde(default = "default_bins")]
    pub ece_bins: usize,
    #[serde(default)]
    pub fusion: TrainConfig,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Overrides `fusion.seed` when present.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_formats")]
    pub formats: Vec<ReportFormat>,
    #[serde(default = "default_threshold")]
    pub vote_threshold: f64,
    #[serde(default)]
    pub tie_break: TieBreak,
}

impl RunConfig {
    pub fn new(inputs: Vec<InputFile>) -> Self {
        Self {
            inputs,
            ece_bins: DEFAULT_ECE_BINS,
            fusion: TrainConfig::default(),
            output_dir: None,
            seed: None,
            formats: default_formats(),
            vote_threshold: DEFAULT_THRESHOLD,
            tie_break: TieBreak::Positive,
        }
    }

    /// Parses a JSON config; relative input paths resolve against `base`.
    pub fn from_json(text: &str, base: Option<&Path>) -> Result<Self, HarnessError> {
        let mut cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        if let Some(base) = base {
            for input in &mut cfg.inputs {
                if input.path.is_relative() {
                    input.path = base.join(&input.path);
                }
            }
            if let Some(dir) = cfg.output_dir.as_mut().filter(|d| d.is_relative()) {
                *dir = base.join(&*dir);
            }
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_json(&text, path.parent())
    }

    pub fn effective_seed(&self) -> u64 {
        self.seed.unwrap_or(self.fusion.seed)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.inputs.is_empty() {
            return Err(HarnessError::Config(
                "at least one input is required".into(),
            ));
        }
        if self.ece_bins == 0 {
            return Err(HarnessError::Config("ece_bins must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.vote_threshold) {
            return Err(HarnessError::Config(
                "vote_threshold must lie in [0, 1]".into(),
            ));
        }
        Ok(())
    }
}

/// Printed overall score checked against the recomputed one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowCheck {
    pub name: String,
    pub printed: f64,
    pub recomputed: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PublishedRow {
    pub name: String,
    pub auc: f64,
    pub f1: f64,
    pub ece: f64,
    pub overall: f64,
}

pub fn parse_published_rows(text: &str) -> Result<Vec<PublishedRow>, HarnessError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    rdr.deserialize()
        .enumerate()
        .map(|(i, r)| {
            r.map_err(|e| HarnessError::PublishedRow {
                row: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn published_rows() -> Vec<PublishedRow> {
    parse_published_rows(PUBLISHED_ROWS_CSV).expect("bundled rows parse")
}

/// Recomputes `S` for each row and flags those off by more than
/// [`SCORE_TOLERANCE`].
pub fn check_published_rows(rows: &[PublishedRow]) -> Vec<RowCheck> {
    rows.iter()
        .map(|r| {
            let recomputed = overall_score(r.auc, r.f1, r.ece);
            RowCheck {
                name: r.name.clone(),
                printed: r.overall,
                recomputed,
                flagged: (recomputed - r.overall).abs() > SCORE_TOLERANCE,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedReport {
    /// Shown above the table.
    pub caption: String,
    /// Sorted by overall score, descending; ties keep input order.
    pub rows: Vec<MetricsReport<f64>>,
    /// Rows whose supplied overall score disagrees with the formula.
    pub flags: Vec<RowCheck>,
}

impl RankedReport {
    pub fn new(
        caption: impl Into<String>,
        mut rows: Vec<MetricsReport<f64>>,
        checks: Vec<RowCheck>,
    ) -> Self {
        rows.sort_by(|a, b| b.overall.total_cmp(&a.overall));
        Self {
            caption: caption.into(),
            rows,
            flags: checks.into_iter().filter(|c| c.flagged).collect(),
        }
    }

    /// Report over published rows: every `S` shown is recomputed, and rows
    /// whose printed `S` disagrees become footnotes.
    pub fn from_published(caption: impl Into<String>, rows: &[PublishedRow]) -> Self {
        let reports = rows
            .iter()
            .map(|r| MetricsReport::new(r.name.clone(), r.auc, r.f1, r.ece))
            .collect();
        Self::new(caption, reports, check_published_rows(rows))
    }

    pub fn row(&self, name: &str) -> Option<&MetricsReport<f64>> {
        self.rows.iter().find(|r| r.model_name == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn render(&self, format: ReportFormat) -> String {
        match format {
            ReportFormat::Text => self.render_text(),
            ReportFormat::Csv => self.render_csv(),
            ReportFormat::Json => self.to_json() + "\n",
            ReportFormat::Markdown => self.render_markdown(),
        }
    }

    fn is_flagged(&self, name: &str) -> bool {
        self.flags.iter().any(|f| f.name == name)
    }

    fn cells(&self) -> Vec<[String; 5]> {
        self.rows
            .iter()
            .map(|r| {
                let mark = if self.is_flagged(&r.model_name) {
                    "*"
                } else {
                    ""
                };
                [
                    format!("{}{mark}", r.model_name),
                    format!("{:.4}", r.auc),
                    format!("{:.4}", r.f1),
                    format!("{:.4}", r.ece),
                    format_score(r.overall),
                ]
            })
            .collect()
    }

    fn footnotes(&self) -> String {
        let mut out = String::new();
        for f in &self.flags {
            let _ = writeln!(
                out,
                "* {}: printed overall score {} differs from recomputed {} by {:.4} (tolerance {}).",
                f.name,
                format_score(f.printed),
                format_score(f.recomputed),
                (f.printed - f.recomputed).abs(),
                SCORE_TOLERANCE
            );
        }
        out
    }

    fn render_markdown(&self) -> String {
        let mut out = String::new();
        if !self.caption.is_empty() {
            let _ = writeln!(out, "{}\n", self.caption);
        }
        out.push_str("| Network | AUC | F1 Score | ECE | Overall Score |\n");
        out.push_str("|---|---|---|---|---|\n");
        for c in self.cells() {
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} | {} |",
                c[0], c[1], c[2], c[3], c[4]
            );
        }
        if !self.flags.is_empty() {
            out.push('\n');
            out.push_str(&self.footnotes());
        }
        out
    }

    fn render_text(&self) -> String {
        let header = ["Network", "AUC", "F1 Score", "ECE", "Overall Score"].map(String::from);
        let cells = self.cells();
        let mut widths = header.clone().map(|h| h.len());
        for row in &cells {
            for (w, c) in widths.iter_mut().zip(row) {
                *w = (*w).max(c.len());
            }
        }
        let line = |row: &[String; 5]| -> String {
            let mut s = format!("{:<w$}", row[0], w = widths[0]);
            for (c, w) in row[1..].iter().zip(&widths[1..]) {
                let _ = write!(s, "  {c:>w$}");
            }
            s.trim_end().to_string() + "\n"
        };
        let mut out = String::new();
        if !self.caption.is_empty() {
            let _ = writeln!(out, "{}", self.caption);
        }
        out.push_str(&line(&header));
        let total: usize = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
        let _ = writeln!(out, "{}", "-".repeat(total));
        for row in &cells {
            out.push_str(&line(row));
        }
        if !self.flags.is_empty() {
            out.push('\n');
            out.push_str(&self.footnotes());
        }
        out
    }

    fn render_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["network", "auc", "f1", "ece", "overall", "flagged"])
            .expect("in-memory write");
        for (r, c) in self.rows.iter().zip(self.cells()) {
            let flagged = self.is_flagged(&r.model_name).to_string();
            w.write_record([r.model_name.as_str(), &c[1], &c[2], &c[3], &c[4], &flagged])
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }
}

/// Overall score with five decimals, or four when the fifth is zero.
pub fn format_score(v: f64) -> String {
    let five = format!("{v:.5}");
    match five.strip_suffix('0') {
        Some(four) => four.to_string(),
        None => five,
    }
}

pub struct EvaluationRun {
    pub report: RankedReport,
    pub fusion: TrainedFusion<f64>,
}

/// Evaluates base models and the three ensembles on the fusion validation split.
pub fn evaluate_panel(
    panel: &PredictionPanel<f64>,
    config: &RunConfig,
) -> Result<EvaluationRun, HarnessError> {
    config.validate()?;
    let train_cfg = TrainConfig {
        seed: config.effective_seed(),
        ece_bins: config.ece_bins,
        ..config.fusion.clone()
    };
    let fusion = train(panel, &train_cfg)?;
    let val = panel.subset(&fusion.split.validation)?;

    let mut rows = val
        .models()
        .iter()
        .map(|m| evaluate(m, config.ece_bins))
        .collect::<Result<Vec<_>, _>>()?;
    for fused in [
        plurality_vote(&val, config.vote_threshold, config.tie_break)?,
        average_probs(&val)?,
        label_fusion_predict(&fusion.network, &val)?,
    ] {
        rows.push(evaluate(&fused.fused, config.ece_bins)?);
    }
    let checks = rows
        .iter()
        .map(|r| RowCheck {
            name: r.model_name.clone(),
            printed: r.overall,
            recomputed: overall_score(r.auc, r.f1, r.ece),
            flagged: false,
        })
        .collect::<Vec<_>>();
    let labels = val.labels();
    let positives = labels.iter().filter(|&&l| l == 1).count();
    let caption = format!(
        "Evaluated on the fusion validation split: {} samples ({} positive, {} negative); seed {}; {} ECE bins; best fusion epoch {}.",
        labels.len(),
        positives,
        labels.len() - positives,
        train_cfg.seed,
        config.ece_bins,
        fusion.log.best_epoch
    );
    Ok(EvaluationRun {
        report: RankedReport::new(caption, rows, checks),
        fusion,
    })
}

pub fn load_panel(inputs: &[InputFile]) -> Result<PredictionPanel<f64>, HarnessError> {
    let sets = inputs
        .iter()
        .map(|i| load_prediction_set(&i.path, &i.name))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(align_panel(sets)?)
}

pub fn run_evaluation(config: &RunConfig) -> Result<EvaluationRun, HarnessError> {
    config.validate()?;
    let panel = load_panel(&config.inputs)?;
    evaluate_panel(&panel, config)
}

pub const FUSION_NET_FILE: &str = "fusion_net.json";
pub const TRAINING_LOG_FILE: &str = "training_log.csv";

/// Writes the requested report formats plus the trained network and its
/// training log under `dir`, returning the paths written.
pub fn write_run(
    run: &EvaluationRun,
    dir: &Path,
    formats: &[ReportFormat],
) -> Result<Vec<PathBuf>, HarnessError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written = Vec::new();
    let mut put = |name: &str, body: String| -> Result<(), HarnessError> {
        let path = dir.join(name);
        std::fs::write(&path, body).map_err(io_err(&path))?;
        written.push(path);
        Ok(())
    };
    for &f in formats {
        put(f.file_name(), run.report.render(f))?;
    }
    put(FUSION_NET_FILE, run.fusion.network.to_json() + "\n")?;
    put(TRAINING_LOG_FILE, run.fusion.log.to_csv())?;
    Ok(written)
}

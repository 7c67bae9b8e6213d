//! Per-model classifier outputs: validated records, file ingestion and
//! alignment of several models into a panel.
//!
//! Files are either CSV with header `sample_id,label,prob` or a JSON array of
//! `{"sample_id", "label", "prob"}` objects. Two-column softmax outputs
//! (`prob_0,prob_1` in CSV, `"probs": [p0, p1]` in JSON) are reduced to the
//! positive-class column on load.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PredictionError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("missing or unrecognized header: expected `sample_id,label,prob` (got `{0}`)")]
    Header(String),
    #[error("malformed row {row}: {message}")]
    Malformed { row: usize, message: String },
    #[error("empty sample_id at row {row}")]
    EmptySampleId { row: usize },
    #[error("label must be 0 or 1 at row {row} (got `{value}`)")]
    InvalidLabel { row: usize, value: String },
    #[error("prob out of range at row {row} (got {value})")]
    ProbOutOfRange { row: usize, value: f64 },
    #[error("duplicate sample_id {id} at row {row}")]
    DuplicateSampleId { row: usize, id: String },
    #[error("prediction set `{0}` has no records")]
    Empty(String),
    #[error("invalid JSON: {0}")]
    Json(String),
    #[error("panel needs at least one prediction set")]
    NoSets,
    #[error("sample sets differ: `{first}` and `{other}` (e.g. sample_id {example})")]
    SampleSetsDiffer {
        first: String,
        other: String,
        example: String,
    },
    #[error("label conflict for sample_id {id} between `{first}` and `{other}`")]
    LabelConflict {
        id: String,
        first: String,
        other: String,
    },
}

/// One sample's ground truth and a model's positive-class probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct PredictionRecord<T> {
    pub sample_id: String,
    pub label: u8,
    pub prob: T,
}

impl<T: Scalar> PredictionRecord<T> {
    /// Validates one record; `row` is the 1-based data row used in errors.
    pub fn new(
        sample_id: impl Into<String>,
        label: u8,
        prob: T,
        row: usize,
    ) -> Result<Self, PredictionError> {
        let sample_id = sample_id.into();
        if sample_id.is_empty() {
            return Err(PredictionError::EmptySampleId { row });
        }
        if label > 1 {
            return Err(PredictionError::InvalidLabel {
                row,
                value: label.to_string(),
            });
        }
        if !(prob >= T::zero() && prob <= T::one()) {
            return Err(PredictionError::ProbOutOfRange {
                row,
                value: prob.as_f64(),
            });
        }
        Ok(Self {
            sample_id,
            label,
            prob,
        })
    }
}

/// One model's predictions. Always nonempty with unique sample ids.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "T: Scalar")]
pub struct PredictionSet<T> {
    model_name: String,
    records: Vec<PredictionRecord<T>>,
}

impl<T: Scalar> PredictionSet<T> {
    pub fn new(
        model_name: impl Into<String>,
        records: Vec<PredictionRecord<T>>,
    ) -> Result<Self, PredictionError> {
        let model_name = model_name.into();
        if records.is_empty() {
            return Err(PredictionError::Empty(model_name));
        }
        let mut seen = HashSet::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            // Re-check: records may have been built by struct literal.
            PredictionRecord::new(r.sample_id.as_str(), r.label, r.prob, i + 1)?;
            if !seen.insert(r.sample_id.as_str()) {
                return Err(PredictionError::DuplicateSampleId {
                    row: i + 1,
                    id: r.sample_id.clone(),
                });
            }
        }
        Ok(Self {
            model_name,
            records,
        })
    }

    /// Builds a set from parallel id/label/prob columns.
    pub fn from_columns(
        model_name: impl Into<String>,
        ids: &[String],
        labels: &[u8],
        probs: &[T],
    ) -> Result<Self, PredictionError> {
        let model_name = model_name.into();
        if ids.len() != labels.len() || ids.len() != probs.len() {
            return Err(PredictionError::Malformed {
                row: ids.len().min(labels.len()).min(probs.len()) + 1,
                message: "column lengths differ".into(),
            });
        }
        let records = ids
            .iter()
            .zip(labels)
            .zip(probs)
            .enumerate()
            .map(|(i, ((id, &label), &prob))| {
                PredictionRecord::new(id.as_str(), label, prob, i + 1)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(model_name, records)
    }

    pub fn model_name(&self) -> &str {
        &self.model_name
    }

    pub fn with_model_name(mut self, name: impl Into<String>) -> Self {
        self.model_name = name.into();
        self
    }

    pub fn records(&self) -> &[PredictionRecord<T>] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn probs(&self) -> Vec<T> {
        self.records.iter().map(|r| r.prob).collect()
    }

    pub fn labels(&self) -> Vec<u8> {
        self.records.iter().map(|r| r.label).collect()
    }

    pub fn sample_ids(&self) -> Vec<&str> {
        self.records.iter().map(|r| r.sample_id.as_str()).collect()
    }

    /// Canonical CSV rendering (`sample_id,label,prob`, shortest round-trip floats).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("sample_id,label,prob\n");
        for r in &self.records {
            let _ = writeln!(out, "{},{},{}", csv_field(&r.sample_id), r.label, r.prob);
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.records).expect("records serialize")
    }

    pub fn from_csv_str(model_name: &str, text: &str) -> Result<Self, PredictionError> {
        Self::from_csv_reader(model_name, text.as_bytes())
    }

    pub fn from_csv_reader<R: Read>(model_name: &str, reader: R) -> Result<Self, PredictionError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(reader);
        let header = rdr
            .headers()
            .map_err(|e| PredictionError::Header(e.to_string()))?
            .clone();
        let layout = CsvLayout::from_header(&header)?;
        let mut records = Vec::new();
        for (i, row) in rdr.records().enumerate() {
            let row_no = i + 1;
            let row = row.map_err(|e| PredictionError::Malformed {
                row: row_no,
                message: e.to_string(),
            })?;
            if row.len() != header.len() {
                return Err(PredictionError::Malformed {
                    row: row_no,
                    message: format!("expected {} fields, found {}", header.len(), row.len()),
                });
            }
            let id = &row[layout.id];
            let label = parse_label(&row[layout.label], row_no)?;
            let prob = match layout.prob {
                ProbColumns::Positive(c) => parse_prob(&row[c], row_no)?,
                ProbColumns::Softmax(c0, c1) => {
                    let p0 = parse_prob(&row[c0], row_no)?;
                    let p1 = parse_prob(&row[c1], row_no)?;
                    softmax_positive(p0, p1, row_no)?
                }
            };
            records.push(PredictionRecord::new(id, label, T::of(prob), row_no)?);
        }
        Self::new(model_name, records)
    }

    pub fn from_json_str(model_name: &str, text: &str) -> Result<Self, PredictionError> {
        let rows: Vec<JsonRow> =
            serde_json::from_str(text).map_err(|e| PredictionError::Json(e.to_string()))?;
        let mut records = Vec::with_capacity(rows.len());
        for (i, row) in rows.into_iter().enumerate() {
            let row_no = i + 1;
            let label = match row.label {
                0 => 0,
                1 => 1,
                other => {
                    return Err(PredictionError::InvalidLabel {
                        row: row_no,
                        value: other.to_string(),
                    })
                }
            };
            let prob = match (row.prob, row.probs) {
                (Some(p), None) => check_prob(p, row_no)?,
                (None, Some(ps)) if ps.len() == 2 => {
                    let p0 = check_prob(ps[0], row_no)?;
                    let p1 = check_prob(ps[1], row_no)?;
                    softmax_positive(p0, p1, row_no)?
                }
                _ => {
                    return Err(PredictionError::Malformed {
                        row: row_no,
                        message: "need exactly one of `prob` or two-element `probs`".into(),
                    })
                }
            };
            records.push(PredictionRecord::new(
                row.sample_id,
                label,
                T::of(prob),
                row_no,
            )?);
        }
        Self::new(model_name, records)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonRow {
    sample_id: String,
    label: i64,
    #[serde(default)]
    prob: Option<f64>,
    #[serde(default)]
    probs: Option<Vec<f64>>,
}

enum ProbColumns {
    Positive(usize),
    Softmax(usize, usize),
}

struct CsvLayout {
    id: usize,
    label: usize,
    prob: ProbColumns,
}

impl CsvLayout {
    fn from_header(header: &csv::StringRecord) -> Result<Self, PredictionError> {
        let find = |name: &str| header.iter().position(|h| h.eq_ignore_ascii_case(name));
        let bad = || PredictionError::Header(header.iter().collect::<Vec<_>>().join(","));
        let id = find("sample_id").ok_or_else(bad)?;
        let label = find("label").ok_or_else(bad)?;
        let prob = match (find("prob"), find("prob_0"), find("prob_1")) {
            (Some(c), None, None) => ProbColumns::Positive(c),
            (None, Some(c0), Some(c1)) => ProbColumns::Softmax(c0, c1),
            _ => return Err(bad()),
        };
        Ok(Self { id, label, prob })
    }
}

fn parse_label(field: &str, row: usize) -> Result<u8, PredictionError> {
    match field {
        "0" => Ok(0),
        "1" => Ok(1),
        _ => Err(PredictionError::InvalidLabel {
            row,
            value: field.to_string(),
        }),
    }
}

fn parse_prob(field: &str, row: usize) -> Result<f64, PredictionError> {
    let v: f64 = field.parse().map_err(|_| PredictionError::Malformed {
        row,
        message: format!("prob `{field}` is not a number"),
    })?;
    check_prob(v, row)
}

fn check_prob(v: f64, row: usize) -> Result<f64, PredictionError> {
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(PredictionError::ProbOutOfRange { row, value: v })
    }
}

fn softmax_positive(p0: f64, p1: f64, row: usize) -> Result<f64, PredictionError> {
    let total = p0 + p1;
    if total <= 0.0 {
        return Err(PredictionError::Malformed {
            row,
            message: "softmax columns sum to zero".into(),
        });
    }
    Ok(p1 / total)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) || s.trim() != s {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Loads one model's predictions; `.json` files use the JSON form, anything
/// else is read as CSV.
pub fn load_prediction_set<T: Scalar>(
    path: impl AsRef<Path>,
    model_name: &str,
) -> Result<PredictionSet<T>, PredictionError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| PredictionError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let is_json = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if is_json {
        PredictionSet::from_json_str(model_name, &text)
    } else {
        PredictionSet::from_csv_str(model_name, &text)
    }
}

/// Several models' predictions over the same samples, each in canonical
/// (lexicographic `sample_id`) order.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionPanel<T> {
    models: Vec<PredictionSet<T>>,
}

impl<T: Scalar> PredictionPanel<T> {
    pub fn models(&self) -> &[PredictionSet<T>] {
        &self.models
    }

    pub fn n_models(&self) -> usize {
        self.models.len()
    }

    pub fn n_samples(&self) -> usize {
        self.models[0].len()
    }

    pub fn model_names(&self) -> Vec<String> {
        self.models.iter().map(|m| m.model_name.clone()).collect()
    }

    pub fn sample_ids(&self) -> Vec<String> {
        self.models[0]
            .records
            .iter()
            .map(|r| r.sample_id.clone())
            .collect()
    }

    pub fn labels(&self) -> Vec<u8> {
        self.models[0].labels()
    }

    /// Member probabilities for sample `i`, in model order.
    pub fn features(&self, i: usize) -> Vec<T> {
        self.models.iter().map(|m| m.records[i].prob).collect()
    }

    /// Row-wise feature matrix (`n_samples` rows of `n_models` probs).
    pub fn feature_rows(&self) -> Vec<Vec<T>> {
        (0..self.n_samples()).map(|i| self.features(i)).collect()
    }

    /// Restricts every member to the samples at `indices`, kept in
    /// canonical order regardless of the order given.
    pub fn subset(&self, indices: &[usize]) -> Result<Self, PredictionError> {
        let mut idx = indices.to_vec();
        idx.sort_unstable();
        idx.dedup();
        let models = self
            .models
            .iter()
            .map(|m| {
                let records = idx
                    .iter()
                    .filter_map(|&i| m.records.get(i).cloned())
                    .collect();
                PredictionSet::new(m.model_name.clone(), records)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { models })
    }

    /// Builds a set sharing this panel's ids and labels with new probabilities.
    pub fn with_probs(
        &self,
        name: &str,
        probs: Vec<T>,
    ) -> Result<PredictionSet<T>, PredictionError> {
        let records = self.models[0]
            .records
            .iter()
            .zip(probs)
            .enumerate()
            .map(|(i, (r, p))| PredictionRecord::new(r.sample_id.as_str(), r.label, p, i + 1))
            .collect::<Result<Vec<_>, _>>()?;
        if records.len() != self.n_samples() {
            return Err(PredictionError::Malformed {
                row: records.len() + 1,
                message: "fused probability count differs from panel size".into(),
            });
        }
        PredictionSet::new(name, records)
    }
}

/// Reorders every set to canonical sample order and checks that all sets
/// cover the same samples with the same labels.
pub fn align_panel<T: Scalar>(
    sets: impl IntoIterator<Item = PredictionSet<T>>,
) -> Result<PredictionPanel<T>, PredictionError> {
    let mut models: Vec<PredictionSet<T>> = sets.into_iter().collect();
    if models.is_empty() {
        return Err(PredictionError::NoSets);
    }
    for m in &mut models {
        m.records.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
    }
    let reference: BTreeMap<&str, u8> = models[0]
        .records
        .iter()
        .map(|r| (r.sample_id.as_str(), r.label))
        .collect();
    let first = &models[0];
    for other in &models[1..] {
        if other.len() != first.len() {
            let example = symmetric_difference_example(first, other);
            return Err(PredictionError::SampleSetsDiffer {
                first: first.model_name.clone(),
                other: other.model_name.clone(),
                example,
            });
        }
        for r in &other.records {
            match reference.get(r.sample_id.as_str()) {
                None => {
                    return Err(PredictionError::SampleSetsDiffer {
                        first: first.model_name.clone(),
                        other: other.model_name.clone(),
                        example: r.sample_id.clone(),
                    })
                }
                Some(&label) if label != r.label => {
                    return Err(PredictionError::LabelConflict {
                        id: r.sample_id.clone(),
                        first: first.model_name.clone(),
                        other: other.model_name.clone(),
                    })
                }
                Some(_) => {}
            }
        }
    }
    Ok(PredictionPanel { models })
}

fn symmetric_difference_example<T>(a: &PredictionSet<T>, b: &PredictionSet<T>) -> String {
    let ids_a: HashSet<&str> = a.records.iter().map(|r| r.sample_id.as_str()).collect();
    let ids_b: HashSet<&str> = b.records.iter().map(|r| r.sample_id.as_str()).collect();
    let mut diff: Vec<&str> = ids_a.symmetric_difference(&ids_b).copied().collect();
    diff.sort_unstable();
    diff.first().map(|s| s.to_string()).unwrap_or_default()
}

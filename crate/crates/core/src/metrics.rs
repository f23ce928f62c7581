//! Confusion matrix, per-class and macro-averaged F1, Cohen's kappa and the
//! divergent-subset filter.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{LabeledRecord, SentimentLabel};

const K: usize = SentimentLabel::COUNT;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("label sequences differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("no examples to score")]
    EmptyMatrix,
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Rows are gold labels, columns are predictions.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; K]; K],
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    fn true_pos(&self, c: usize) -> u64 {
        self.counts[c][c]
    }

    fn predicted(&self, c: usize) -> u64 {
        (0..K).map(|g| self.counts[g][c]).sum()
    }

    fn support(&self, c: usize) -> u64 {
        self.counts[c].iter().sum()
    }

    /// Precision, recall and F1 per class, with every 0/0 taken as 0.
    pub fn class_scores(&self) -> [ClassScores; K] {
        std::array::from_fn(|c| {
            let tp = self.true_pos(c) as f64;
            let ratio = |num: f64, den: u64| if den == 0 { 0.0 } else { num / den as f64 };
            let precision = ratio(tp, self.predicted(c));
            let recall = ratio(tp, self.support(c));
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            ClassScores {
                label: SentimentLabel::from_index(c).expect("class index"),
                precision,
                recall,
                f1,
                support: self.support(c),
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub label: SentimentLabel,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

pub fn confusion_matrix(gold: &[SentimentLabel], pred: &[SentimentLabel]) -> Result<ConfusionMatrix, MetricsError> {
    if gold.len() != pred.len() {
        return Err(MetricsError::LengthMismatch(gold.len(), pred.len()));
    }
    let mut m = ConfusionMatrix::default();
    for (g, p) in gold.iter().zip(pred) {
        m.counts[g.index()][p.index()] += 1;
    }
    Ok(m)
}

/// Unweighted mean of the three class F1 scores.
pub fn macro_f1(m: &ConfusionMatrix) -> Result<f64, MetricsError> {
    if m.total() == 0 {
        return Err(MetricsError::EmptyMatrix);
    }
    Ok(m.class_scores().iter().map(|s| s.f1).sum::<f64>() / K as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Agreement {
    pub kappa: f64,
    pub observed: f64,
    pub expected: f64,
    pub n: usize,
}

/// Cohen's κ = (p_o − p_e)/(1 − p_e). When chance agreement is 1 (both
/// raters used one identical class throughout) κ is defined as 1.
pub fn agreement(a: &[SentimentLabel], b: &[SentimentLabel]) -> Result<Agreement, MetricsError> {
    if a.len() != b.len() {
        return Err(MetricsError::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(MetricsError::EmptyMatrix);
    }
    let m = confusion_matrix(a, b)?;
    let n = a.len() as f64;
    let observed = (0..K).map(|c| m.counts[c][c]).sum::<u64>() as f64 / n;
    let expected = (0..K)
        .map(|c| (m.support(c) as f64 / n) * (m.predicted(c) as f64 / n))
        .sum::<f64>();
    let kappa = if expected >= 1.0 {
        if observed >= 1.0 {
            1.0
        } else {
            0.0
        }
    } else {
        (observed - expected) / (1.0 - expected)
    };
    Ok(Agreement {
        kappa,
        observed,
        expected,
        n: a.len(),
    })
}

pub fn cohens_kappa(a: &[SentimentLabel], b: &[SentimentLabel]) -> Result<f64, MetricsError> {
    agreement(a, b).map(|r| r.kappa)
}

/// Records whose sentence and targeted labels differ, in input order.
pub fn divergent_subset(records: &[LabeledRecord]) -> Vec<LabeledRecord> {
    records.iter().filter(|r| r.is_divergent()).cloned().collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubsetTag {
    #[default]
    Full,
    Divergent,
}

impl std::str::FromStr for SubsetTag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" => Ok(Self::Full),
            "divergent" => Ok(Self::Divergent),
            other => Err(format!("expected `full` or `divergent`, got {other:?}")),
        }
    }
}

impl SubsetTag {
    pub fn select(self, records: &[LabeledRecord]) -> Vec<LabeledRecord> {
        match self {
            Self::Full => records.to_vec(),
            Self::Divergent => divergent_subset(records),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub subset: SubsetTag,
    pub n_examples: usize,
    pub macro_f1: f64,
    pub per_class: Vec<ClassScores>,
    pub confusion: ConfusionMatrix,
}

pub fn evaluate(
    gold: &[SentimentLabel],
    pred: &[SentimentLabel],
    subset: SubsetTag,
) -> Result<MetricsReport, MetricsError> {
    let confusion = confusion_matrix(gold, pred)?;
    let macro_f1 = macro_f1(&confusion)?;
    Ok(MetricsReport {
        subset,
        n_examples: gold.len(),
        macro_f1,
        per_class: confusion.class_scores().to_vec(),
        confusion,
    })
}

/// One line of an offline prediction file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub id: String,
    pub gold: SentimentLabel,
    pub pred: SentimentLabel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probs: Option<[f64; K]>,
}

pub fn read_predictions(path: impl AsRef<Path>) -> Result<Vec<PredictionRow>, MetricsError> {
    let reader = BufReader::new(File::open(path)?);
    let mut rows = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        rows.push(serde_json::from_str(&line).map_err(|e| MetricsError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(rows)
}

pub fn write_predictions<W: Write>(w: &mut W, rows: &[PredictionRow]) -> Result<(), MetricsError> {
    for r in rows {
        writeln!(w, "{}", serde_json::to_string(r).expect("rows serialize"))?;
    }
    Ok(())
}

//! From-scratch classifiers over the 50 pattern counts.

mod bayes;
mod eval;
mod model_io;
mod tree;

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{count_features, FeatureVector, TokenDictionary, FEATURE_COUNT};
use crate::labeler::RiskLevel;
use crate::normalize::normalize_bytes;

pub use bayes::{train_nb, ClassStats, NaiveBayesModel, DEFAULT_ALPHA};
pub use eval::{evaluate, EvaluationReport};
pub use model_io::{read_model, write_model, MODEL_MAGIC};
pub use tree::{entropy, information_gain, train_tree, DecisionTreeModel, Node, DEFAULT_MAX_DEPTH};

/// Which corpus a row came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Provenance {
    MaliciousCapture,
    Legitimate,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::MaliciousCapture => "mal",
            Provenance::Legitimate => "leg",
        }
    }
}

impl FromStr for Provenance {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "mal" => Ok(Provenance::MaliciousCapture),
            "leg" => Ok(Provenance::Legitimate),
            _ => Err(format!("unknown provenance {s:?}")),
        }
    }
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One labeled row of the dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Sample {
    pub counts: [u32; FEATURE_COUNT],
    pub label: RiskLevel,
    pub provenance: Provenance,
}

impl Sample {
    pub fn new(counts: [u32; FEATURE_COUNT], label: RiskLevel, provenance: Provenance) -> Self {
        Self {
            counts,
            label,
            provenance,
        }
    }

    pub fn features(&self) -> FeatureVector {
        FeatureVector {
            counts: self.counts,
            label: Some(self.label),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LabeledDataset {
    pub rows: Vec<Sample>,
}

impl LabeledDataset {
    pub fn new(rows: Vec<Sample>) -> Self {
        Self { rows }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Rows per level, indexed by `RiskLevel::index`.
    pub fn class_counts(&self) -> [u64; 4] {
        let mut out = [0; 4];
        for r in &self.rows {
            out[r.label.index()] += 1;
        }
        out
    }
}

/// Seeded shuffle, then the first `floor(n * test_fraction)` rows become the
/// test set and the rest the training set. Returns `(train, test)`.
pub fn split(
    data: &LabeledDataset,
    test_fraction: f64,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    if data.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "test fraction must lie strictly between 0 and 1 (got {test_fraction})"
        )));
    }
    let n = data.len();
    // the epsilon keeps products like 100 * 0.29 from flooring one short
    let n_test = ((n as f64) * test_fraction + 1e-9).floor() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test = order[..n_test].iter().map(|&i| data.rows[i]).collect();
    let train = order[n_test..].iter().map(|&i| data.rows[i]).collect();
    Ok((LabeledDataset::new(train), LabeledDataset::new(test)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub level: RiskLevel,
    /// NB: max posterior. Tree: majority fraction of the leaf histogram.
    pub confidence: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "nb")]
    NaiveBayes,
    #[serde(rename = "tree")]
    Tree,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::NaiveBayes => "nb",
            ModelKind::Tree => "tree",
        }
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "nb" => Ok(ModelKind::NaiveBayes),
            "tree" => Ok(ModelKind::Tree),
            _ => Err(format!("unknown model kind {s:?} (expected nb or tree)")),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrainedModel {
    NaiveBayes(NaiveBayesModel),
    Tree(DecisionTreeModel),
}

impl TrainedModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            TrainedModel::NaiveBayes(_) => ModelKind::NaiveBayes,
            TrainedModel::Tree(_) => ModelKind::Tree,
        }
    }

    /// A vector with no matched pattern is level 1 with full confidence,
    /// whatever the model's priors say: the labeler can never produce
    /// anything else for it.
    pub fn predict(&self, counts: &[u32; FEATURE_COUNT]) -> Prediction {
        if counts.iter().all(|c| *c == 0) {
            return Prediction {
                level: RiskLevel::NONE,
                confidence: 1.0,
            };
        }
        match self {
            TrainedModel::NaiveBayes(m) => {
                let (level, posterior) = m.predict(counts);
                let confidence = posterior.iter().map(|(_, p)| *p).fold(0.0, f64::max);
                Prediction { level, confidence }
            }
            TrainedModel::Tree(m) => m.predict_with_confidence(counts),
        }
    }
}

/// Scores one raw query end to end.
pub fn classify_bytes(model: &TrainedModel, dict: &TokenDictionary, raw: &[u8]) -> Prediction {
    model.predict(&count_features(&normalize_bytes(raw), dict).counts)
}

impl From<NaiveBayesModel> for TrainedModel {
    fn from(m: NaiveBayesModel) -> Self {
        TrainedModel::NaiveBayes(m)
    }
}

impl From<DecisionTreeModel> for TrainedModel {
    fn from(m: DecisionTreeModel) -> Self {
        TrainedModel::Tree(m)
    }
}

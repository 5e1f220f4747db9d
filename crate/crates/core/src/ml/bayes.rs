//! Multinomial Naive Bayes over pattern counts.

use crate::error::{Error, Result};
use crate::features::FEATURE_COUNT;
use crate::labeler::RiskLevel;

use super::LabeledDataset;

pub const DEFAULT_ALPHA: f64 = 1.0;

/// Sufficient statistics of one class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassStats {
    pub level: RiskLevel,
    pub rows: u64,
    /// Sum of each feature's counts over the class rows.
    pub feature_sums: [u64; FEATURE_COUNT],
}

impl ClassStats {
    pub fn total(&self) -> u64 {
        self.feature_sums.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NaiveBayesModel {
    alpha: f64,
    /// Ascending by level; only classes seen in training.
    classes: Vec<ClassStats>,
    log_priors: Vec<f64>,
    log_likelihoods: Vec<[f64; FEATURE_COUNT]>,
}

impl NaiveBayesModel {
    /// Builds a model from per-class statistics.
    pub fn from_stats(alpha: f64, mut classes: Vec<ClassStats>) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "smoothing alpha must be positive (got {alpha})"
            )));
        }
        classes.retain(|c| c.rows > 0);
        if classes.is_empty() {
            return Err(Error::Empty("training set"));
        }
        classes.sort_by_key(|c| c.level);
        if classes.windows(2).any(|w| w[0].level == w[1].level) {
            return Err(Error::InvalidArgument("duplicate class".into()));
        }
        let n: u64 = classes.iter().map(|c| c.rows).sum();
        let log_priors = classes
            .iter()
            .map(|c| (c.rows as f64 / n as f64).ln())
            .collect();
        let log_likelihoods = classes
            .iter()
            .map(|c| {
                let denom = c.total() as f64 + FEATURE_COUNT as f64 * alpha;
                let mut out = [0.0; FEATURE_COUNT];
                for (o, s) in out.iter_mut().zip(c.feature_sums.iter()) {
                    *o = ((*s as f64 + alpha) / denom).ln();
                }
                out
            })
            .collect();
        Ok(Self {
            alpha,
            classes,
            log_priors,
            log_likelihoods,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn classes(&self) -> &[ClassStats] {
        &self.classes
    }

    pub fn prior(&self, level: RiskLevel) -> Option<f64> {
        let i = self.classes.iter().position(|c| c.level == level)?;
        Some(self.log_priors[i].exp())
    }

    /// Smoothed p(feature | class).
    pub fn feature_probability(&self, level: RiskLevel, feature: usize) -> Option<f64> {
        let i = self.classes.iter().position(|c| c.level == level)?;
        self.log_likelihoods[i].get(feature).map(|l| l.exp())
    }

    /// Unnormalized log posterior of every trained class.
    pub fn log_scores(&self, counts: &[u32; FEATURE_COUNT]) -> Vec<(RiskLevel, f64)> {
        self.classes
            .iter()
            .zip(self.log_priors.iter().zip(&self.log_likelihoods))
            .map(|(c, (lp, ll))| {
                let lik: f64 = counts
                    .iter()
                    .zip(ll.iter())
                    .filter(|(n, _)| **n > 0)
                    .map(|(n, l)| f64::from(*n) * l)
                    .sum();
                (c.level, lp + lik)
            })
            .collect()
    }

    /// Argmax level (ties go to the higher level) and the normalized
    /// posterior over trained classes.
    pub fn predict(&self, counts: &[u32; FEATURE_COUNT]) -> (RiskLevel, Vec<(RiskLevel, f64)>) {
        let scores = self.log_scores(counts);
        let mut best = 0;
        for (i, (_, s)) in scores.iter().enumerate() {
            if *s >= scores[best].1 {
                best = i;
            }
        }
        let max = scores[best].1;
        let z: f64 = scores.iter().map(|(_, s)| (s - max).exp()).sum();
        let posterior = scores
            .iter()
            .map(|(l, s)| (*l, (s - max).exp() / z))
            .collect();
        (scores[best].0, posterior)
    }
}

/// Fits class priors and Laplace/Lidstone-smoothed feature probabilities.
pub fn train_nb(train: &LabeledDataset, alpha: f64) -> Result<NaiveBayesModel> {
    if train.is_empty() {
        return Err(Error::Empty("training set"));
    }
    let mut classes: Vec<ClassStats> = RiskLevel::ALL
        .iter()
        .map(|&level| ClassStats {
            level,
            rows: 0,
            feature_sums: [0; FEATURE_COUNT],
        })
        .collect();
    for row in &train.rows {
        let c = &mut classes[row.label.index()];
        c.rows += 1;
        for (s, n) in c.feature_sums.iter_mut().zip(row.counts.iter()) {
            *s += u64::from(*n);
        }
    }
    NaiveBayesModel::from_stats(alpha, classes)
}

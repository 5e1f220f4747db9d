//! Entropy decision tree with integer `count <= t` splits.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::features::FEATURE_COUNT;
use crate::labeler::RiskLevel;
use crate::par;

use super::{LabeledDataset, Prediction, Sample};

pub const DEFAULT_MAX_DEPTH: usize = 10;

/// Gains at or below this are treated as zero.
const GAIN_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Node {
    Split {
        feature: usize,
        /// `count <= threshold` goes left.
        threshold: u32,
        left: Box<Node>,
        right: Box<Node>,
    },
    Leaf {
        level: RiskLevel,
        /// Training rows per level reaching this leaf.
        histogram: [u64; 4],
    },
}

impl Node {
    pub fn leaf(histogram: [u64; 4]) -> Self {
        Node::Leaf {
            level: majority(&histogram),
            histogram,
        }
    }

    /// Number of split nodes on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        match self {
            Node::Leaf { .. } => 0,
            Node::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn node_count(&self) -> usize {
        match self {
            Node::Leaf { .. } => 1,
            Node::Split { left, right, .. } => 1 + left.node_count() + right.node_count(),
        }
    }

    fn route(&self, counts: &[u32; FEATURE_COUNT]) -> &Node {
        let mut node = self;
        while let Node::Split {
            feature,
            threshold,
            left,
            right,
        } = node
        {
            node = if counts[*feature] <= *threshold {
                left
            } else {
                right
            };
        }
        node
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecisionTreeModel {
    pub root: Node,
    pub max_depth: usize,
}

impl DecisionTreeModel {
    pub fn new(root: Node, max_depth: usize) -> Result<Self> {
        if root.depth() > max_depth {
            return Err(Error::InvalidArgument(format!(
                "tree depth {} exceeds limit {max_depth}",
                root.depth()
            )));
        }
        Ok(Self { root, max_depth })
    }

    pub fn depth(&self) -> usize {
        self.root.depth()
    }

    pub fn predict(&self, counts: &[u32; FEATURE_COUNT]) -> RiskLevel {
        self.predict_with_confidence(counts).level
    }

    pub fn predict_with_confidence(&self, counts: &[u32; FEATURE_COUNT]) -> Prediction {
        match self.root.route(counts) {
            Node::Leaf { level, histogram } => {
                let total: u64 = histogram.iter().sum();
                let confidence = if total == 0 {
                    1.0
                } else {
                    histogram[level.index()] as f64 / total as f64
                };
                Prediction {
                    level: *level,
                    confidence,
                }
            }
            Node::Split { .. } => unreachable!("route always ends at a leaf"),
        }
    }
}

/// Shannon entropy in bits of a class histogram.
pub fn entropy(histogram: &[u64]) -> f64 {
    let n: u64 = histogram.iter().sum();
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    histogram
        .iter()
        .filter(|c| **c > 0)
        .map(|c| {
            let p = *c as f64 / n;
            -p * p.log2()
        })
        .sum()
}

/// Parent entropy minus the size-weighted entropy of the two children.
pub fn information_gain(parent: &[u64; 4], left: &[u64; 4], right: &[u64; 4]) -> f64 {
    let n: u64 = parent.iter().sum();
    if n == 0 {
        return 0.0;
    }
    let nl: u64 = left.iter().sum();
    let nr: u64 = right.iter().sum();
    entropy(parent)
        - (nl as f64 / n as f64) * entropy(left)
        - (nr as f64 / n as f64) * entropy(right)
}

/// Most frequent level, ties going to the higher level.
fn majority(histogram: &[u64; 4]) -> RiskLevel {
    let mut best = 0;
    for i in 0..4 {
        if histogram[i] >= histogram[best] {
            best = i;
        }
    }
    RiskLevel::from_index(best).expect("index < 4")
}

fn histogram_of(rows: &[Sample], idx: &[usize]) -> [u64; 4] {
    let mut h = [0; 4];
    for &i in idx {
        h[rows[i].label.index()] += 1;
    }
    h
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    feature: usize,
    threshold: u32,
    gain: f64,
}

/// Best threshold for one feature: highest gain, lowest threshold on ties.
fn best_for_feature(
    rows: &[Sample],
    idx: &[usize],
    parent: &[u64; 4],
    feature: usize,
) -> Option<Candidate> {
    let mut by_value: BTreeMap<u32, [u64; 4]> = BTreeMap::new();
    for &i in idx {
        by_value.entry(rows[i].counts[feature]).or_insert([0; 4])[rows[i].label.index()] += 1;
    }
    if by_value.len() < 2 {
        return None;
    }
    let mut left = [0u64; 4];
    let mut best: Option<Candidate> = None;
    // the largest value would leave the right side empty
    for (&value, h) in by_value.iter().take(by_value.len() - 1) {
        for k in 0..4 {
            left[k] += h[k];
        }
        let right: [u64; 4] = std::array::from_fn(|k| parent[k] - left[k]);
        let gain = information_gain(parent, &left, &right);
        if best.is_none_or(|b| gain > b.gain + GAIN_EPS) {
            best = Some(Candidate {
                feature,
                threshold: value,
                gain,
            });
        }
    }
    best
}

fn grow(rows: &[Sample], idx: Vec<usize>, depth: usize, max_depth: usize) -> Node {
    let parent = histogram_of(rows, &idx);
    let pure = parent.iter().filter(|c| **c > 0).count() <= 1;
    if pure || depth >= max_depth {
        return Node::leaf(parent);
    }
    let per_feature = par::map_range(FEATURE_COUNT, |f| best_for_feature(rows, &idx, &parent, f));
    let mut best: Option<Candidate> = None;
    for c in per_feature.into_iter().flatten() {
        if best.is_none_or(|b| c.gain > b.gain + GAIN_EPS) {
            best = Some(c);
        }
    }
    let best = match best {
        Some(b) if b.gain > GAIN_EPS => b,
        _ => return Node::leaf(parent),
    };
    let (left, right): (Vec<usize>, Vec<usize>) = idx
        .into_iter()
        .partition(|&i| rows[i].counts[best.feature] <= best.threshold);
    Node::Split {
        feature: best.feature,
        threshold: best.threshold,
        left: Box::new(grow(rows, left, depth + 1, max_depth)),
        right: Box::new(grow(rows, right, depth + 1, max_depth)),
    }
}

/// Greedy information-gain tree. Stops on purity, depth limit or when no
/// split has positive gain.
pub fn train_tree(train: &LabeledDataset, max_depth: usize) -> Result<DecisionTreeModel> {
    if train.is_empty() {
        return Err(Error::Empty("training set"));
    }
    let idx: Vec<usize> = (0..train.len()).collect();
    let root = grow(&train.rows, idx, 0, max_depth);
    DecisionTreeModel::new(root, max_depth)
}

use std::fmt;
use std::io::Write;

use crate::error::{Error, Result};
use crate::labeler::{verdict_from_level, BlockThreshold, RiskLevel, Verdict};
use crate::par;

use super::{LabeledDataset, Provenance, TrainedModel};

/// Held-out performance of one model.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub model: String,
    pub rows: usize,
    pub accuracy: f64,
    /// `confusion[true][predicted]`, indexed by `RiskLevel::index`.
    pub confusion: [[u64; 4]; 4],
    /// Truly non-attack rows predicted as attack, over all truly non-attack rows.
    pub false_positive_rate: f64,
    /// Legitimate-provenance rows predicted as attack, over all such rows.
    /// `None` when the test set has no legitimate rows.
    pub legit_false_positive_rate: Option<f64>,
    /// Truly attack rows predicted as attack.
    pub detection_rate: f64,
    pub threshold: BlockThreshold,
    pub seed: u64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn evaluate(
    model: &TrainedModel,
    test: &LabeledDataset,
    threshold: BlockThreshold,
    seed: u64,
) -> Result<EvaluationReport> {
    if test.is_empty() {
        return Err(Error::Empty("test set"));
    }
    let predicted: Vec<RiskLevel> = par::map(&test.rows, |r| model.predict(&r.counts).level);

    let mut confusion = [[0u64; 4]; 4];
    let (mut benign, mut fp, mut attacks, mut tp, mut legit, mut legit_fp) = (0, 0, 0, 0, 0, 0);
    for (row, pred) in test.rows.iter().zip(&predicted) {
        confusion[row.label.index()][pred.index()] += 1;
        let flagged = verdict_from_level(*pred, threshold) == Verdict::Attack;
        if verdict_from_level(row.label, threshold) == Verdict::Attack {
            attacks += 1;
            tp += u64::from(flagged);
        } else {
            benign += 1;
            fp += u64::from(flagged);
        }
        if row.provenance == Provenance::Legitimate {
            legit += 1;
            legit_fp += u64::from(flagged);
        }
    }
    let correct: u64 = (0..4).map(|i| confusion[i][i]).sum();
    Ok(EvaluationReport {
        model: model.kind().to_string(),
        rows: test.len(),
        accuracy: ratio(correct, test.len() as u64),
        confusion,
        false_positive_rate: ratio(fp, benign),
        legit_false_positive_rate: (legit > 0).then(|| ratio(legit_fp, legit)),
        detection_rate: ratio(tp, attacks),
        threshold,
        seed,
    })
}

impl EvaluationReport {
    /// `(metric, value)` pairs in output order.
    pub fn metrics(&self) -> Vec<(String, String)> {
        let mut out = vec![
            ("model".to_string(), self.model.clone()),
            ("rows".to_string(), self.rows.to_string()),
            ("accuracy".to_string(), format!("{:.6}", self.accuracy)),
            (
                "false_positive_rate".to_string(),
                format!("{:.6}", self.false_positive_rate),
            ),
            (
                "legit_false_positive_rate".to_string(),
                self.legit_false_positive_rate
                    .map_or_else(|| "NA".to_string(), |v| format!("{v:.6}")),
            ),
            (
                "detection_rate".to_string(),
                format!("{:.6}", self.detection_rate),
            ),
            ("threshold".to_string(), self.threshold.value().to_string()),
            ("seed".to_string(), self.seed.to_string()),
        ];
        for t in 0..4 {
            for p in 0..4 {
                out.push((
                    format!("confusion_{}_{}", t + 1, p + 1),
                    self.confusion[t][p].to_string(),
                ));
            }
        }
        out
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "metric,value")?;
        for (k, v) in self.metrics() {
            writeln!(w, "{k},{v}")?;
        }
        Ok(())
    }
}

impl fmt::Display for EvaluationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "model               {}", self.model)?;
        writeln!(f, "test rows           {}", self.rows)?;
        writeln!(f, "split seed          {}", self.seed)?;
        writeln!(f, "block threshold     {}", self.threshold.value())?;
        writeln!(f, "accuracy            {:.4}", self.accuracy)?;
        writeln!(f, "false positive rate {:.4}", self.false_positive_rate)?;
        match self.legit_false_positive_rate {
            Some(v) => writeln!(f, "legit FPR           {v:.4}")?,
            None => writeln!(f, "legit FPR           n/a")?,
        }
        writeln!(f, "detection rate      {:.4}", self.detection_rate)?;
        writeln!(f)?;
        writeln!(f, "true\\pred        1        2        3        4")?;
        for (t, row) in self.confusion.iter().enumerate() {
            write!(f, "{:>9}", t + 1)?;
            for c in row {
                write!(f, " {c:>8}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FEATURE_COUNT;
    use crate::ml::{DecisionTreeModel, Node, Sample};

    fn constant(level: u8) -> TrainedModel {
        let mut h = [0; 4];
        h[usize::from(level - 1)] = 1;
        TrainedModel::Tree(DecisionTreeModel::new(Node::leaf(h), 10).unwrap())
    }

    fn rows(levels: &[u8], prov: Provenance) -> LabeledDataset {
        LabeledDataset::new(
            levels
                .iter()
                .map(|l| {
                    // non-zero so the all-zero shortcut does not apply
                    let mut counts = [0; FEATURE_COUNT];
                    counts[0] = 1;
                    Sample::new(counts, RiskLevel::new(*l).unwrap(), prov)
                })
                .collect(),
        )
    }

    #[test]
    fn perfect_model() {
        let r = evaluate(
            &constant(2),
            &rows(&[2, 2, 2], Provenance::Legitimate),
            BlockThreshold::DEFAULT,
            1,
        )
        .unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.false_positive_rate, 0.0);
        assert_eq!(r.legit_false_positive_rate, Some(0.0));
        assert_eq!(r.confusion[1][1], 3);
    }

    #[test]
    fn always_attack_on_benign() {
        let r = evaluate(
            &constant(4),
            &rows(&[1, 2, 1], Provenance::Legitimate),
            BlockThreshold::DEFAULT,
            1,
        )
        .unwrap();
        assert_eq!(r.accuracy, 0.0);
        assert_eq!(r.false_positive_rate, 1.0);
        assert_eq!(r.legit_false_positive_rate, Some(1.0));
    }

    #[test]
    fn confusion_rows_sum_to_class_counts() {
        let d = rows(&[1, 2, 3, 4, 4, 3], Provenance::MaliciousCapture);
        let r = evaluate(&constant(3), &d, BlockThreshold::DEFAULT, 9).unwrap();
        let counts = d.class_counts();
        for (row, expected) in r.confusion.iter().zip(counts) {
            assert_eq!(row.iter().sum::<u64>(), expected);
        }
        assert_eq!(r.legit_false_positive_rate, None);
        assert_eq!(r.detection_rate, 1.0);
    }

    #[test]
    fn csv_layout() {
        let r = evaluate(
            &constant(1),
            &rows(&[1], Provenance::Legitimate),
            BlockThreshold::DEFAULT,
            3,
        )
        .unwrap();
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("metric,value\nmodel,tree\nrows,1\naccuracy,1.000000\n"));
        assert!(text.contains("\nconfusion_1_1,1\n"));
        assert!(format!("{r}").contains("accuracy            1.0000"));
    }

    #[test]
    fn empty_test_set() {
        assert!(evaluate(
            &constant(1),
            &LabeledDataset::default(),
            BlockThreshold::DEFAULT,
            1
        )
        .is_err());
    }
}

//! Versioned plain-text model files.
//!
//! ```text
//! SQLION-MODEL v1 nb
//! alpha 1
//! class <level> rows <n> prior <p>
//! sums <level> <s0> ... <s49>
//! prob <level> <p0> ... <p49>
//! ```
//!
//! ```text
//! SQLION-MODEL v1 tree
//! max_depth 10
//! split <feature> <threshold>      (preorder; left subtree first)
//! leaf <level> <n1> <n2> <n3> <n4>
//! ```
//!
//! Probabilities carry 12 significant digits. NB parameters are rebuilt
//! from the integer sums on load; the written probabilities are checked
//! against them.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::features::FEATURE_COUNT;
use crate::labeler::RiskLevel;

use super::{ClassStats, DecisionTreeModel, ModelKind, NaiveBayesModel, Node, TrainedModel};

pub const MODEL_MAGIC: &str = "SQLION-MODEL v1";

/// Decimal rendering with 12 significant digits.
pub(crate) fn fmt_sig12(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (11 - magnitude).max(0) as usize;
    format!("{x:.decimals$}")
}

pub fn write_model<W: Write>(model: &TrainedModel, mut w: W) -> Result<()> {
    writeln!(w, "{MODEL_MAGIC} {}", model.kind())?;
    match model {
        TrainedModel::NaiveBayes(m) => {
            writeln!(w, "alpha {}", m.alpha())?;
            for c in m.classes() {
                let prior = m.prior(c.level).expect("trained class");
                writeln!(
                    w,
                    "class {} rows {} prior {}",
                    c.level,
                    c.rows,
                    fmt_sig12(prior)
                )?;
                write!(w, "sums {}", c.level)?;
                for s in &c.feature_sums {
                    write!(w, " {s}")?;
                }
                writeln!(w)?;
                write!(w, "prob {}", c.level)?;
                for j in 0..FEATURE_COUNT {
                    let p = m.feature_probability(c.level, j).expect("feature index");
                    write!(w, " {}", fmt_sig12(p))?;
                }
                writeln!(w)?;
            }
        }
        TrainedModel::Tree(m) => {
            writeln!(w, "max_depth {}", m.max_depth)?;
            write_node(&m.root, &mut w)?;
        }
    }
    Ok(())
}

fn write_node<W: Write>(node: &Node, w: &mut W) -> Result<()> {
    match node {
        Node::Split {
            feature,
            threshold,
            left,
            right,
        } => {
            writeln!(w, "split {feature} {threshold}")?;
            write_node(left, w)?;
            write_node(right, w)?;
        }
        Node::Leaf { level, histogram } => {
            writeln!(
                w,
                "leaf {level} {} {} {} {}",
                histogram[0], histogram[1], histogram[2], histogram[3]
            )?;
        }
    }
    Ok(())
}

struct Lines {
    lines: Vec<String>,
    pos: usize,
}

impl Lines {
    fn next(&mut self) -> Result<(usize, Vec<&str>)> {
        let i = self.pos;
        let line = self
            .lines
            .get(i)
            .ok_or_else(|| Error::parse(i + 1, "unexpected end of model file"))?;
        self.pos += 1;
        Ok((i + 1, line.split(' ').collect()))
    }

    fn done(&self) -> bool {
        self.pos >= self.lines.len()
    }
}

fn num<T: std::str::FromStr>(line: usize, s: &str, what: &str) -> Result<T> {
    s.parse()
        .map_err(|_| Error::parse(line, format!("bad {what} {s:?}")))
}

fn level(line: usize, s: &str) -> Result<RiskLevel> {
    let v: u8 = num(line, s, "level")?;
    RiskLevel::new(v).ok_or_else(|| Error::LabelOutOfRange {
        line,
        value: s.to_string(),
    })
}

fn expect_fields(line: usize, fields: &[&str], keyword: &str, n: usize) -> Result<()> {
    if fields.first() != Some(&keyword) {
        return Err(Error::parse(line, format!("expected {keyword:?} record")));
    }
    if fields.len() != n {
        return Err(Error::ColumnCount {
            line,
            expected: n,
            found: fields.len(),
        });
    }
    Ok(())
}

pub fn read_model<R: BufRead>(r: R) -> Result<TrainedModel> {
    let lines: Vec<String> = r.lines().collect::<std::io::Result<_>>()?;
    let header = lines.first().cloned().unwrap_or_default();
    let kind = header
        .strip_prefix(MODEL_MAGIC)
        .and_then(|rest| rest.strip_prefix(' '))
        .and_then(|k| k.parse::<ModelKind>().ok())
        .ok_or_else(|| Error::VersionMismatch {
            expected: format!("{MODEL_MAGIC} <nb|tree>"),
            found: header.clone(),
        })?;
    let mut it = Lines { lines, pos: 1 };
    let model = match kind {
        ModelKind::NaiveBayes => TrainedModel::NaiveBayes(read_nb(&mut it)?),
        ModelKind::Tree => {
            let (ln, f) = it.next()?;
            expect_fields(ln, &f, "max_depth", 2)?;
            let max_depth: usize = num(ln, f[1], "max_depth")?;
            let root = read_node(&mut it, 0, max_depth)?;
            TrainedModel::Tree(DecisionTreeModel::new(root, max_depth)?)
        }
    };
    if !it.done() {
        return Err(Error::parse(it.pos + 1, "trailing records after model"));
    }
    Ok(model)
}

fn read_nb(it: &mut Lines) -> Result<NaiveBayesModel> {
    let (ln, f) = it.next()?;
    expect_fields(ln, &f, "alpha", 2)?;
    let alpha: f64 = num(ln, f[1], "alpha")?;

    let mut classes = Vec::new();
    let mut written = Vec::new();
    while !it.done() {
        let (ln, f) = it.next()?;
        expect_fields(ln, &f, "class", 6)?;
        if f[2] != "rows" || f[4] != "prior" {
            return Err(Error::parse(ln, "malformed class record"));
        }
        let lv = level(ln, f[1])?;
        let rows: u64 = num(ln, f[3], "row count")?;
        let prior: f64 = num(ln, f[5], "prior")?;

        let (ln, f) = it.next()?;
        expect_fields(ln, &f, "sums", FEATURE_COUNT + 2)?;
        if level(ln, f[1])? != lv {
            return Err(Error::parse(ln, "sums record belongs to another class"));
        }
        let mut feature_sums = [0u64; FEATURE_COUNT];
        for (s, v) in feature_sums.iter_mut().zip(&f[2..]) {
            *s = num(ln, v, "feature sum")?;
        }

        let (pln, f) = it.next()?;
        expect_fields(pln, &f, "prob", FEATURE_COUNT + 2)?;
        if level(pln, f[1])? != lv {
            return Err(Error::parse(pln, "prob record belongs to another class"));
        }
        let probs: Vec<f64> = f[2..]
            .iter()
            .map(|v| num(pln, v, "probability"))
            .collect::<Result<_>>()?;

        written.push((ln, lv, prior, pln, probs));
        classes.push(ClassStats {
            level: lv,
            rows,
            feature_sums,
        });
    }
    let model = NaiveBayesModel::from_stats(alpha, classes)?;
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * b.abs().max(1e-300);
    for (ln, lv, prior, pln, probs) in written {
        if !close(prior, model.prior(lv).unwrap_or(f64::NAN)) {
            return Err(Error::parse(ln - 1, "prior disagrees with row counts"));
        }
        for (j, p) in probs.iter().enumerate() {
            if !close(*p, model.feature_probability(lv, j).unwrap_or(f64::NAN)) {
                return Err(Error::parse(
                    pln,
                    format!("probability {j} disagrees with feature sums"),
                ));
            }
        }
    }
    Ok(model)
}

fn read_node(it: &mut Lines, depth: usize, max_depth: usize) -> Result<Node> {
    let (ln, f) = it.next()?;
    match f.first().copied() {
        Some("split") => {
            expect_fields(ln, &f, "split", 3)?;
            if depth >= max_depth {
                return Err(Error::parse(ln, "tree deeper than its max_depth"));
            }
            let feature: usize = num(ln, f[1], "feature index")?;
            if feature >= FEATURE_COUNT {
                return Err(Error::parse(
                    ln,
                    format!("feature index {feature} out of range"),
                ));
            }
            let threshold: u32 = num(ln, f[2], "threshold")?;
            let left = read_node(it, depth + 1, max_depth)?;
            let right = read_node(it, depth + 1, max_depth)?;
            Ok(Node::Split {
                feature,
                threshold,
                left: Box::new(left),
                right: Box::new(right),
            })
        }
        Some("leaf") => {
            expect_fields(ln, &f, "leaf", 6)?;
            let lv = level(ln, f[1])?;
            let mut histogram = [0u64; 4];
            for (h, v) in histogram.iter_mut().zip(&f[2..]) {
                *h = num(ln, v, "histogram count")?;
            }
            if histogram.iter().sum::<u64>() == 0 {
                return Err(Error::parse(ln, "empty leaf histogram"));
            }
            Ok(Node::Leaf {
                level: lv,
                histogram,
            })
        }
        _ => Err(Error::parse(ln, "expected split or leaf record")),
    }
}

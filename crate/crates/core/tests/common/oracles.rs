//! Reference implementations written straight from the definitions, with
//! no shared code paths beyond the public data types.

use std::collections::BTreeSet;

use sqlion::features::{
    ModifierGroup, SymbolPattern, TokenDictionary, ALPHA_PATTERNS, FEATURE_COUNT,
};
use sqlion::labeler::RiskLevel;
use sqlion::ml::Sample;
use sqlion::normalize::NormalizedQuery;

/// Every occurrence of every pattern, as (length, start, slot).
fn occurrences(text: &[u8], patterns: &[(usize, Option<Vec<u8>>)]) -> Vec<(usize, usize, usize)> {
    let mut out = Vec::new();
    for (slot, pat) in patterns {
        match pat {
            Some(key) if !key.is_empty() => {
                for start in 0..text.len() {
                    if text[start..].starts_with(key) {
                        out.push((key.len(), start, *slot));
                    }
                }
            }
            Some(_) => {}
            None => {
                // maximal digit runs
                let mut start = None;
                for i in 0..=text.len() {
                    let digit = i < text.len() && text[i].is_ascii_digit();
                    match (digit, start) {
                        (true, None) => start = Some(i),
                        (false, Some(s)) => {
                            out.push((i - s, s, *slot));
                            start = None;
                        }
                        _ => {}
                    }
                }
            }
        }
    }
    out
}

/// Enumerate all matches, then keep them greedily by (longest, leftmost,
/// lowest slot), discarding anything that overlaps an earlier pick.
fn select(text: &[u8], patterns: &[(usize, Option<Vec<u8>>)], counts: &mut [u32; FEATURE_COUNT]) {
    let mut cands = occurrences(text, patterns);
    cands.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut taken = vec![false; text.len()];
    for (len, start, slot) in cands {
        if taken[start..start + len].iter().any(|t| *t) {
            continue;
        }
        taken[start..start + len].iter_mut().for_each(|t| *t = true);
        counts[slot] += 1;
    }
}

pub fn brute_force_counts(q: &NormalizedQuery, dict: &TokenDictionary) -> [u32; FEATURE_COUNT] {
    let alpha: Vec<(usize, Option<Vec<u8>>)> = dict
        .alpha()
        .iter()
        .enumerate()
        .map(|(i, e)| {
            (
                i,
                Some(
                    e.pattern
                        .bytes()
                        .filter(|b| !b" \t\r\n\x0c".contains(b))
                        .collect(),
                ),
            )
        })
        .collect();
    let symbols: Vec<(usize, Option<Vec<u8>>)> = dict
        .symbols()
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let pat = match &e.pattern {
                SymbolPattern::Literal(s) => Some(s.as_bytes().to_vec()),
                SymbolPattern::DigitRun => None,
            };
            (ALPHA_PATTERNS + i, pat)
        })
        .collect();
    let mut counts = [0; FEATURE_COUNT];
    select(&q.l1, &alpha, &mut counts);
    select(&q.l2, &symbols, &mut counts);
    counts
}

/// Rule trace: returns the level and the steps taken.
pub fn trace_level(counts: &[u32; FEATURE_COUNT], dict: &TokenDictionary) -> (u8, Vec<String>) {
    let mut steps = Vec::new();
    let mut level = 1u8;
    for (i, e) in dict.alpha().iter().enumerate() {
        if counts[i] > 0 && e.tier.value() > level {
            level = e.tier.value();
            steps.push(format!("{} -> {level}", e.pattern));
        }
    }
    for (group, ceiling) in [
        (ModifierGroup::A, 4),
        (ModifierGroup::B, 3),
        (ModifierGroup::C, 2),
    ] {
        let hit = dict
            .symbols()
            .iter()
            .enumerate()
            .find(|(i, e)| e.group == group && counts[ALPHA_PATTERNS + i] > 0);
        if let Some((_, e)) = hit {
            if level < ceiling {
                level += 1;
                steps.push(format!("{} bumps to {level}", e.pattern.as_str()));
            }
        }
    }
    (level, steps)
}

/// Posterior over the classes present in `rows`, computed with plain
/// products and no logarithms.
pub fn direct_bayes(
    rows: &[Sample],
    alpha: f64,
    x: &[u32; FEATURE_COUNT],
) -> Vec<(RiskLevel, f64)> {
    let levels: BTreeSet<RiskLevel> = rows.iter().map(|r| r.label).collect();
    let n = rows.len() as f64;
    let mut joint = Vec::new();
    for &c in &levels {
        let in_class: Vec<&Sample> = rows.iter().filter(|r| r.label == c).collect();
        let prior = in_class.len() as f64 / n;
        let mut sums = [0f64; FEATURE_COUNT];
        for r in &in_class {
            for (s, c) in sums.iter_mut().zip(&r.counts) {
                *s += f64::from(*c);
            }
        }
        let total: f64 = sums.iter().sum();
        let mut p = prior;
        for j in 0..FEATURE_COUNT {
            let pj = (sums[j] + alpha) / (total + FEATURE_COUNT as f64 * alpha);
            for _ in 0..x[j] {
                p *= pj;
            }
        }
        joint.push((c, p));
    }
    let z: f64 = joint.iter().map(|(_, p)| p).sum();
    joint.into_iter().map(|(c, p)| (c, p / z)).collect()
}

fn entropy_bits(h: &[u64; 4]) -> f64 {
    let n: u64 = h.iter().sum();
    let mut e = 0.0;
    for &c in h {
        if c > 0 {
            let p = c as f64 / n as f64;
            e -= p * p.log2();
        }
    }
    e
}

/// Exhaustive search over every feature and every `<= v` threshold that
/// leaves both sides non-empty. Ties keep the lowest feature, then the
/// lowest threshold.
pub fn best_root_split(rows: &[Sample]) -> Option<(usize, u32, f64)> {
    let mut parent = [0u64; 4];
    for r in rows {
        parent[r.label.index()] += 1;
    }
    let n = rows.len() as f64;
    let base = entropy_bits(&parent);
    let mut best: Option<(usize, u32, f64)> = None;
    for f in 0..FEATURE_COUNT {
        let values: BTreeSet<u32> = rows.iter().map(|r| r.counts[f]).collect();
        for &v in &values {
            let (mut l, mut r) = ([0u64; 4], [0u64; 4]);
            for row in rows {
                if row.counts[f] <= v {
                    l[row.label.index()] += 1;
                } else {
                    r[row.label.index()] += 1;
                }
            }
            let (nl, nr) = (l.iter().sum::<u64>() as f64, r.iter().sum::<u64>() as f64);
            if nl == 0.0 || nr == 0.0 {
                continue;
            }
            let gain = base - nl / n * entropy_bits(&l) - nr / n * entropy_bits(&r);
            if best.is_none_or(|(_, _, g)| gain > g + 1e-12) {
                best = Some((f, v, gain));
            }
        }
    }
    best.filter(|(_, _, g)| *g > 1e-12)
}

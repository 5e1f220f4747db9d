mod common;

use percent_encoding::percent_decode_str;
use proptest::prelude::*;

use common::oracles::trace_level;
use sqlion::features::{count_features, TokenDictionary};
use sqlion::labeler::assign_risk;
use sqlion::normalize::normalize_bytes;

const GOLDEN: &str = include_str!("data/labeler_golden.tsv");
const DEFAULT_DICT: &str = include_str!("data/default.dict");

fn golden() -> Vec<(Vec<u8>, u8, String)> {
    GOLDEN
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| {
            let mut cols = l.split('\t');
            let q = percent_decode_str(cols.next().unwrap()).collect();
            let level = cols.next().unwrap().parse().unwrap();
            (q, level, cols.next().unwrap_or("").to_string())
        })
        .collect()
}

#[test]
fn golden_dictionary_is_the_shipped_default() {
    assert_eq!(
        TokenDictionary::default_dictionary().to_text(),
        DEFAULT_DICT
    );
}

#[test]
fn golden_file_has_two_hundred_queries_over_all_levels() {
    let g = golden();
    assert_eq!(g.len(), 200);
    for level in 1..=4 {
        assert!(
            g.iter().any(|(_, l, _)| *l == level),
            "no level {level} row"
        );
    }
}

#[test]
fn assign_risk_matches_every_golden_level() {
    let dict = TokenDictionary::from_text(DEFAULT_DICT).unwrap();
    let mut mismatches = Vec::new();
    for (q, expected, trace) in golden() {
        let got = assign_risk(&count_features(&normalize_bytes(&q), &dict), &dict).value();
        if got != expected {
            mismatches.push(format!(
                "{:?}: expected {expected} ({trace}), got {got}",
                String::from_utf8_lossy(&q)
            ));
        }
    }
    assert!(mismatches.is_empty(), "{}", mismatches.join("\n"));
}

#[test]
fn rule_trace_agrees_on_golden_queries() {
    let dict = TokenDictionary::default_dictionary();
    for (q, expected, _) in golden() {
        let (level, steps) =
            trace_level(&count_features(&normalize_bytes(&q), &dict).counts, &dict);
        assert_eq!(
            level,
            expected,
            "{:?} {steps:?}",
            String::from_utf8_lossy(&q)
        );
    }
}

proptest! {
    #[test]
    fn assign_risk_matches_rule_trace(q in proptest::collection::vec(any::<u8>(), 0..64)) {
        let dict = TokenDictionary::default_dictionary();
        let fv = count_features(&normalize_bytes(&q), &dict);
        prop_assert_eq!(assign_risk(&fv, &dict).value(), trace_level(&fv.counts, &dict).0);
    }
}

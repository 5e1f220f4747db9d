//! Rule-based risk labeling.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::features::{FeatureVector, ModifierGroup, TokenDictionary, ALPHA_PATTERNS};

/// 1 = without risk, 2 = small risk, 3 = risk, 4 = high risk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct RiskLevel(u8);

impl RiskLevel {
    pub const NONE: RiskLevel = RiskLevel(1);
    pub const SMALL: RiskLevel = RiskLevel(2);
    pub const RISK: RiskLevel = RiskLevel(3);
    pub const HIGH: RiskLevel = RiskLevel(4);

    pub const ALL: [RiskLevel; 4] = [Self::NONE, Self::SMALL, Self::RISK, Self::HIGH];

    pub fn new(value: u8) -> Option<Self> {
        (1..=4).contains(&value).then_some(RiskLevel(value))
    }

    pub fn value(self) -> u8 {
        self.0
    }

    /// Zero-based index, handy for 4-slot tables.
    pub fn index(self) -> usize {
        usize::from(self.0 - 1)
    }

    pub fn from_index(i: usize) -> Option<Self> {
        u8::try_from(i + 1).ok().and_then(Self::new)
    }
}

impl TryFrom<u8> for RiskLevel {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        RiskLevel::new(v).ok_or_else(|| format!("risk level {v} outside 1..=4"))
    }
}

impl From<RiskLevel> for u8 {
    fn from(l: RiskLevel) -> u8 {
        l.0
    }
}

impl fmt::Display for RiskLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Benign,
    Suspicious,
    Attack,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Benign => "benign",
            Verdict::Suspicious => "suspicious",
            Verdict::Attack => "attack",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Verdict {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "benign" => Ok(Verdict::Benign),
            "suspicious" => Ok(Verdict::Suspicious),
            "attack" => Ok(Verdict::Attack),
            _ => Err(format!("unknown verdict {s:?}")),
        }
    }
}

/// Level at or above which a query is an attack.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BlockThreshold(u8);

impl BlockThreshold {
    pub const DEFAULT: BlockThreshold = BlockThreshold(3);

    pub fn new(value: u8) -> Option<Self> {
        (2..=4).contains(&value).then_some(BlockThreshold(value))
    }

    pub fn value(self) -> u8 {
        self.0
    }
}

impl Default for BlockThreshold {
    fn default() -> Self {
        Self::DEFAULT
    }
}

impl FromStr for BlockThreshold {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.parse::<u8>()
            .ok()
            .and_then(BlockThreshold::new)
            .ok_or_else(|| format!("threshold must be 2, 3 or 4 (got {s:?})"))
    }
}

/// Rule labeler.
///
/// The base level is the highest tier among matched alphabetic patterns
/// (1 when none match). Symbol groups then apply in order A, B, C; each
/// fires at most once, on presence, and only while the running level is
/// below its ceiling (4, 3, 2).
pub fn assign_risk(fv: &FeatureVector, dict: &TokenDictionary) -> RiskLevel {
    let mut level = dict
        .alpha()
        .iter()
        .zip(&fv.counts[..ALPHA_PATTERNS])
        .filter(|(_, c)| **c > 0)
        .map(|(e, _)| e.tier.value())
        .max()
        .unwrap_or(1);

    for group in [ModifierGroup::A, ModifierGroup::B, ModifierGroup::C] {
        let present = dict
            .symbols()
            .iter()
            .zip(&fv.counts[ALPHA_PATTERNS..])
            .any(|(e, c)| e.group == group && *c > 0);
        if present && level < group.ceiling() {
            level += 1;
        }
    }
    RiskLevel(level.min(4))
}

pub fn verdict_from_level(level: RiskLevel, threshold: BlockThreshold) -> Verdict {
    let t = threshold.value();
    if level.value() >= t {
        Verdict::Attack
    } else if t > 2 && level.value() == t - 1 {
        Verdict::Suspicious
    } else {
        Verdict::Benign
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::count_features;
    use crate::normalize::normalize_bytes;
    use proptest::prelude::*;

    fn label(raw: &str) -> u8 {
        let d = TokenDictionary::default_dictionary();
        assign_risk(&count_features(&normalize_bytes(raw.as_bytes()), &d), &d).value()
    }

    #[test]
    fn examples() {
        assert_eq!(
            assign_risk(&FeatureVector::zeros(), &TokenDictionary::default()).value(),
            1
        );
        assert_eq!(label("?id=1 union select * from users--"), 4);
        assert_eq!(label("'or 1=1--"), 4);
        assert_eq!(label("select name from items"), 2);
    }

    #[test]
    fn modifier_chain() {
        // no words; A lifts 1 -> 2, B lifts 2 -> 3, C blocked at 3
        assert_eq!(label("'1--"), 3);
        // only C
        assert_eq!(label("--"), 2);
        // only B then C blocked
        assert_eq!(label("(1)--"), 2);
        // tier 2 + B
        assert_eq!(label("select 1"), 3);
        // tier 3 + B is capped by B's ceiling
        assert_eq!(label("where 1"), 3);
        // tier 3 + A + B + C stays at 4
        assert_eq!(label("where '1';--"), 4);
    }

    #[test]
    fn verdicts() {
        let t = BlockThreshold::DEFAULT;
        assert_eq!(verdict_from_level(RiskLevel::HIGH, t), Verdict::Attack);
        assert_eq!(verdict_from_level(RiskLevel::NONE, t), Verdict::Benign);
        assert_eq!(verdict_from_level(RiskLevel::SMALL, t), Verdict::Suspicious);
        let t2 = BlockThreshold::new(2).unwrap();
        assert_eq!(verdict_from_level(RiskLevel::NONE, t2), Verdict::Benign);
        assert_eq!(verdict_from_level(RiskLevel::SMALL, t2), Verdict::Attack);
        let t4 = BlockThreshold::new(4).unwrap();
        assert_eq!(verdict_from_level(RiskLevel::RISK, t4), Verdict::Suspicious);
        assert!(BlockThreshold::new(1).is_none());
        assert!(BlockThreshold::new(5).is_none());
        assert!(RiskLevel::new(0).is_none());
    }

    fn counts_strategy() -> impl Strategy<Value = FeatureVector> {
        proptest::collection::vec(prop_oneof![3 => Just(0u32), 1 => 1u32..5], 50).prop_map(|v| {
            let mut fv = FeatureVector::zeros();
            fv.counts.copy_from_slice(&v);
            fv
        })
    }

    proptest! {
        #[test]
        fn level_in_range_and_presence_based(fv in counts_strategy()) {
            let d = TokenDictionary::default_dictionary();
            let l = assign_risk(&fv, &d);
            prop_assert!((1..=4).contains(&l.value()));
            let mut doubled = fv;
            doubled.counts.iter_mut().for_each(|c| *c *= 2);
            prop_assert_eq!(assign_risk(&doubled, &d), l);
        }

        #[test]
        fn presence_monotone(a in counts_strategy(), b in counts_strategy()) {
            let d = TokenDictionary::default_dictionary();
            // union of presence sets is a superset of a's
            let mut u = a;
            for (x, y) in u.counts.iter_mut().zip(b.counts.iter()) {
                *x = (*x).max(*y);
            }
            prop_assert!(assign_risk(&a, &d) <= assign_risk(&u, &d));
        }
    }
}

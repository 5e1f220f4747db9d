//! Pattern dictionaries, match counting and corpus frequency analysis.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::{BufRead, Write};

use percent_encoding::{percent_decode_str, utf8_percent_encode, AsciiSet, CONTROLS};

use crate::error::{Error, Result};
use crate::labeler::RiskLevel;
use crate::normalize::{decode_once, is_query_whitespace, NormalizedQuery, RawQuery};
use crate::par;

pub const ALPHA_PATTERNS: usize = 30;
pub const SYMBOL_PATTERNS: usize = 20;
pub const FEATURE_COUNT: usize = ALPHA_PATTERNS + SYMBOL_PATTERNS;

/// Spelling of the digit-run pattern in dictionary files and reports.
pub const DIGIT_CLASS_TOKEN: &str = "\\d+";

/// Base tier contributed by an alphabetic pattern.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Tier {
    Two = 2,
    Three = 3,
    Four = 4,
}

impl Tier {
    pub fn value(self) -> u8 {
        self as u8
    }

    pub fn from_value(v: u8) -> Option<Self> {
        match v {
            2 => Some(Tier::Two),
            3 => Some(Tier::Three),
            4 => Some(Tier::Four),
            _ => None,
        }
    }
}

/// Symbol modifier group. A raises below 4, B below 3, C below 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ModifierGroup {
    A,
    B,
    C,
}

impl ModifierGroup {
    /// The running level must be strictly below this for the group to fire.
    pub fn ceiling(self) -> u8 {
        match self {
            ModifierGroup::A => 4,
            ModifierGroup::B => 3,
            ModifierGroup::C => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ModifierGroup::A => "A",
            ModifierGroup::B => "B",
            ModifierGroup::C => "C",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "A" => Some(ModifierGroup::A),
            "B" => Some(ModifierGroup::B),
            "C" => Some(ModifierGroup::C),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SymbolPattern {
    Literal(String),
    /// A maximal run of ASCII digits.
    DigitRun,
}

impl SymbolPattern {
    pub fn literal(s: &str) -> Self {
        if s == DIGIT_CLASS_TOKEN {
            SymbolPattern::DigitRun
        } else {
            SymbolPattern::Literal(s.to_string())
        }
    }

    pub fn as_str(&self) -> &str {
        match self {
            SymbolPattern::Literal(s) => s,
            SymbolPattern::DigitRun => DIGIT_CLASS_TOKEN,
        }
    }
}

impl fmt::Display for SymbolPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlphaEntry {
    /// Display form; may contain single spaces ("union select").
    pub pattern: String,
    pub tier: Tier,
}

impl AlphaEntry {
    /// The form matched against `l1`: whitespace removed.
    pub fn key(&self) -> Vec<u8> {
        alpha_key(&self.pattern)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymbolEntry {
    pub pattern: SymbolPattern,
    pub group: ModifierGroup,
}

fn alpha_key(pattern: &str) -> Vec<u8> {
    pattern
        .bytes()
        .filter(|b| !is_query_whitespace(*b))
        .collect()
}

/// Alphabetic patterns that must be present, with their tiers.
pub const MANDATED_ALPHA: [(&str, Tier); 11] = [
    ("union select", Tier::Four),
    ("all", Tier::Three),
    ("chr", Tier::Three),
    ("and", Tier::Three),
    ("=", Tier::Three),
    ("where", Tier::Three),
    ("or", Tier::Three),
    ("select", Tier::Two),
    ("as", Tier::Two),
    ("from", Tier::Two),
    ("like", Tier::Two),
];

/// Symbol patterns that must be present, with their modifier groups.
pub const MANDATED_SYMBOLS: [(&str, ModifierGroup); 16] = [
    ("\\x", ModifierGroup::A),
    ("0x", ModifierGroup::A),
    ("'", ModifierGroup::A),
    ("\"", ModifierGroup::A),
    (".", ModifierGroup::B),
    ("<", ModifierGroup::B),
    (">", ModifierGroup::B),
    ("(", ModifierGroup::B),
    (")", ModifierGroup::B),
    (DIGIT_CLASS_TOKEN, ModifierGroup::B),
    ("/*", ModifierGroup::C),
    ("*/", ModifierGroup::C),
    ("%", ModifierGroup::C),
    ("#", ModifierGroup::C),
    ("--", ModifierGroup::C),
    (";", ModifierGroup::C),
];

const DEFAULT_EXTRA_ALPHA: [(&str, Tier); 19] = [
    ("union all", Tier::Four),
    ("sleep", Tier::Three),
    ("benchmark", Tier::Three),
    ("waitfor", Tier::Three),
    ("exec", Tier::Three),
    ("declare", Tier::Three),
    ("information", Tier::Three),
    ("drop", Tier::Three),
    ("insert", Tier::Two),
    ("update", Tier::Two),
    ("delete", Tier::Two),
    ("table", Tier::Two),
    ("order by", Tier::Two),
    ("group by", Tier::Two),
    ("having", Tier::Two),
    ("concat", Tier::Two),
    ("cast", Tier::Two),
    ("null", Tier::Two),
    ("substring", Tier::Two),
];

const DEFAULT_EXTRA_SYMBOLS: [(&str, ModifierGroup); 4] = [
    ("=", ModifierGroup::C),
    (",", ModifierGroup::C),
    ("+", ModifierGroup::C),
    ("*", ModifierGroup::C),
];

/// Patterns of one length, tried in dictionary order.
#[derive(Debug, Clone)]
struct LengthGroup {
    len: usize,
    patterns: Vec<(usize, Vec<u8>)>,
}

#[derive(Debug, Clone, Default)]
struct Matcher {
    /// Longest first.
    groups: Vec<LengthGroup>,
    digit_slot: Option<usize>,
}

impl Matcher {
    fn build(
        literals: impl IntoIterator<Item = (usize, Vec<u8>)>,
        digit_slot: Option<usize>,
    ) -> Self {
        let mut by_len: HashMap<usize, Vec<(usize, Vec<u8>)>> = HashMap::new();
        for (slot, key) in literals {
            by_len.entry(key.len()).or_default().push((slot, key));
        }
        let mut groups: Vec<LengthGroup> = by_len
            .into_iter()
            .map(|(len, mut patterns)| {
                patterns.sort_by_key(|(slot, _)| *slot);
                LengthGroup { len, patterns }
            })
            .collect();
        groups.sort_by_key(|g| std::cmp::Reverse(g.len));
        Matcher { groups, digit_slot }
    }

    /// Longest-first, then leftmost, then lowest slot; non-overlapping.
    fn count_into(&self, text: &[u8], counts: &mut [u32]) {
        let n = text.len();
        if n == 0 {
            return;
        }
        // digit runs indexed by their start
        let mut runs: HashMap<usize, usize> = HashMap::new();
        let mut run_lens: BTreeSet<usize> = BTreeSet::new();
        if self.digit_slot.is_some() {
            let mut i = 0;
            while i < n {
                if text[i].is_ascii_digit() {
                    let start = i;
                    while i < n && text[i].is_ascii_digit() {
                        i += 1;
                    }
                    runs.insert(start, i - start);
                    run_lens.insert(i - start);
                } else {
                    i += 1;
                }
            }
        }

        let mut lengths: BTreeSet<usize> = self.groups.iter().map(|g| g.len).collect();
        lengths.extend(run_lens.iter().copied());

        let mut consumed = vec![false; n];
        for &len in lengths.iter().rev() {
            if len == 0 || len > n {
                continue;
            }
            let group = self.groups.iter().find(|g| g.len == len);
            let mut p = 0;
            while p + len <= n {
                if consumed[p..p + len].iter().any(|c| *c) {
                    p += 1;
                    continue;
                }
                let literal = group.and_then(|g| {
                    g.patterns
                        .iter()
                        .find(|(_, key)| &text[p..p + len] == key.as_slice())
                        .map(|(slot, _)| *slot)
                });
                let digit = match (self.digit_slot, runs.get(&p)) {
                    (Some(slot), Some(&run)) if run == len => Some(slot),
                    _ => None,
                };
                let slot = match (literal, digit) {
                    (Some(a), Some(b)) => Some(a.min(b)),
                    (a, b) => a.or(b),
                };
                match slot {
                    Some(slot) => {
                        counts[slot] += 1;
                        consumed[p..p + len].iter_mut().for_each(|c| *c = true);
                        p += len;
                    }
                    None => p += 1,
                }
            }
        }
    }
}

/// The 30 alphabetic and 20 symbol patterns with their rule assignments.
#[derive(Debug, Clone)]
pub struct TokenDictionary {
    alpha: Vec<AlphaEntry>,
    symbols: Vec<SymbolEntry>,
    alpha_matcher: Matcher,
    symbol_matcher: Matcher,
}

impl PartialEq for TokenDictionary {
    fn eq(&self, other: &Self) -> bool {
        self.alpha == other.alpha && self.symbols == other.symbols
    }
}

impl Eq for TokenDictionary {}

impl TokenDictionary {
    /// Validates and builds the matchers.
    pub fn new(alpha: Vec<AlphaEntry>, symbols: Vec<SymbolEntry>) -> Result<Self> {
        validate(&alpha, &symbols)?;
        let alpha_matcher =
            Matcher::build(alpha.iter().enumerate().map(|(i, e)| (i, e.key())), None);
        let mut digit_slot = None;
        let mut literals = Vec::new();
        for (i, e) in symbols.iter().enumerate() {
            match &e.pattern {
                SymbolPattern::Literal(s) => {
                    literals.push((ALPHA_PATTERNS + i, s.as_bytes().to_vec()))
                }
                SymbolPattern::DigitRun => digit_slot = Some(ALPHA_PATTERNS + i),
            }
        }
        let symbol_matcher = Matcher::build(literals, digit_slot);
        Ok(Self {
            alpha,
            symbols,
            alpha_matcher,
            symbol_matcher,
        })
    }

    /// The shipped dictionary: every mandated pattern plus common SQLi
    /// vocabulary.
    pub fn default_dictionary() -> Self {
        let alpha = MANDATED_ALPHA
            .iter()
            .chain(DEFAULT_EXTRA_ALPHA.iter())
            .map(|(p, tier)| AlphaEntry {
                pattern: p.to_string(),
                tier: *tier,
            })
            .collect();
        let symbols = MANDATED_SYMBOLS
            .iter()
            .chain(DEFAULT_EXTRA_SYMBOLS.iter())
            .map(|(p, group)| SymbolEntry {
                pattern: SymbolPattern::literal(p),
                group: *group,
            })
            .collect();
        Self::new(alpha, symbols).expect("default dictionary is valid")
    }

    pub fn alpha(&self) -> &[AlphaEntry] {
        &self.alpha
    }

    pub fn symbols(&self) -> &[SymbolEntry] {
        &self.symbols
    }

    /// Feature-slot index of an alphabetic pattern (display form).
    pub fn alpha_index(&self, pattern: &str) -> Option<usize> {
        let key = alpha_key(pattern);
        self.alpha.iter().position(|e| e.key() == key)
    }

    /// Feature-slot index (30..50) of a symbol pattern.
    pub fn symbol_index(&self, pattern: &str) -> Option<usize> {
        let p = SymbolPattern::literal(pattern);
        self.symbols
            .iter()
            .position(|e| e.pattern == p)
            .map(|i| ALPHA_PATTERNS + i)
    }

    /// Display name of feature slot `i`.
    pub fn feature_name(&self, i: usize) -> &str {
        if i < ALPHA_PATTERNS {
            &self.alpha[i].pattern
        } else {
            self.symbols[i - ALPHA_PATTERNS].pattern.as_str()
        }
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        for e in &self.alpha {
            writeln!(w, "A,{},{}", encode_pattern(&e.pattern), e.tier.value())?;
        }
        for e in &self.symbols {
            let pattern = match &e.pattern {
                SymbolPattern::DigitRun => DIGIT_CLASS_TOKEN.to_string(),
                SymbolPattern::Literal(s) => encode_pattern(s),
            };
            writeln!(w, "S,{},{}", pattern, e.group.as_str())?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf)
            .expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("dictionary text is ascii")
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self> {
        let mut alpha = Vec::new();
        let mut symbols = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let lineno = i + 1;
            let line = line?;
            let line = line.trim_end_matches('\r');
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 3 {
                return Err(Error::ColumnCount {
                    line: lineno,
                    expected: 3,
                    found: fields.len(),
                });
            }
            match fields[0] {
                "A" => {
                    let tier = fields[2]
                        .parse::<u8>()
                        .ok()
                        .and_then(Tier::from_value)
                        .ok_or_else(|| Error::parse(lineno, format!("bad tier {:?}", fields[2])))?;
                    alpha.push(AlphaEntry {
                        pattern: decode_pattern(fields[1], lineno)?,
                        tier,
                    });
                }
                "S" => {
                    let group = ModifierGroup::parse(fields[2]).ok_or_else(|| {
                        Error::parse(lineno, format!("bad modifier group {:?}", fields[2]))
                    })?;
                    let pattern = if fields[1] == DIGIT_CLASS_TOKEN {
                        SymbolPattern::DigitRun
                    } else {
                        SymbolPattern::Literal(decode_pattern(fields[1], lineno)?)
                    };
                    symbols.push(SymbolEntry { pattern, group });
                }
                other => {
                    return Err(Error::parse(
                        lineno,
                        format!("unknown entry kind {other:?}"),
                    ))
                }
            }
        }
        Self::new(alpha, symbols)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Self::read_from(text.as_bytes())
    }
}

impl Default for TokenDictionary {
    fn default() -> Self {
        Self::default_dictionary()
    }
}

const PATTERN_ESCAPES: &AsciiSet = &CONTROLS.add(b' ').add(b',').add(b'%').add(b'\\');

fn encode_pattern(p: &str) -> String {
    utf8_percent_encode(p, PATTERN_ESCAPES).to_string()
}

fn decode_pattern(field: &str, line: usize) -> Result<String> {
    percent_decode_str(field)
        .decode_utf8()
        .map(|s| s.into_owned())
        .map_err(|_| Error::parse(line, "pattern is not valid utf-8"))
}

fn validate(alpha: &[AlphaEntry], symbols: &[SymbolEntry]) -> Result<()> {
    if alpha.len() != ALPHA_PATTERNS {
        return Err(Error::InvalidDictionary(format!(
            "expected {ALPHA_PATTERNS} alphabetic patterns, found {}",
            alpha.len()
        )));
    }
    if symbols.len() != SYMBOL_PATTERNS {
        return Err(Error::InvalidDictionary(format!(
            "expected {SYMBOL_PATTERNS} symbol patterns, found {}",
            symbols.len()
        )));
    }
    let mut seen = BTreeSet::new();
    for e in alpha {
        let key = e.key();
        if key.is_empty() {
            return Err(Error::InvalidDictionary("empty alphabetic pattern".into()));
        }
        if key.iter().any(|b| b.is_ascii_uppercase()) {
            return Err(Error::InvalidDictionary(format!(
                "{:?} is not lowercase",
                e.pattern
            )));
        }
        if e.pattern.contains("  ") || e.pattern.starts_with(' ') || e.pattern.ends_with(' ') {
            return Err(Error::InvalidDictionary(format!(
                "{:?} has stray spaces",
                e.pattern
            )));
        }
        if e.pattern
            .bytes()
            .any(|b| is_query_whitespace(b) && b != b' ')
        {
            return Err(Error::InvalidDictionary(format!(
                "{:?} contains whitespace",
                e.pattern
            )));
        }
        if !seen.insert(key) {
            return Err(Error::InvalidDictionary(format!(
                "duplicate pattern {:?}",
                e.pattern
            )));
        }
    }
    let mut seen = BTreeSet::new();
    for e in symbols {
        if let SymbolPattern::Literal(s) = &e.pattern {
            if s.is_empty() {
                return Err(Error::InvalidDictionary("empty symbol pattern".into()));
            }
            if s.bytes().any(is_query_whitespace) {
                return Err(Error::InvalidDictionary(format!(
                    "{s:?} contains whitespace"
                )));
            }
            if s.bytes().any(|b| b.is_ascii_alphabetic()) && !is_hex_marker(s) {
                return Err(Error::InvalidDictionary(format!(
                    "symbol pattern {s:?} contains letters"
                )));
            }
        }
        if !seen.insert(e.pattern.clone()) {
            return Err(Error::InvalidDictionary(format!(
                "duplicate pattern {:?}",
                e.pattern.as_str()
            )));
        }
    }
    for (p, tier) in MANDATED_ALPHA {
        let key = alpha_key(p);
        if !alpha.iter().any(|e| e.key() == key && e.tier == tier) {
            return Err(Error::InvalidDictionary(format!(
                "missing {p:?} at tier {}",
                tier.value()
            )));
        }
    }
    for (p, group) in MANDATED_SYMBOLS {
        let pattern = SymbolPattern::literal(p);
        if !symbols
            .iter()
            .any(|e| e.pattern == pattern && e.group == group)
        {
            return Err(Error::InvalidDictionary(format!(
                "missing {p:?} in group {}",
                group.as_str()
            )));
        }
    }
    Ok(())
}

/// `\x` and `0x` are the only symbol patterns allowed to carry a letter.
fn is_hex_marker(s: &str) -> bool {
    s == "\\x" || s == "0x"
}

/// 50 pattern counts plus an optional risk label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FeatureVector {
    pub counts: [u32; FEATURE_COUNT],
    pub label: Option<RiskLevel>,
}

impl FeatureVector {
    pub fn zeros() -> Self {
        Self {
            counts: [0; FEATURE_COUNT],
            label: None,
        }
    }

    pub fn with_label(mut self, label: RiskLevel) -> Self {
        self.label = Some(label);
        self
    }

    /// Label slot as written in the 51-variable layout; 0 means unlabeled.
    pub fn label_value(&self) -> u8 {
        self.label.map_or(0, RiskLevel::value)
    }

    pub fn is_zero(&self) -> bool {
        self.counts.iter().all(|c| *c == 0)
    }
}

impl Default for FeatureVector {
    fn default() -> Self {
        Self::zeros()
    }
}

/// Counts dictionary matches: alphabetic patterns in `l1`, symbols in `l2`.
pub fn count_features(q: &NormalizedQuery, dict: &TokenDictionary) -> FeatureVector {
    let mut fv = FeatureVector::zeros();
    dict.alpha_matcher.count_into(&q.l1, &mut fv.counts);
    dict.symbol_matcher.count_into(&q.l2, &mut fv.counts);
    fv
}

/// Normalizes and counts a batch of raw queries.
pub fn extract_batch(queries: &[RawQuery], dict: &TokenDictionary) -> Vec<FeatureVector> {
    par::map(queries, |q| {
        count_features(&crate::normalize::normalize(q), dict)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FrequencyMode {
    AlphabeticWords,
    SingleSymbols,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrequencyReport {
    pub mode: FrequencyMode,
    /// Sorted by count descending, then token ascending.
    pub entries: Vec<(String, u64)>,
}

impl FrequencyReport {
    pub fn from_counts(mode: FrequencyMode, counts: HashMap<String, u64>) -> Self {
        let mut entries: Vec<(String, u64)> = counts.into_iter().filter(|(_, c)| *c > 0).collect();
        entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Self { mode, entries }
    }

    pub fn total(&self) -> u64 {
        self.entries.iter().map(|(_, c)| c).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn top(&self, n: usize) -> &[(String, u64)] {
        &self.entries[..n.min(self.entries.len())]
    }
}

fn tally_one(q: &RawQuery, mode: FrequencyMode, acc: &mut HashMap<String, u64>) {
    match mode {
        FrequencyMode::AlphabeticWords => {
            let lower = q.text.to_ascii_lowercase();
            for word in lower.split(|b| !b.is_ascii_lowercase()) {
                if !word.is_empty() {
                    let w = std::str::from_utf8(word).expect("ascii letters");
                    *acc.entry(w.to_string()).or_default() += 1;
                }
            }
        }
        FrequencyMode::SingleSymbols => {
            let decoded = decode_once(&q.text);
            for c in String::from_utf8_lossy(&decoded).chars() {
                if !c.is_alphanumeric() && !c.is_whitespace() {
                    *acc.entry(c.to_string()).or_default() += 1;
                }
            }
        }
    }
}

/// Token frequencies over a corpus.
pub fn frequency_analysis(corpus: &[RawQuery], mode: FrequencyMode) -> FrequencyReport {
    let counts = par::fold_reduce(
        corpus,
        HashMap::new,
        |mut acc, q| {
            tally_one(q, mode, &mut acc);
            acc
        },
        |mut a, b| {
            for (k, v) in b {
                *a.entry(k).or_default() += v;
            }
            a
        },
    );
    FrequencyReport::from_counts(mode, counts)
}

/// Builds a dictionary from the top-ranked tokens of two frequency reports,
/// forcing in every mandated pattern.
pub fn build_dictionary(
    words: &FrequencyReport,
    symbols: &FrequencyReport,
) -> Result<TokenDictionary> {
    if words.is_empty() || symbols.is_empty() {
        return Err(Error::InsufficientCorpus(
            "frequency reports must be non-empty".into(),
        ));
    }

    let mandated_alpha: Vec<(Vec<u8>, &str, Tier)> = MANDATED_ALPHA
        .iter()
        .map(|(p, t)| (alpha_key(p), *p, *t))
        .collect();
    let alpha_candidates: Vec<String> = words
        .entries
        .iter()
        .map(|(t, _)| t.clone())
        .filter(|t| !alpha_key(t).is_empty())
        .collect();
    let alpha_pick = select_with_forced(
        &alpha_candidates,
        ALPHA_PATTERNS,
        &mandated_alpha
            .iter()
            .map(|(_, p, _)| p.to_string())
            .collect::<Vec<_>>(),
        |a, b| alpha_key(a) == alpha_key(b),
    )
    .ok_or_else(|| {
        Error::InsufficientCorpus(format!("fewer than {ALPHA_PATTERNS} alphabetic candidates"))
    })?;
    let alpha = alpha_pick
        .into_iter()
        .map(|pattern| {
            let key = alpha_key(&pattern);
            let tier = mandated_alpha
                .iter()
                .find(|(k, _, _)| *k == key)
                .map_or(Tier::Two, |(_, _, t)| *t);
            AlphaEntry { pattern, tier }
        })
        .collect();

    let symbol_candidates: Vec<String> = symbols
        .entries
        .iter()
        .map(|(t, _)| t.clone())
        .filter(|t| {
            !t.is_empty()
                && !t.bytes().any(is_query_whitespace)
                && (!t.bytes().any(|b| b.is_ascii_alphabetic()) || is_hex_marker(t))
        })
        .collect();
    let symbol_pick = select_with_forced(
        &symbol_candidates,
        SYMBOL_PATTERNS,
        &MANDATED_SYMBOLS
            .iter()
            .map(|(p, _)| p.to_string())
            .collect::<Vec<_>>(),
        |a, b| a == b,
    )
    .ok_or_else(|| {
        Error::InsufficientCorpus(format!("fewer than {SYMBOL_PATTERNS} symbol candidates"))
    })?;
    let symbols = symbol_pick
        .into_iter()
        .map(|p| {
            let group = MANDATED_SYMBOLS
                .iter()
                .find(|(m, _)| *m == p)
                .map_or(ModifierGroup::C, |(_, g)| *g);
            SymbolEntry {
                pattern: SymbolPattern::literal(&p),
                group,
            }
        })
        .collect();

    TokenDictionary::new(alpha, symbols)
}

/// Top `n` candidates in rank order with every forced entry present.
/// Missing forced entries replace the lowest-ranked optional picks and are
/// appended in their listed order.
fn select_with_forced(
    ranked: &[String],
    n: usize,
    forced: &[String],
    same: impl Fn(&str, &str) -> bool,
) -> Option<Vec<String>> {
    let mut pool: Vec<String> = Vec::new();
    for t in ranked {
        if !pool.iter().any(|p| same(p, t)) {
            pool.push(t.clone());
        }
    }
    let mut picked: Vec<String> = pool.iter().take(n).cloned().collect();
    let missing: Vec<String> = forced
        .iter()
        .filter(|f| !picked.iter().any(|p| same(p, f)))
        .cloned()
        .collect();
    let is_forced = |t: &str| forced.iter().any(|f| same(f, t));
    let optional_picked = picked.iter().filter(|p| !is_forced(p)).count();
    let forced_picked = picked.len() - optional_picked;
    if forced_picked + missing.len() + optional_picked < n {
        // not enough entries overall; maybe the remaining pool can fill in
        let mut extra = pool.iter().skip(picked.len()).filter(|t| !is_forced(t));
        while picked.len() + missing.len() < n {
            picked.push(extra.next()?.clone());
        }
    }
    let mut overflow = (picked.len() + missing.len()).saturating_sub(n);
    while overflow > 0 {
        let pos = picked.iter().rposition(|p| !is_forced(p))?;
        picked.remove(pos);
        overflow -= 1;
    }
    picked.extend(missing);
    (picked.len() == n).then_some(picked)
}

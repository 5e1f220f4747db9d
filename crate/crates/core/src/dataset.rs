//! Access-log ingestion, synthetic corpora and the labeled dataset file.

use std::collections::HashSet;
use std::io::{BufRead, Write};
use std::net::IpAddr;
use std::sync::OnceLock;

use chrono::DateTime;
use percent_encoding::{percent_decode, percent_encode, AsciiSet, CONTROLS};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::bytes::Regex;

use crate::error::{Error, Result};
use crate::features::{count_features, TokenDictionary, FEATURE_COUNT};
use crate::labeler::{assign_risk, RiskLevel};
use crate::ml::{LabeledDataset, Provenance, Sample};
use crate::normalize::{normalize, RawQuery};
use crate::par;

/// One Apache combined-format access log line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccessLogRecord {
    pub client_ip: IpAddr,
    /// Seconds since the epoch.
    pub timestamp: i64,
    pub method: String,
    /// Request target (path plus query), as logged.
    pub target: String,
    pub status: u16,
    pub user_agent: String,
    /// Query string after `?`, percent-decoded once. Empty without `?`.
    pub query: Vec<u8>,
}

impl AccessLogRecord {
    pub fn raw_query(&self, source: &str) -> RawQuery {
        RawQuery::with_source(self.query.clone(), source)
    }

    /// Renders the record back as a combined-format line (without newline).
    pub fn to_combined_line(&self) -> String {
        let ts = DateTime::from_timestamp(self.timestamp, 0)
            .map(|t| t.format("%d/%b/%Y:%H:%M:%S +0000").to_string())
            .unwrap_or_default();
        format!(
            "{} - - [{}] \"{} {} HTTP/1.1\" {} 0 \"-\" \"{}\"",
            self.client_ip,
            ts,
            self.method,
            escape_field(&self.target),
            self.status,
            escape_field(&self.user_agent)
        )
    }
}

/// Builds a combined-format log line for a single request.
pub fn combined_line(
    ip: &str,
    timestamp: i64,
    request: &str,
    status: u16,
    user_agent: &str,
) -> String {
    let ts = DateTime::from_timestamp(timestamp, 0)
        .map(|t| t.format("%d/%b/%Y:%H:%M:%S +0000").to_string())
        .unwrap_or_default();
    format!(
        "{ip} - - [{ts}] \"{}\" {status} 0 \"-\" \"{}\"",
        escape_field(request),
        escape_field(user_agent)
    )
}

fn escape_field(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            c if (c as u32) < 0x20 || c as u32 == 0x7f => {
                out.push_str(&format!("\\x{:02x}", c as u32))
            }
            c => out.push(c),
        }
    }
    out
}

fn combined_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r#"^(\S+) \S+ \S+ \[([^\]]+)\] "((?:[^"\\]|\\.)*)" (\d{3}) (?:\d+|-)(?: "(?:[^"\\]|\\.)*" "((?:[^"\\]|\\.)*)")?\s*$"#,
        )
        .expect("valid log regex")
    })
}

/// Undoes Apache's `\"`, `\\` and `\xhh` escaping.
fn unescape(field: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(field.len());
    let mut i = 0;
    while i < field.len() {
        if field[i] == b'\\' && i + 1 < field.len() {
            match field[i + 1] {
                b'x' if i + 3 < field.len() => {
                    let hex = std::str::from_utf8(&field[i + 2..i + 4]).ok();
                    if let Some(v) = hex.and_then(|h| u8::from_str_radix(h, 16).ok()) {
                        out.push(v);
                        i += 4;
                        continue;
                    }
                    out.push(b'\\');
                    i += 1;
                }
                b'n' => {
                    out.push(b'\n');
                    i += 2;
                }
                b't' => {
                    out.push(b'\t');
                    i += 2;
                }
                c => {
                    out.push(c);
                    i += 2;
                }
            }
        } else {
            out.push(field[i]);
            i += 1;
        }
    }
    out
}

/// Parses one combined (or common) format line.
pub fn parse_log_line(line: &[u8]) -> Option<AccessLogRecord> {
    let line = line.strip_suffix(b"\n").unwrap_or(line);
    let line = line.strip_suffix(b"\r").unwrap_or(line);
    let caps = combined_regex().captures(line)?;
    let client_ip: IpAddr = std::str::from_utf8(&caps[1]).ok()?.parse().ok()?;
    let ts = std::str::from_utf8(&caps[2]).ok()?;
    let timestamp = DateTime::parse_from_str(ts, "%d/%b/%Y:%H:%M:%S %z")
        .ok()?
        .timestamp();
    if timestamp <= 0 {
        return None;
    }
    let request = unescape(&caps[3]);
    let first_space = request.iter().position(|b| *b == b' ')?;
    let method = String::from_utf8(request[..first_space].to_vec()).ok()?;
    if method.is_empty() || !method.bytes().all(|b| b.is_ascii_uppercase()) {
        return None;
    }
    let mut rest = &request[first_space + 1..];
    if let Some(last) = rest.iter().rposition(|b| *b == b' ') {
        if rest[last + 1..].starts_with(b"HTTP/") {
            rest = &rest[..last];
        }
    }
    if rest.is_empty() {
        return None;
    }
    let status: u16 = std::str::from_utf8(&caps[4]).ok()?.parse().ok()?;
    let user_agent = caps
        .get(5)
        .map(|m| String::from_utf8_lossy(&unescape(m.as_bytes())).into_owned())
        .unwrap_or_default();
    let query = match rest.iter().position(|b| *b == b'?') {
        Some(q) => percent_decode(&rest[q + 1..]).collect(),
        None => Vec::new(),
    };
    Some(AccessLogRecord {
        client_ip,
        timestamp,
        method,
        target: String::from_utf8_lossy(rest).into_owned(),
        status,
        user_agent,
        query,
    })
}

/// Parses a whole log, skipping unparseable lines.
/// Returns the records and the number of malformed lines.
pub fn parse_access_log<R: BufRead>(mut r: R) -> Result<(Vec<AccessLogRecord>, usize)> {
    let mut records = Vec::new();
    let mut malformed = 0;
    let mut buf = Vec::new();
    loop {
        buf.clear();
        if r.read_until(b'\n', &mut buf)? == 0 {
            break;
        }
        if buf.iter().all(|b| b.is_ascii_whitespace()) {
            continue;
        }
        match parse_log_line(&buf) {
            Some(rec) => records.push(rec),
            None => malformed += 1,
        }
    }
    Ok((records, malformed))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CorpusKind {
    Malicious,
    Legitimate,
}

impl CorpusKind {
    pub fn provenance(self) -> Provenance {
        match self {
            CorpusKind::Malicious => Provenance::MaliciousCapture,
            CorpusKind::Legitimate => Provenance::Legitimate,
        }
    }
}

impl std::str::FromStr for CorpusKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "malicious" | "mal" => Ok(CorpusKind::Malicious),
            "legitimate" | "leg" => Ok(CorpusKind::Legitimate),
            _ => Err(format!(
                "unknown corpus kind {s:?} (expected malicious or legitimate)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CorpusSpec {
    pub kind: CorpusKind,
    pub count: usize,
    pub seed: u64,
}

pub const MALICIOUS_TEMPLATES: &str = include_str!("../data/malicious.tmpl");
pub const LEGITIMATE_TEMPLATES: &str = include_str!("../data/legitimate.tmpl");

/// Identifiers SQLMap-style payloads probe for.
const MALICIOUS_WORDS: &[&str] = &[
    "users",
    "admin",
    "passwd",
    "password",
    "login",
    "accounts",
    "members",
    "credit",
    "customers",
    "secret",
    "username",
    "email",
    "session",
    "qwer",
    "wxyz",
    "abcd",
    "kvpq",
    "yuts",
    "test",
    "root",
];

/// Plain shop/blog vocabulary. None of these (or their pairwise joins)
/// spell a dictionary pattern.
const LEGITIMATE_WORDS: &[&str] = &[
    "shoes", "jeans", "shirt", "green", "blue", "black", "white", "pink", "purple", "kettle",
    "lamp", "desk", "chair", "bike", "helmet", "tent", "jacket", "boots", "socks", "gift", "phone",
    "cable", "mug", "tee", "sunset", "recipe", "pizza", "bread", "cheese", "coffee", "tea",
    "garden", "kitchen", "travel", "music", "guide", "news", "blog", "events", "help", "contact",
    "team", "jobs", "puppies", "kittens", "winter", "summer", "spring", "hiking", "yoga", "tips",
    "deals", "sizes", "big", "mini", "new", "used", "kids",
];

/// Substitutions for the obfuscatable-space placeholder.
const SPACES: &[(&str, u32)] = &[(" ", 10), ("/**/", 4), ("\t", 1), ("\n", 1), ("/*!*/", 1)];

fn parse_templates(text: &str) -> Vec<&str> {
    text.lines().filter(|l| !l.trim().is_empty()).collect()
}

fn pick_space(rng: &mut ChaCha8Rng) -> &'static str {
    let total: u32 = SPACES.iter().map(|(_, w)| w).sum();
    let mut x = rng.gen_range(0..total);
    for (s, w) in SPACES {
        if x < *w {
            return s;
        }
        x -= w;
    }
    " "
}

/// Expands one template. Malicious payloads also get SQLMap-style case
/// mangling of their literal text.
fn expand(template: &str, kind: CorpusKind, rng: &mut ChaCha8Rng) -> String {
    #[derive(Clone, Copy)]
    enum Case {
        Keep,
        Lower,
        Mixed,
    }
    let case = match kind {
        CorpusKind::Legitimate => Case::Keep,
        CorpusKind::Malicious => match rng.gen_range(0..4) {
            0 => Case::Lower,
            1 => Case::Mixed,
            _ => Case::Keep,
        },
    };
    let words = match kind {
        CorpusKind::Malicious => MALICIOUS_WORDS,
        CorpusKind::Legitimate => LEGITIMATE_WORDS,
    };
    let mut out = String::with_capacity(template.len() + 16);
    let mut rest = template;
    while !rest.is_empty() {
        let placeholder = ["{num}", "{word}", "{hex}", "{sp}"]
            .iter()
            .find(|p| rest.starts_with(**p));
        if let Some(p) = placeholder {
            match *p {
                "{num}" => out.push_str(&rng.gen_range(1..10_000u32).to_string()),
                "{word}" => out.push_str(words.choose(rng).expect("non-empty word list")),
                "{hex}" => out.push_str(&format!("0x{:x}", rng.gen::<u32>())),
                _ => out.push_str(match kind {
                    CorpusKind::Malicious => pick_space(rng),
                    CorpusKind::Legitimate => " ",
                }),
            }
            rest = &rest[p.len()..];
            continue;
        }
        let c = rest.chars().next().expect("non-empty");
        let c = match case {
            Case::Keep => c,
            Case::Lower => c.to_ascii_lowercase(),
            Case::Mixed => {
                if rng.gen_bool(0.5) {
                    c.to_ascii_uppercase()
                } else {
                    c.to_ascii_lowercase()
                }
            }
        };
        out.push(c);
        rest = &rest[c.len_utf8()..];
    }
    out
}

/// Deterministic synthetic corpus; a pure function of `(kind, count, seed)`.
pub fn generate_corpus(spec: &CorpusSpec) -> Vec<RawQuery> {
    let (templates, source) = match spec.kind {
        CorpusKind::Malicious => (parse_templates(MALICIOUS_TEMPLATES), "synthetic-malicious"),
        CorpusKind::Legitimate => (
            parse_templates(LEGITIMATE_TEMPLATES),
            "synthetic-legitimate",
        ),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    (0..spec.count)
        .map(|_| {
            let t = templates.choose(&mut rng).expect("templates present");
            RawQuery::with_source(expand(t, spec.kind, &mut rng), source)
        })
        .collect()
}

/// Keeps the first occurrence of every distinct query text.
pub fn dedupe(queries: Vec<RawQuery>) -> Vec<RawQuery> {
    let mut seen = HashSet::new();
    queries
        .into_iter()
        .filter(|q| seen.insert(q.text.clone()))
        .collect()
}

/// Normalizes, counts and rule-labels both corpora. Malicious rows come
/// first. With `force_legit_level1` every legitimate row is labeled 1.
pub fn build_dataset(
    malicious: &[RawQuery],
    legitimate: &[RawQuery],
    dict: &TokenDictionary,
    force_legit_level1: bool,
) -> LabeledDataset {
    let label = |q: &RawQuery, provenance: Provenance| {
        let fv = count_features(&normalize(q), dict);
        let level = if force_legit_level1 && provenance == Provenance::Legitimate {
            RiskLevel::NONE
        } else {
            assign_risk(&fv, dict)
        };
        Sample::new(fv.counts, level, provenance)
    };
    let mut rows = par::map(malicious, |q| label(q, Provenance::MaliciousCapture));
    rows.extend(par::map(legitimate, |q| label(q, Provenance::Legitimate)));
    LabeledDataset::new(rows)
}

pub const DATASET_MAGIC: &str = "# sqlion-dataset v1";

fn dataset_header() -> String {
    let mut h: Vec<String> = (0..FEATURE_COUNT).map(|i| format!("f{i}")).collect();
    h.push("label".into());
    h.push("provenance".into());
    h.join(",")
}

pub fn write_dataset<W: Write>(data: &LabeledDataset, mut w: W) -> Result<()> {
    writeln!(w, "{DATASET_MAGIC}")?;
    writeln!(w, "{}", dataset_header())?;
    let mut line = String::with_capacity(160);
    for row in &data.rows {
        line.clear();
        for c in &row.counts {
            line.push_str(&c.to_string());
            line.push(',');
        }
        line.push_str(&row.label.to_string());
        line.push(',');
        line.push_str(row.provenance.as_str());
        writeln!(w, "{line}")?;
    }
    Ok(())
}

pub fn read_dataset<R: BufRead>(r: R) -> Result<LabeledDataset> {
    let mut lines = r.lines();
    let magic = lines.next().transpose()?.unwrap_or_default();
    if magic.trim_end_matches('\r') != DATASET_MAGIC {
        return Err(Error::VersionMismatch {
            expected: DATASET_MAGIC.into(),
            found: magic,
        });
    }
    let header = lines.next().transpose()?.unwrap_or_default();
    let header = header.trim_end_matches('\r');
    let columns = FEATURE_COUNT + 2;
    let found = header.split(',').count();
    if found != columns {
        return Err(Error::ColumnCount {
            line: 2,
            expected: columns,
            found,
        });
    }
    if header != dataset_header() {
        return Err(Error::parse(2, "unexpected column names"));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let lineno = i + 3;
        let line = line?;
        let line = line.trim_end_matches('\r');
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != columns {
            return Err(Error::ColumnCount {
                line: lineno,
                expected: columns,
                found: fields.len(),
            });
        }
        let mut counts = [0u32; FEATURE_COUNT];
        for (c, f) in counts.iter_mut().zip(&fields[..FEATURE_COUNT]) {
            *c = f
                .parse()
                .map_err(|_| Error::parse(lineno, format!("bad count {f:?}")))?;
        }
        let label_field = fields[FEATURE_COUNT];
        let label = label_field
            .parse::<u8>()
            .ok()
            .and_then(RiskLevel::new)
            .ok_or_else(|| Error::LabelOutOfRange {
                line: lineno,
                value: label_field.to_string(),
            })?;
        let provenance = fields[FEATURE_COUNT + 1]
            .parse()
            .map_err(|e: String| Error::parse(lineno, e))?;
        rows.push(Sample::new(counts, label, provenance));
    }
    Ok(LabeledDataset::new(rows))
}

const CORPUS_ESCAPES: &AsciiSet = &CONTROLS.add(b'%');

/// Corpus files hold one query per line, percent-encoded so arbitrary bytes
/// (including newlines) survive.
pub fn write_corpus<W: Write>(queries: &[RawQuery], mut w: W) -> Result<()> {
    for q in queries {
        writeln!(w, "{}", percent_encode(&q.text, CORPUS_ESCAPES))?;
    }
    Ok(())
}

pub fn read_corpus<R: BufRead>(mut r: R, source: &str) -> Result<Vec<RawQuery>> {
    let mut out = Vec::new();
    let mut buf = Vec::new();
    loop {
        buf.clear();
        if r.read_until(b'\n', &mut buf)? == 0 {
            break;
        }
        let line = buf.strip_suffix(b"\n").unwrap_or(&buf);
        out.push(RawQuery::with_source(
            percent_decode(line).collect::<Vec<u8>>(),
            source,
        ));
    }
    Ok(out)
}

/// Characters escaped when a query is placed in a request target.
const TARGET_ESCAPES: &AsciiSet = &CONTROLS
    .add(b' ')
    .add(b'"')
    .add(b'#')
    .add(b'%')
    .add(b'<')
    .add(b'>')
    .add(b'\\')
    .add(b'`')
    .add(b'{')
    .add(b'}')
    .add(b'|')
    .add(b'^');

/// Renders queries as combined-format access-log lines from seeded client
/// addresses in 10.0.0.0/8, one second apart. Parsing a line back yields the
/// original query bytes.
pub fn corpus_to_log_lines(queries: &[RawQuery], seed: u64) -> Vec<String> {
    const START: i64 = 1_700_000_000;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    queries
        .iter()
        .enumerate()
        .map(|(i, q)| {
            let ip = format!(
                "10.{}.{}.{}",
                rng.gen::<u8>(),
                rng.gen::<u8>(),
                rng.gen_range(1..255u8)
            );
            let request = format!("GET /?{} HTTP/1.1", percent_encode(&q.text, TARGET_ESCAPES));
            combined_line(&ip, START + i as i64, &request, 200, "Mozilla/5.0")
        })
        .collect()
}

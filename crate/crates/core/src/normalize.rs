//! Canonical projections of a raw request.
//!
//! Every query is reduced to two forms:
//!
//! * `l1`, the *alphabetic* form: ASCII-lowercased, `/*...*/` comment spans
//!   removed and all whitespace dropped. Alphabetic patterns are matched here.
//! * `l2`, the *symbolic* form: one round of percent-decoding, one round of
//!   HTML-entity decoding, then all ASCII letters and whitespace removed.
//!   The `x` of a `\x` or `0x` marker is kept (as lowercase `x`) so the hex
//!   and escape markers survive the projection.
//!
//! `l2` is computed from the text *before* comment stripping, so the
//! `/*` and `*/` symbols remain countable.

use std::borrow::Cow;
use std::fmt;

use percent_encoding::percent_decode;

/// One logged request payload: the query string plus any form body.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct RawQuery {
    pub text: Vec<u8>,
    /// Origin tag (corpus name, log file, ...).
    pub source: String,
}

impl RawQuery {
    pub fn new(text: impl Into<Vec<u8>>) -> Self {
        Self {
            text: text.into(),
            source: String::new(),
        }
    }

    pub fn with_source(text: impl Into<Vec<u8>>, source: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            source: source.into(),
        }
    }

    pub fn as_lossy_str(&self) -> Cow<'_, str> {
        String::from_utf8_lossy(&self.text)
    }
}

impl fmt::Debug for RawQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RawQuery")
            .field("text", &self.as_lossy_str())
            .field("source", &self.source)
            .finish()
    }
}

/// The alphabetic (`l1`) and symbolic (`l2`) projections of one request.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct NormalizedQuery {
    pub l1: Vec<u8>,
    pub l2: Vec<u8>,
}

impl NormalizedQuery {
    pub fn new(l1: impl Into<Vec<u8>>, l2: impl Into<Vec<u8>>) -> Self {
        Self {
            l1: l1.into(),
            l2: l2.into(),
        }
    }
}

impl fmt::Debug for NormalizedQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NormalizedQuery")
            .field("l1", &String::from_utf8_lossy(&self.l1))
            .field("l2", &String::from_utf8_lossy(&self.l2))
            .finish()
    }
}

/// Space, tab, CR, LF and form feed.
#[inline]
pub fn is_query_whitespace(b: u8) -> bool {
    matches!(b, b' ' | b'\t' | b'\r' | b'\n' | 0x0c)
}

pub fn normalize(raw: &RawQuery) -> NormalizedQuery {
    normalize_bytes(&raw.text)
}

pub fn normalize_bytes(text: &[u8]) -> NormalizedQuery {
    NormalizedQuery {
        l1: alphabetic_form(text),
        l2: symbolic_form(text),
    }
}

/// True iff re-normalizing `q.l1` leaves it unchanged.
pub fn is_normal_form(q: &NormalizedQuery) -> bool {
    alphabetic_form(&q.l1) == q.l1
}

/// Lowercase, strip `/*...*/` spans, drop whitespace.
///
/// Whitespace is ignored while looking for comment delimiters, so `/ *` opens
/// a comment just like `/*`. An opener only forms against the already-emitted
/// output, which means the result never contains `/*` and the function is a
/// fixed point of itself. An unterminated comment runs to the end of input.
pub fn alphabetic_form(text: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(text.len());
    let mut in_comment = false;
    let mut prev_star = false;
    for &b in text {
        if is_query_whitespace(b) {
            continue;
        }
        let b = b.to_ascii_lowercase();
        if in_comment {
            if prev_star && b == b'/' {
                in_comment = false;
                prev_star = false;
            } else {
                prev_star = b == b'*';
            }
            continue;
        }
        out.push(b);
        if out.ends_with(b"/*") {
            out.truncate(out.len() - 2);
            in_comment = true;
            prev_star = false;
        }
    }
    out
}

/// Percent-decode once, entity-decode once, keep symbols and digits.
pub fn symbolic_form(text: &[u8]) -> Vec<u8> {
    let decoded = decode_once(text);
    let mut out = Vec::with_capacity(decoded.len());
    for (i, &b) in decoded.iter().enumerate() {
        if is_query_whitespace(b) {
            continue;
        }
        if b.is_ascii_alphabetic() {
            let marker =
                (b == b'x' || b == b'X') && i > 0 && matches!(decoded[i - 1], b'\\' | b'0');
            if marker {
                out.push(b'x');
            }
            continue;
        }
        out.push(b);
    }
    out
}

/// One round of percent-decoding followed by one round of HTML-entity
/// decoding. Malformed sequences pass through untouched.
pub fn decode_once(text: &[u8]) -> Vec<u8> {
    let pct: Vec<u8> = percent_decode(text).collect();
    decode_entities(&pct)
}

/// Longest entity body we try to resolve (`&CounterClockwiseContourIntegral;`).
const MAX_ENTITY_LEN: usize = 40;

/// Decodes named and numeric HTML entities in an arbitrary byte string.
///
/// Candidate spans `&...;` consist of ASCII only, so each one can be handed to
/// the entity table as UTF-8 without touching surrounding bytes.
pub fn decode_entities(text: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(text.len());
    let mut i = 0;
    while i < text.len() {
        if text[i] == b'&' {
            if let Some(rel) = text[i + 1..]
                .iter()
                .take(MAX_ENTITY_LEN)
                .position(|&c| c == b';')
            {
                let end = i + 1 + rel;
                let body = &text[i + 1..end];
                if !body.is_empty() && body.iter().all(|c| c.is_ascii_alphanumeric() || *c == b'#')
                {
                    // ASCII by construction.
                    let span = std::str::from_utf8(&text[i..=end]).expect("ascii entity span");
                    let decoded = html_escape::decode_html_entities(span);
                    if decoded != span {
                        out.extend_from_slice(decoded.as_bytes());
                        i = end + 1;
                        continue;
                    }
                }
            }
        }
        out.push(text[i]);
        i += 1;
    }
    out
}

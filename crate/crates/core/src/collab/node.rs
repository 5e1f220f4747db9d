//! Client agent and analyzer state machines, independent of transport.

use std::collections::{HashMap, VecDeque};
use std::net::IpAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::dataset::{parse_log_line, AccessLogRecord};
use crate::features::TokenDictionary;
use crate::labeler::{verdict_from_level, BlockThreshold, RiskLevel};
use crate::ml::{classify_bytes, TrainedModel};

use super::blocklist::{BlockEntry, Blocklist};
use super::wire::{Role, WireMessage};

/// How many verdict levels an agent remembers for threshold checks.
const REMEMBERED_VERDICTS: usize = 1 << 16;

#[derive(Debug, Default)]
pub struct AgentStats {
    pub sent: AtomicU64,
    pub dropped: AtomicU64,
    pub malformed: AtomicU64,
    pub blocks_applied: AtomicU64,
    pub blocks_ignored: AtomicU64,
}

impl AgentStats {
    pub fn get(counter: &AtomicU64) -> u64 {
        counter.load(Ordering::Relaxed)
    }
}

/// Produces fresh query ids. Tests plug in a counter for determinism.
pub type IdSource = Box<dyn FnMut() -> String + Send>;

pub fn uuid_ids() -> IdSource {
    Box::new(|| uuid::Uuid::new_v4().to_string())
}

/// The client-side node: turns access-log records into query messages and
/// keeps the local blocklist current.
pub struct AgentCore {
    name: String,
    threshold: BlockThreshold,
    blocklist: Arc<Blocklist>,
    stats: Arc<AgentStats>,
    next_id: IdSource,
    /// Highest level seen per query id, so blocks below our threshold can be
    /// ignored.
    levels: HashMap<String, RiskLevel>,
    level_order: VecDeque<String>,
}

impl std::fmt::Debug for AgentCore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AgentCore")
            .field("name", &self.name)
            .field("threshold", &self.threshold)
            .field("blocked", &self.blocklist.len())
            .finish_non_exhaustive()
    }
}

impl AgentCore {
    pub fn new(
        name: impl Into<String>,
        threshold: BlockThreshold,
        blocklist: Arc<Blocklist>,
    ) -> Self {
        Self::with_ids(name, threshold, blocklist, uuid_ids())
    }

    pub fn with_ids(
        name: impl Into<String>,
        threshold: BlockThreshold,
        blocklist: Arc<Blocklist>,
        next_id: IdSource,
    ) -> Self {
        Self {
            name: name.into(),
            threshold,
            blocklist,
            stats: Arc::default(),
            next_id,
            levels: HashMap::new(),
            level_order: VecDeque::new(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn hello(&self) -> WireMessage {
        WireMessage::Hello {
            role: Role::Client,
            name: self.name.clone(),
        }
    }

    pub fn blocklist(&self) -> &Arc<Blocklist> {
        &self.blocklist
    }

    pub fn stats(&self) -> &Arc<AgentStats> {
        &self.stats
    }

    pub fn is_blocked(&self, ip: &IpAddr) -> bool {
        self.blocklist.is_blocked(ip)
    }

    /// A query message for `rec`, or `None` when its source is blocked.
    pub fn on_record(&mut self, rec: &AccessLogRecord) -> Option<WireMessage> {
        if self.blocklist.is_blocked(&rec.client_ip) {
            self.stats.dropped.fetch_add(1, Ordering::Relaxed);
            return None;
        }
        self.stats.sent.fetch_add(1, Ordering::Relaxed);
        Some(WireMessage::Query {
            id: (self.next_id)(),
            client: self.name.clone(),
            ip: rec.client_ip.to_string(),
            timestamp: rec.timestamp,
            query: String::from_utf8_lossy(&rec.query).into_owned(),
        })
    }

    /// Parses one access-log line; malformed lines are counted and skipped.
    pub fn on_log_line(&mut self, line: &[u8]) -> Option<WireMessage> {
        if line.iter().all(u8::is_ascii_whitespace) {
            return None;
        }
        match parse_log_line(line) {
            Some(rec) => self.on_record(&rec),
            None => {
                self.stats.malformed.fetch_add(1, Ordering::Relaxed);
                None
            }
        }
    }

    /// Applies broker traffic. Returns true when the blocklist changed.
    pub fn on_message(&mut self, msg: &WireMessage) -> bool {
        match msg {
            WireMessage::Verdict { id, level, .. } => {
                let slot = self.levels.entry(id.clone()).or_insert_with(|| {
                    self.level_order.push_back(id.clone());
                    *level
                });
                *slot = (*slot).max(*level);
                if self.level_order.len() > REMEMBERED_VERDICTS {
                    if let Some(old) = self.level_order.pop_front() {
                        self.levels.remove(&old);
                    }
                }
                false
            }
            WireMessage::Block {
                ip,
                issued_at,
                reason,
            } => {
                let below = self
                    .levels
                    .get(reason)
                    .is_some_and(|l| l.value() < self.threshold.value());
                let parsed = ip.parse::<IpAddr>();
                match parsed {
                    Ok(ip) if !below => {
                        self.stats.blocks_applied.fetch_add(1, Ordering::Relaxed);
                        self.blocklist.apply(BlockEntry {
                            ip,
                            issued_at: *issued_at,
                            reason: reason.clone(),
                        })
                    }
                    Ok(_) => {
                        self.stats.blocks_ignored.fetch_add(1, Ordering::Relaxed);
                        false
                    }
                    Err(_) => {
                        log::warn!("{}: ignoring block for unparseable ip {ip:?}", self.name);
                        false
                    }
                }
            }
            WireMessage::Error { code, message } => {
                log::warn!("{}: broker error {code}: {message}", self.name);
                false
            }
            _ => false,
        }
    }
}

/// Outcome of classifying one query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Classification {
    pub level: RiskLevel,
    pub verdict: crate::labeler::Verdict,
    pub confidence: f64,
}

/// The analyzer node: stateless apart from its model and dictionary.
#[derive(Debug, Clone)]
pub struct AnalyzerCore {
    name: String,
    model: Arc<TrainedModel>,
    dict: Arc<TokenDictionary>,
    threshold: BlockThreshold,
}

impl AnalyzerCore {
    pub fn new(
        name: impl Into<String>,
        model: Arc<TrainedModel>,
        dict: Arc<TokenDictionary>,
        threshold: BlockThreshold,
    ) -> Self {
        Self {
            name: name.into(),
            model,
            dict,
            threshold,
        }
    }

    pub fn hello(&self) -> WireMessage {
        WireMessage::Hello {
            role: Role::Analyzer,
            name: self.name.clone(),
        }
    }

    pub fn classify(&self, raw: &[u8]) -> Classification {
        let p = classify_bytes(&self.model, &self.dict, raw);
        Classification {
            level: p.level,
            verdict: verdict_from_level(p.level, self.threshold),
            confidence: p.confidence.clamp(0.0, 1.0),
        }
    }

    /// A verdict for every query; everything else is ignored.
    pub fn on_message(&self, msg: &WireMessage) -> Option<WireMessage> {
        match msg {
            WireMessage::Query { id, ip, query, .. } => {
                let c = self.classify(query.as_bytes());
                Some(WireMessage::Verdict {
                    id: id.clone(),
                    level: c.level,
                    verdict: c.verdict,
                    model: self.model.kind(),
                    confidence: c.confidence,
                    ip: ip.clone(),
                })
            }
            WireMessage::Error { code, message } => {
                log::warn!("{}: broker error {code}: {message}", self.name);
                None
            }
            _ => None,
        }
    }
}

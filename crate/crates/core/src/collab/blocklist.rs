use std::collections::HashMap;
use std::net::IpAddr;
use std::sync::RwLock;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockEntry {
    pub ip: IpAddr,
    pub issued_at: i64,
    /// Id of the query whose verdict triggered the block.
    pub reason: String,
}

/// Source IPs whose requests are dropped. One entry per address; the entry
/// with the latest `issued_at` wins. Readers never see a half-applied update.
#[derive(Debug, Default)]
pub struct Blocklist {
    entries: RwLock<HashMap<IpAddr, BlockEntry>>,
    /// Seconds an entry stays effective; `None` blocks forever.
    ttl: Option<i64>,
}

impl Blocklist {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_ttl(ttl_secs: Option<i64>) -> Self {
        Self {
            entries: RwLock::default(),
            ttl: ttl_secs,
        }
    }

    /// Inserts or replaces the entry for `entry.ip`. Returns true when the
    /// stored state changed.
    pub fn apply(&self, entry: BlockEntry) -> bool {
        let mut map = self.entries.write().expect("blocklist lock poisoned");
        match map.get(&entry.ip) {
            Some(cur) if cur.issued_at > entry.issued_at || *cur == entry => false,
            _ => {
                map.insert(entry.ip, entry);
                true
            }
        }
    }

    /// Exact-match membership; `now` only matters when a TTL is configured.
    pub fn is_blocked_at(&self, ip: &IpAddr, now: i64) -> bool {
        let map = self.entries.read().expect("blocklist lock poisoned");
        match (map.get(ip), self.ttl) {
            (None, _) => false,
            (Some(_), None) => true,
            (Some(e), Some(ttl)) => now < e.issued_at.saturating_add(ttl),
        }
    }

    pub fn is_blocked(&self, ip: &IpAddr) -> bool {
        self.is_blocked_at(ip, chrono::Utc::now().timestamp())
    }

    pub fn get(&self, ip: &IpAddr) -> Option<BlockEntry> {
        self.entries
            .read()
            .expect("blocklist lock poisoned")
            .get(ip)
            .cloned()
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("blocklist lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Snapshot sorted by address.
    pub fn entries(&self) -> Vec<BlockEntry> {
        let mut v: Vec<_> = self
            .entries
            .read()
            .expect("blocklist lock poisoned")
            .values()
            .cloned()
            .collect();
        v.sort_by_key(|e| e.ip);
        v
    }
}

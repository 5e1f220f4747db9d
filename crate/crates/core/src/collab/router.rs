//! Broker routing policy, free of any I/O. The TCP broker and the in-process
//! harness both drive a [`Router`].

use std::collections::{BTreeMap, HashSet, VecDeque};

use crate::labeler::Verdict;

use super::wire::{codes, Role, WireMessage};

pub type NodeId = u64;

/// How many recent query ids are remembered for verdict validation.
pub const REMEMBERED_QUERIES: usize = 1 << 16;

#[derive(Debug, Clone, PartialEq)]
pub struct Outbound {
    pub to: NodeId,
    pub msg: WireMessage,
}

/// Result of routing one inbound message.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Routed {
    /// Deliveries in the order they must be sent.
    pub out: Vec<Outbound>,
    /// The sender must be disconnected after its replies are flushed.
    pub close_sender: bool,
}

#[derive(Debug, Clone)]
struct Node {
    role: Option<Role>,
    name: String,
}

pub struct Router {
    nodes: BTreeMap<NodeId, Node>,
    next_id: NodeId,
    recent: HashSet<String>,
    recent_order: VecDeque<String>,
    clock: Box<dyn Fn() -> i64 + Send>,
}

impl std::fmt::Debug for Router {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Router")
            .field("nodes", &self.nodes)
            .field("remembered", &self.recent.len())
            .finish_non_exhaustive()
    }
}

impl Default for Router {
    fn default() -> Self {
        Self::new()
    }
}

impl Router {
    pub fn new() -> Self {
        Self::with_clock(|| chrono::Utc::now().timestamp())
    }

    /// Router whose synthesized blocks are stamped by `clock`.
    pub fn with_clock(clock: impl Fn() -> i64 + Send + 'static) -> Self {
        Self {
            nodes: BTreeMap::new(),
            next_id: 1,
            recent: HashSet::new(),
            recent_order: VecDeque::new(),
            clock: Box::new(clock),
        }
    }

    /// Registers a fresh connection that has not said hello yet.
    pub fn connect(&mut self) -> NodeId {
        let id = self.next_id;
        self.next_id += 1;
        self.nodes.insert(
            id,
            Node {
                role: None,
                name: String::new(),
            },
        );
        id
    }

    pub fn disconnect(&mut self, id: NodeId) {
        self.nodes.remove(&id);
    }

    pub fn role(&self, id: NodeId) -> Option<Role> {
        self.nodes.get(&id).and_then(|n| n.role)
    }

    pub fn name(&self, id: NodeId) -> Option<&str> {
        self.nodes.get(&id).map(|n| n.name.as_str())
    }

    fn subscribers(&self, role: Role) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes
            .iter()
            .filter(move |(_, n)| n.role == Some(role))
            .map(|(id, _)| *id)
    }

    fn remember(&mut self, id: &str) {
        if self.recent.insert(id.to_string()) {
            self.recent_order.push_back(id.to_string());
            if self.recent_order.len() > REMEMBERED_QUERIES {
                if let Some(old) = self.recent_order.pop_front() {
                    self.recent.remove(&old);
                }
            }
        }
    }

    fn reject(from: NodeId, code: &str, message: impl Into<String>) -> Routed {
        Routed {
            out: vec![Outbound {
                to: from,
                msg: WireMessage::error(code, message),
            }],
            close_sender: true,
        }
    }

    /// Reports a line that could not be decoded.
    pub fn malformed(&mut self, from: NodeId, code: &str, detail: impl Into<String>) -> Routed {
        Self::reject(from, code, detail)
    }

    /// Routes one decoded message from `from`.
    pub fn route(&mut self, from: NodeId, msg: WireMessage) -> Routed {
        let Some(node) = self.nodes.get_mut(&from) else {
            return Routed::default();
        };
        let Some(role) = node.role else {
            return match msg {
                WireMessage::Hello { role, name } => {
                    node.role = Some(role);
                    node.name = name;
                    Routed::default()
                }
                other => Self::reject(
                    from,
                    codes::BAD_MESSAGE,
                    format!("expected hello, got {}", other.kind()),
                ),
            };
        };
        match (role, msg) {
            (
                Role::Client,
                WireMessage::Query {
                    id,
                    client,
                    ip,
                    timestamp,
                    query,
                },
            ) => {
                self.remember(&id);
                let msg = WireMessage::Query {
                    id,
                    client,
                    ip,
                    timestamp,
                    query,
                };
                Routed {
                    out: self
                        .subscribers(Role::Analyzer)
                        .map(|to| Outbound {
                            to,
                            msg: msg.clone(),
                        })
                        .collect(),
                    close_sender: false,
                }
            }
            (Role::Analyzer, msg @ WireMessage::Verdict { .. }) => {
                let WireMessage::Verdict {
                    id, verdict, ip, ..
                } = &msg
                else {
                    unreachable!()
                };
                if !self.recent.contains(id) {
                    return Routed {
                        out: vec![Outbound {
                            to: from,
                            msg: WireMessage::error(
                                codes::UNKNOWN_QUERY,
                                format!("no routed query {id}"),
                            ),
                        }],
                        close_sender: false,
                    };
                }
                let block = (*verdict == Verdict::Attack).then(|| WireMessage::Block {
                    ip: ip.clone(),
                    issued_at: (self.clock)(),
                    reason: id.clone(),
                });
                let clients: Vec<NodeId> = self.subscribers(Role::Client).collect();
                let mut out: Vec<Outbound> = clients
                    .iter()
                    .map(|&to| Outbound {
                        to,
                        msg: msg.clone(),
                    })
                    .collect();
                if let Some(block) = block {
                    out.extend(clients.iter().map(|&to| Outbound {
                        to,
                        msg: block.clone(),
                    }));
                }
                Routed {
                    out,
                    close_sender: false,
                }
            }
            (_, WireMessage::Hello { .. }) => {
                Self::reject(from, codes::BAD_MESSAGE, "duplicate hello")
            }
            (_, WireMessage::Error { code, message }) => {
                log::warn!("node {from} reported {code}: {message}");
                Routed::default()
            }
            (role, other) => Routed {
                out: vec![Outbound {
                    to: from,
                    msg: WireMessage::error(
                        codes::BAD_ROLE,
                        format!("{role:?} nodes may not send {}", other.kind()).to_lowercase(),
                    ),
                }],
                close_sender: false,
            },
        }
    }
}

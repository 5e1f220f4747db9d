//! Deterministic single-threaded network: one router, any number of agents
//! and analyzers, explicit message queues. Every message goes through the
//! same encode/decode path as on a socket.

use std::collections::VecDeque;
use std::net::IpAddr;

use super::node::{AgentCore, AnalyzerCore};
use super::router::{NodeId, Router};
use super::wire::WireMessage;

enum Member {
    Agent(AgentCore),
    Analyzer(AnalyzerCore),
}

struct Slot {
    id: NodeId,
    member: Member,
    /// Lines sent by this node, not yet routed.
    to_broker: VecDeque<String>,
    /// Lines routed to this node, not yet handled.
    inbox: VecDeque<String>,
}

/// One routed delivery, as observed on the wire.
#[derive(Debug, Clone, PartialEq)]
pub struct Delivery {
    pub from: NodeId,
    pub to: NodeId,
    pub msg: WireMessage,
}

pub struct LocalNetwork {
    router: Router,
    slots: Vec<Slot>,
    trace: Vec<Delivery>,
}

impl Default for LocalNetwork {
    fn default() -> Self {
        Self::new(Router::new())
    }
}

impl LocalNetwork {
    pub fn new(router: Router) -> Self {
        Self {
            router,
            slots: Vec::new(),
            trace: Vec::new(),
        }
    }

    fn join(&mut self, member: Member) -> usize {
        let id = self.router.connect();
        let hello = match &member {
            Member::Agent(a) => a.hello(),
            Member::Analyzer(a) => a.hello(),
        };
        self.slots.push(Slot {
            id,
            member,
            to_broker: VecDeque::from([hello.encode()]),
            inbox: VecDeque::new(),
        });
        self.slots.len() - 1
    }

    /// Adds an agent; returns its index for later calls.
    pub fn add_agent(&mut self, agent: AgentCore) -> usize {
        self.join(Member::Agent(agent))
    }

    pub fn add_analyzer(&mut self, analyzer: AnalyzerCore) -> usize {
        self.join(Member::Analyzer(analyzer))
    }

    pub fn node_id(&self, idx: usize) -> NodeId {
        self.slots[idx].id
    }

    pub fn agent(&self, idx: usize) -> &AgentCore {
        match &self.slots[idx].member {
            Member::Agent(a) => a,
            Member::Analyzer(_) => panic!("node {idx} is an analyzer"),
        }
    }

    pub fn is_blocked(&self, agent_idx: usize, ip: &IpAddr) -> bool {
        self.agent(agent_idx).is_blocked(ip)
    }

    /// Feeds one access-log line to an agent. Returns true if the agent
    /// emitted a query for it.
    pub fn inject_log_line(&mut self, agent_idx: usize, line: &[u8]) -> bool {
        let slot = &mut self.slots[agent_idx];
        let Member::Agent(agent) = &mut slot.member else {
            panic!("node {agent_idx} is not an agent");
        };
        match agent.on_log_line(line) {
            Some(msg) => {
                slot.to_broker.push_back(msg.encode());
                true
            }
            None => false,
        }
    }

    /// Everything routed so far, in routing order.
    pub fn trace(&self) -> &[Delivery] {
        &self.trace
    }

    pub fn is_idle(&self) -> bool {
        self.slots
            .iter()
            .all(|s| s.to_broker.is_empty() && s.inbox.is_empty())
    }

    /// Runs until every queue is empty. Nodes are visited round-robin in
    /// join order, one message at a time, so a run is fully reproducible.
    /// Returns the number of steps taken.
    pub fn drain(&mut self) -> usize {
        let mut steps = 0;
        while !self.is_idle() {
            for i in 0..self.slots.len() {
                if let Some(line) = self.slots[i].inbox.pop_front() {
                    self.deliver(i, &line);
                    steps += 1;
                }
                if let Some(line) = self.slots[i].to_broker.pop_front() {
                    self.route(i, &line);
                    steps += 1;
                }
            }
        }
        steps
    }

    fn route(&mut self, idx: usize, line: &str) {
        let from = self.slots[idx].id;
        let routed = match WireMessage::decode(line) {
            Ok(msg) => self.router.route(from, msg),
            Err(e) => self
                .router
                .malformed(from, super::wire::codes::BAD_MESSAGE, e),
        };
        for out in routed.out {
            if let Some(slot) = self.slots.iter_mut().find(|s| s.id == out.to) {
                slot.inbox.push_back(out.msg.encode());
            }
            self.trace.push(Delivery {
                from,
                to: out.to,
                msg: out.msg,
            });
        }
        if routed.close_sender {
            self.router.disconnect(from);
        }
    }

    fn deliver(&mut self, idx: usize, line: &str) {
        let msg = WireMessage::decode(line).expect("router emits valid records");
        let slot = &mut self.slots[idx];
        match &mut slot.member {
            Member::Agent(a) => {
                a.on_message(&msg);
            }
            Member::Analyzer(a) => {
                if let Some(reply) = a.on_message(&msg) {
                    slot.to_broker.push_back(reply.encode());
                }
            }
        }
    }
}

//! Node identifiers, flows and the data packet model.

use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl From<usize> for NodeId {
    fn from(value: usize) -> Self {
        NodeId(value as u32)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PacketId(pub u64);

/// A source/destination pair with its generation rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowSpec {
    pub source: NodeId,
    pub destination: NodeId,
    /// Expected packets generated per slot. The integer part is emitted every
    /// slot; the fractional part as a Bernoulli trial.
    #[serde(default = "default_rate")]
    pub packets_per_slot: f64,
}

fn default_rate() -> f64 {
    1.0
}

/// How the copy of a packet sitting in a queue got there.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArrivalMode {
    Local,
    Unicast,
    Broadcast,
}

impl ArrivalMode {
    /// Observation encoding: -1 local, 0 unicast, 1 broadcast.
    pub fn feature(self) -> f64 {
        match self {
            ArrivalMode::Local => -1.0,
            ArrivalMode::Unicast => 0.0,
            ArrivalMode::Broadcast => 1.0,
        }
    }
}

/// One live copy of a data packet.
///
/// Copies produced by a broadcast share `id` but carry their own trace.
#[derive(Debug, Clone, PartialEq)]
pub struct Packet {
    pub id: PacketId,
    /// Index into the configured flow list.
    pub flow: usize,
    pub source: NodeId,
    pub destination: NodeId,
    pub created_slot: u64,
    pub path_trace: Vec<NodeId>,
}

impl Packet {
    pub fn new(id: PacketId, flow: usize, spec: &FlowSpec, created_slot: u64) -> Self {
        Self {
            id,
            flow,
            source: spec.source,
            destination: spec.destination,
            created_slot,
            path_trace: vec![spec.source],
        }
    }

    pub fn hop_count(&self) -> usize {
        self.path_trace.len() - 1
    }

    pub fn visited(&self, node: NodeId) -> bool {
        self.path_trace.contains(&node)
    }

    /// Copy of this packet as received by `node`.
    pub fn relayed_to(&self, node: NodeId) -> Packet {
        let mut next = self.clone();
        next.path_trace.push(node);
        next
    }
}

//! Link success model and per-transmission delivery of data and ACKs.
//!
//! Links are perfect within radio range and decay exponentially beyond it.
//! Transmissions do not interfere with each other.

use serde::{Deserialize, Serialize};

use crate::packet::NodeId;
use crate::rng::SimRng;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChannelConfig {
    /// Overrides the scenario radio range when set.
    pub range_m: Option<f64>,
    /// Decay length beyond range. Defaults to a tenth of the range.
    pub falloff_m: Option<f64>,
    pub ack_lossless: bool,
}

impl ChannelConfig {
    pub fn resolve(&self, radio_range_m: f64) -> Channel {
        let range_m = self.range_m.unwrap_or(radio_range_m);
        Channel {
            range_m,
            falloff_m: self.falloff_m.unwrap_or(0.1 * range_m),
            ack_lossless: self.ack_lossless,
        }
    }
}

/// Fully resolved link parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Channel {
    pub range_m: f64,
    pub falloff_m: f64,
    pub ack_lossless: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TxMode {
    Unicast,
    Broadcast,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TxOutcome {
    pub mode: TxMode,
    /// Nodes that decoded the data packet, ascending.
    pub receivers: Vec<NodeId>,
    /// Receivers whose ACK made it back, ascending. Always a subset of
    /// `receivers`.
    pub acks: Vec<NodeId>,
}

pub fn link_success_prob(distance: f64, channel: &Channel) -> f64 {
    if distance <= channel.range_m {
        1.0
    } else {
        (-(distance - channel.range_m) / channel.falloff_m).exp()
    }
}

fn attempt(p: f64, rng: &mut SimRng) -> bool {
    p >= 1.0 || rng.chance(p)
}

/// Send one packet from `sender`. `target` is the unicast next hop and is
/// ignored for broadcasts. `distance_to` gives the sender-to-node distance.
pub fn transmit<F>(
    sender: NodeId,
    mode: TxMode,
    target: Option<NodeId>,
    node_count: usize,
    distance_to: F,
    channel: &Channel,
    rng: &mut SimRng,
) -> TxOutcome
where
    F: Fn(NodeId) -> f64,
{
    let candidates: Vec<NodeId> = match mode {
        TxMode::Unicast => {
            let t = target.expect("unicast needs a target");
            assert_ne!(t, sender, "unicast target must differ from sender");
            vec![t]
        }
        TxMode::Broadcast => (0..node_count)
            .map(NodeId::from)
            .filter(|&j| j != sender)
            .collect(),
    };
    let mut receivers = Vec::new();
    let mut acks = Vec::new();
    for j in candidates {
        let p = link_success_prob(distance_to(j), channel);
        if attempt(p, rng) {
            receivers.push(j);
            if channel.ack_lossless || attempt(p, rng) {
                acks.push(j);
            }
        }
    }
    TxOutcome {
        mode,
        receivers,
        acks,
    }
}

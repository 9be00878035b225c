use serde::{Deserialize, Serialize};

use crate::policy::{broadcast_probability, Action};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardKind {
    Reward1,
    Reward2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    pub kind: RewardKind,
    /// Discount used by the trainer; carried along for provenance only.
    pub gamma: f64,
    /// Delivery credit.
    pub w1: f64,
    /// Penalty for a transmission that drew no ACK.
    pub w2: f64,
    /// Penalty per ACK, normalized by network size.
    pub w3: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            kind: RewardKind::Reward1,
            gamma: 0.99,
            w1: 1.0,
            w2: 0.2,
            w3: 0.5,
        }
    }
}

/// Immediate reward of the CQ+-equivalent formulation: broadcasting earns
/// the CQ+ broadcast probability, unicasting its complement.
pub fn compute_reward1(action: Action, c_best: f64, epsilon: f64) -> f64 {
    match action {
        Action::Broadcast => broadcast_probability(c_best, epsilon),
        Action::Unicast => c_best * (1.0 - epsilon),
    }
}

/// What happened to one node within one slot.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SlotEvents {
    /// A packet that passed through this node reached its destination.
    pub contributed_delivery: bool,
    pub transmitted: bool,
    pub acks: u32,
}

pub fn compute_reward2(events: &SlotEvents, cfg: &RewardConfig, node_count: usize) -> f64 {
    let delivered = if events.contributed_delivery {
        1.0
    } else {
        0.0
    };
    let silent = if events.transmitted && events.acks == 0 {
        1.0
    } else {
        0.0
    };
    cfg.w1 * delivered - cfg.w2 * silent - cfg.w3 * events.acks as f64 / node_count as f64
}

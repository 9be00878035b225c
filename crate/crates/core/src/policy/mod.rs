//! Broadcast/unicast decision rules.
//!
//! All policies unicast to the lowest-cost next hop when they unicast; they
//! differ only in how they pick between the two modes:
//!
//! * `cq_plus`: broadcast with probability `ε + (1−ε)(1−c_best)`.
//! * `cq_plus_hard`: broadcast iff `c_best·(1−ε) < 1/2`, the action that
//!   maximizes the immediate reward-1 payoff.
//! * `neural`: sample from a feed-forward network over the observation.

mod network;
mod observation;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::channel::TxMode;
use crate::rng::SimRng;

pub use network::{forward, forward_features, Activation, DenseLayer, PolicyWeights, WeightsError};
pub use observation::{action_feature, build_observation, Observation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Unicast,
    Broadcast,
}

impl Action {
    pub fn from_index(value: u8) -> Option<Self> {
        match value {
            0 => Some(Action::Unicast),
            1 => Some(Action::Broadcast),
            _ => None,
        }
    }

    pub fn index(self) -> u8 {
        match self {
            Action::Unicast => 0,
            Action::Broadcast => 1,
        }
    }

    pub fn mode(self) -> TxMode {
        match self {
            Action::Unicast => TxMode::Unicast,
            Action::Broadcast => TxMode::Broadcast,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    CqPlus,
    CqPlusHard,
    Neural,
}

/// Which previous action fills the `prev_action` feature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrevActionSource {
    /// The deciding node's own last action for this destination.
    #[default]
    Own,
    /// The action of the node the packet was received from.
    Upstream,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySpec {
    pub kind: PolicyKind,
    /// Minimum broadcast probability ε.
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Arc<PolicyWeights>>,
    #[serde(default)]
    pub prev_action: PrevActionSource,
}

fn default_epsilon() -> f64 {
    0.05
}

impl Default for PolicySpec {
    fn default() -> Self {
        Self::cq_plus(default_epsilon())
    }
}

impl PolicySpec {
    pub fn cq_plus(epsilon: f64) -> Self {
        Self {
            kind: PolicyKind::CqPlus,
            epsilon,
            weights: None,
            prev_action: PrevActionSource::Own,
        }
    }

    pub fn cq_plus_hard(epsilon: f64) -> Self {
        Self {
            kind: PolicyKind::CqPlusHard,
            ..Self::cq_plus(epsilon)
        }
    }

    pub fn neural(epsilon: f64, weights: Arc<PolicyWeights>) -> Self {
        Self {
            kind: PolicyKind::Neural,
            weights: Some(weights),
            ..Self::cq_plus(epsilon)
        }
    }

    /// Pick an action for one packet. `c_best` is the confidence of the
    /// chosen next hop.
    pub fn decide(
        &self,
        c_best: f64,
        obs: &Observation,
        rng: &mut SimRng,
    ) -> Result<Action, WeightsError> {
        match self.kind {
            PolicyKind::CqPlus => Ok(decide_cq_plus(c_best, self.epsilon, rng)),
            PolicyKind::CqPlusHard => Ok(decide_cq_plus_hard(c_best, self.epsilon)),
            PolicyKind::Neural => {
                let weights = self
                    .weights
                    .as_deref()
                    .ok_or_else(|| WeightsError::Schema("neural policy without weights".into()))?;
                decide_neural(weights, obs, rng)
            }
        }
    }
}

pub fn broadcast_probability(c_best: f64, epsilon: f64) -> f64 {
    1.0 - c_best * (1.0 - epsilon)
}

/// Stochastic CQ+ rule. Always consumes exactly one uniform draw.
pub fn decide_cq_plus(c_best: f64, epsilon: f64, rng: &mut SimRng) -> Action {
    if rng.uniform() < broadcast_probability(c_best, epsilon) {
        Action::Broadcast
    } else {
        Action::Unicast
    }
}

/// Deterministic threshold rule; an exact tie unicasts.
pub fn decide_cq_plus_hard(c_best: f64, epsilon: f64) -> Action {
    if c_best * (1.0 - epsilon) < 0.5 {
        Action::Broadcast
    } else {
        Action::Unicast
    }
}

/// Sample from the network's output. Always consumes exactly one uniform draw.
pub fn decide_neural(
    weights: &PolicyWeights,
    obs: &Observation,
    rng: &mut SimRng,
) -> Result<Action, WeightsError> {
    let (_, p_broadcast) = forward(weights, obs)?;
    Ok(if rng.uniform() < p_broadcast {
        Action::Broadcast
    } else {
        Action::Unicast
    })
}

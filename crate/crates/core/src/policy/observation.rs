use crate::cqtable::{CqTable, FeatureSnapshot};
use crate::packet::{ArrivalMode, NodeId};

use super::Action;

/// Fixed-width policy input: the `K` best next hops' confidence and
/// normalized hop estimates, their change since the previous decision for
/// the same destination, the previous action and how the packet arrived.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub c_top: Vec<f64>,
    pub h_top: Vec<f64>,
    pub dc_top: Vec<f64>,
    pub dh_top: Vec<f64>,
    /// -1 none, 0 unicast, 1 broadcast.
    pub prev_action: f64,
    /// -1 generated locally, 0 unicast, 1 broadcast.
    pub arrival_mode: f64,
}

impl Observation {
    pub fn width(k: usize) -> usize {
        4 * k + 2
    }

    pub fn k(&self) -> usize {
        self.c_top.len()
    }

    pub fn features(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(Self::width(self.k()));
        v.extend_from_slice(&self.c_top);
        v.extend_from_slice(&self.h_top);
        v.extend_from_slice(&self.dc_top);
        v.extend_from_slice(&self.dh_top);
        v.push(self.prev_action);
        v.push(self.arrival_mode);
        v
    }

    /// Inverse of [`Observation::features`].
    pub fn from_features(features: &[f64]) -> Option<Self> {
        if features.len() < 2 || !(features.len() - 2).is_multiple_of(4) {
            return None;
        }
        let k = (features.len() - 2) / 4;
        let part = |i: usize| features[i * k..(i + 1) * k].to_vec();
        Some(Self {
            c_top: part(0),
            h_top: part(1),
            dc_top: part(2),
            dh_top: part(3),
            prev_action: features[4 * k],
            arrival_mode: features[4 * k + 1],
        })
    }
}

pub fn action_feature(action: Option<Action>) -> f64 {
    match action {
        None => -1.0,
        Some(Action::Unicast) => 0.0,
        Some(Action::Broadcast) => 1.0,
    }
}

/// Assemble the observation for routing a packet to `d` and remember the
/// rows so the next decision for `d` can report deltas.
pub fn build_observation(
    table: &mut CqTable,
    d: NodeId,
    k: usize,
    h_cap: f64,
    prev_action: Option<Action>,
    arrival_mode: ArrivalMode,
) -> Observation {
    let rows = table.top_k(d, k);
    let c_top: Vec<f64> = rows.iter().map(|r| r.c).collect();
    let h_top: Vec<f64> = rows.iter().map(|r| r.h.clamp(1.0, h_cap) / h_cap).collect();
    let current = FeatureSnapshot {
        c: c_top.clone(),
        h: h_top.clone(),
    };
    let previous = table.snapshots.insert(d, current);
    let (dc_top, dh_top) = match previous {
        Some(prev) => (
            c_top.iter().zip(&prev.c).map(|(a, b)| a - b).collect(),
            h_top.iter().zip(&prev.h).map(|(a, b)| a - b).collect(),
        ),
        None => (vec![0.0; k], vec![0.0; k]),
    };
    Observation {
        c_top,
        h_top,
        dc_top,
        dh_top,
        prev_action: action_feature(prev_action),
        arrival_mode: arrival_mode.feature(),
    }
}

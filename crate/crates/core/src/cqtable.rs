//! Per-node confidence (C) and hop-estimate (H) routing state.
//!
//! Node `i` keeps `c(i, j, d)` and `h(i, j, d)` for every other node `j`
//! (candidate next hop) and every other node `d` (destination). Unvisited
//! pairs report the initialization values. Values are refreshed from the
//! `(c_ack, h_ack)` pair carried back on acknowledgements and decayed when a
//! transmission goes unacknowledged.

use std::collections::HashMap;
use std::io;

use serde::{Deserialize, Serialize};

use crate::packet::NodeId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CqConfig {
    /// Weight `λ` given to a fresh `c_ack` sample.
    pub lambda: f64,
    pub c_init: f64,
    /// Initial hop estimate. Defaults to the observation cap `h_cap`.
    pub h_init: Option<f64>,
}

impl Default for CqConfig {
    fn default() -> Self {
        Self {
            lambda: 0.1,
            c_init: 0.0,
            h_init: None,
        }
    }
}

/// Values piggybacked on an ACK by the receiving node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AckValues {
    pub c_ack: f64,
    pub h_ack: f64,
}

impl AckValues {
    /// What the destination itself returns: one hop away, full confidence.
    pub const DESTINATION: AckValues = AckValues {
        c_ack: 1.0,
        h_ack: 1.0,
    };
}

/// One row of the ranked next-hop list; `node` is `None` for padding.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankedHop {
    pub node: Option<NodeId>,
    pub c: f64,
    pub h: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Matrix {
    Confidence,
    Hops,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub(crate) struct FeatureSnapshot {
    pub c: Vec<f64>,
    pub h: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct CqTable {
    owner: NodeId,
    node_count: usize,
    lambda: f64,
    c_init: f64,
    h_init: f64,
    c: Vec<f64>,
    h: Vec<f64>,
    known: Vec<bool>,
    clamp_events: u64,
    /// Observation rows seen at the previous decision, per destination.
    pub(crate) snapshots: HashMap<NodeId, FeatureSnapshot>,
}

impl CqTable {
    pub fn new(owner: NodeId, node_count: usize, lambda: f64, c_init: f64, h_init: f64) -> Self {
        assert!(owner.index() < node_count);
        let cells = node_count * node_count;
        Self {
            owner,
            node_count,
            lambda,
            c_init,
            h_init,
            c: vec![c_init; cells],
            h: vec![h_init; cells],
            known: vec![false; cells],
            clamp_events: 0,
            snapshots: HashMap::new(),
        }
    }

    pub fn from_config(owner: NodeId, node_count: usize, cfg: &CqConfig, h_cap: f64) -> Self {
        Self::new(
            owner,
            node_count,
            cfg.lambda,
            cfg.c_init,
            cfg.h_init.unwrap_or(h_cap),
        )
    }

    pub fn owner(&self) -> NodeId {
        self.owner
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn init_values(&self) -> (f64, f64) {
        (self.c_init, self.h_init)
    }

    /// Number of times an update had to be pulled back into range.
    pub fn clamp_events(&self) -> u64 {
        self.clamp_events
    }

    fn cell(&self, j: NodeId, d: NodeId) -> usize {
        debug_assert!(j != self.owner && d != self.owner, "no entry for the owner");
        debug_assert!(j.index() < self.node_count && d.index() < self.node_count);
        j.index() * self.node_count + d.index()
    }

    pub fn c(&self, j: NodeId, d: NodeId) -> f64 {
        self.c[self.cell(j, d)]
    }

    pub fn h(&self, j: NodeId, d: NodeId) -> f64 {
        self.h[self.cell(j, d)]
    }

    pub fn is_known(&self, j: NodeId, d: NodeId) -> bool {
        self.known[self.cell(j, d)]
    }

    /// Route uncertainty weighted by distance, `h·(1−c)`.
    pub fn route_cost(&self, j: NodeId, d: NodeId) -> f64 {
        let idx = self.cell(j, d);
        self.h[idx] * (1.0 - self.c[idx])
    }

    /// Every node other than the owner, ascending.
    pub fn neighbors(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.node_count)
            .map(NodeId::from)
            .filter(move |&j| j != self.owner)
    }

    /// Overwrite an entry directly. Intended for tests and scenario setup.
    pub fn set(&mut self, j: NodeId, d: NodeId, c: f64, h: f64) {
        let idx = self.cell(j, d);
        self.c[idx] = c;
        self.h[idx] = h;
        self.known[idx] = true;
    }

    /// `argmin_j h(i,j,d)·(1−c(i,j,d))` over `candidates`, lowest id on ties.
    pub fn best_next_hop<I>(&self, d: NodeId, candidates: I) -> Option<NodeId>
    where
        I: IntoIterator<Item = NodeId>,
    {
        let mut best: Option<(f64, NodeId)> = None;
        for j in candidates {
            if j == self.owner || j.index() >= self.node_count {
                continue;
            }
            let key = self.route_cost(j, d);
            let better = match best {
                None => true,
                Some((bk, bj)) => key < bk || (key == bk && j < bj),
            };
            if better {
                best = Some((key, j));
            }
        }
        best.map(|(_, j)| j)
    }

    /// ACK payload this node returns for a packet bound to `d`.
    pub fn make_ack<I>(&self, d: NodeId, candidates: I, is_destination: bool) -> AckValues
    where
        I: IntoIterator<Item = NodeId>,
    {
        if is_destination {
            return AckValues::DESTINATION;
        }
        match self.best_next_hop(d, candidates) {
            Some(k) => AckValues {
                c_ack: self.c(k, d),
                h_ack: 1.0 + self.h(k, d),
            },
            None => AckValues {
                c_ack: self.c_init,
                h_ack: 1.0 + self.h_init,
            },
        }
    }

    pub fn update_on_ack(&mut self, j: NodeId, d: NodeId, ack: AckValues) {
        let idx = self.cell(j, d);
        let c_t = self.c[idx];
        let h_t = self.h[idx];
        let alpha = ack.c_ack.max(1.0 - c_t);
        let h_next = (1.0 - alpha) * h_t + alpha * ack.h_ack;
        let c_next = (1.0 - self.lambda) * c_t + self.lambda * ack.c_ack;
        self.c[idx] = self.clamp_c(c_next);
        self.h[idx] = self.clamp_h(h_next);
        self.known[idx] = true;
    }

    /// No ACK came back: confidence decays, the hop estimate is left alone.
    pub fn update_on_failure(&mut self, j: NodeId, d: NodeId) {
        let idx = self.cell(j, d);
        let c_next = (1.0 - self.lambda) * self.c[idx];
        self.c[idx] = self.clamp_c(c_next);
        self.known[idx] = true;
    }

    fn clamp_c(&mut self, value: f64) -> f64 {
        if (0.0..=1.0).contains(&value) {
            value
        } else {
            self.clamp_events += 1;
            value.clamp(0.0, 1.0)
        }
    }

    fn clamp_h(&mut self, value: f64) -> f64 {
        if value >= 1.0 {
            value
        } else {
            self.clamp_events += 1;
            1.0
        }
    }

    /// The `k` best known next hops toward `d`, ascending by `h·(1−c)` with
    /// ties on node id, padded with initialization rows up to exactly `k`.
    pub fn top_k(&self, d: NodeId, k: usize) -> Vec<RankedHop> {
        let mut rows: Vec<(f64, NodeId)> = self
            .neighbors()
            .filter(|&j| self.is_known(j, d))
            .map(|j| (self.route_cost(j, d), j))
            .collect();
        rows.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut out: Vec<RankedHop> = rows
            .into_iter()
            .take(k)
            .map(|(_, j)| RankedHop {
                node: Some(j),
                c: self.c(j, d),
                h: self.h(j, d),
            })
            .collect();
        out.resize(
            k,
            RankedHop {
                node: None,
                c: self.c_init,
                h: self.h_init,
            },
        );
        out
    }

    /// Dump one matrix as CSV: one row per next hop, one column per destination.
    pub fn write_csv<W: io::Write>(&self, writer: W, matrix: Matrix) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        let mut header = vec!["next_hop".to_string()];
        header.extend(self.neighbors().map(|d| format!("d{d}")));
        out.write_record(&header)?;
        for j in self.neighbors() {
            let mut row = vec![j.to_string()];
            for d in self.neighbors() {
                let v = match matrix {
                    Matrix::Confidence => self.c(j, d),
                    Matrix::Hops => self.h(j, d),
                };
                row.push(v.to_string());
            }
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }
}

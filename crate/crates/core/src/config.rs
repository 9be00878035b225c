//! Scenario configuration (JSON, SI units) and its validation.

use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::ChannelConfig;
use crate::cqtable::CqConfig;
use crate::engine::RewardConfig;
use crate::mobility::{MobilityConfig, RegionLayout};
use crate::packet::{FlowSpec, NodeId};
use crate::policy::{Observation, PolicyKind, PolicySpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeOrder {
    /// Nodes act in ascending id order every slot.
    #[default]
    Ascending,
    /// A fresh seeded permutation every slot.
    Shuffled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineOptions {
    pub node_order: NodeOrder,
    /// ACK a copy that was already forwarded earlier (seen but no longer
    /// queued).
    pub ack_stale_duplicates: bool,
    /// Hop limit. Defaults to four times the node count.
    pub ttl_hops: Option<usize>,
}

impl Default for EngineOptions {
    fn default() -> Self {
        Self {
            node_order: NodeOrder::Ascending,
            ack_stale_duplicates: true,
            ttl_hops: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub node_count: usize,
    pub area_width_m: f64,
    pub area_height_m: f64,
    pub radio_range_m: f64,
    /// One packet duration.
    pub slot_seconds: f64,
    /// Slots during which traffic is generated.
    pub traffic_slots: u64,
    /// Extra slots allowed to drain queues. Defaults to ten times the node
    /// count.
    pub drain_slot_cap: Option<u64>,
    pub flows: Vec<FlowSpec>,
    pub mobility: MobilityConfig,
    pub channel: ChannelConfig,
    pub cq: CqConfig,
    pub policy: PolicySpec,
    pub reward: RewardConfig,
    pub engine: EngineOptions,
    pub seed: u64,
    /// Number of ranked next hops fed to the policy.
    pub k_neighbors: usize,
    /// Hop-estimate normalization cap.
    pub h_cap: f64,
    /// Fixed initial positions `[x, y]`, one per node.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub positions: Option<Vec<[f64; 2]>>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self::benchmark()
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid configuration: {0}")]
    Invalid(ValidationReport),
    #[error("malformed configuration: {0}")]
    Json(#[from] serde_json::Error),
    #[error("cannot read configuration: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Mobility(#[from] crate::mobility::MobilityError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn mentions(&self, field: &str) -> bool {
        self.violations.iter().any(|v| v.field == field)
    }

    fn check(&mut self, ok: bool, field: &str, message: impl Into<String>) {
        if !ok {
            self.violations.push(Violation {
                field: field.to_string(),
                message: message.into(),
            });
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .violations
            .iter()
            .map(|v| format!("{}: {}", v.field, v.message))
            .collect();
        f.write_str(&parts.join("; "))
    }
}

impl SimConfig {
    /// Twelve nodes in an 800 m × 300 m field with 150 m radios, one flow
    /// from node 0 to the last node, 3000 traffic slots.
    pub fn benchmark() -> Self {
        let node_count = 12;
        Self {
            node_count,
            area_width_m: 800.0,
            area_height_m: 300.0,
            radio_range_m: 150.0,
            slot_seconds: 0.05,
            traffic_slots: 3000,
            drain_slot_cap: None,
            flows: Self::default_flows(node_count, 1, 1.0),
            mobility: MobilityConfig::default(),
            channel: ChannelConfig::default(),
            cq: CqConfig::default(),
            policy: PolicySpec::default(),
            reward: RewardConfig::default(),
            engine: EngineOptions::default(),
            seed: 0,
            k_neighbors: 4,
            h_cap: 32.0,
            positions: None,
        }
    }

    /// Flow `f` runs from node `f` to node `n−1−f`.
    pub fn default_flows(node_count: usize, count: usize, packets_per_slot: f64) -> Vec<FlowSpec> {
        (0..count)
            .map(|f| FlowSpec {
                source: NodeId::from(f),
                destination: NodeId::from(node_count.saturating_sub(1 + f)),
                packets_per_slot,
            })
            .collect()
    }

    pub fn from_json_value(value: serde_json::Value) -> Result<Self, ConfigError> {
        let has_flows = value.get("flows").is_some();
        let mut cfg: SimConfig = serde_json::from_value(value)?;
        if !has_flows {
            cfg.flows = Self::default_flows(cfg.node_count, 1, 1.0);
        }
        Ok(cfg)
    }

    pub fn from_json_str(text: &str) -> Result<Self, ConfigError> {
        Self::from_json_value(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::from_json_str(&fs::read_to_string(path)?)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("config always serializes")
    }

    fn flow_rate(&self) -> f64 {
        self.flows.first().map_or(1.0, |f| f.packets_per_slot)
    }

    /// Resize the network, regenerating flows in the default pattern.
    pub fn with_node_count(mut self, node_count: usize) -> Self {
        let flows = self.flows.len().max(1);
        let rate = self.flow_rate();
        self.node_count = node_count;
        self.flows = Self::default_flows(node_count, flows, rate);
        self.positions = None;
        self
    }

    pub fn with_flow_count(mut self, flows: usize) -> Self {
        let rate = self.flow_rate();
        self.flows = Self::default_flows(self.node_count, flows, rate);
        self
    }

    /// Multiply the dynamic level (mean speed, and an explicit speed sigma).
    pub fn with_dynamic_scale(mut self, scale: f64) -> Self {
        self.mobility.mean_speed_mps *= scale;
        if let Some(s) = self.mobility.speed_sigma.as_mut() {
            *s *= scale;
        }
        self
    }

    pub fn drain_cap(&self) -> u64 {
        self.drain_slot_cap.unwrap_or(10 * self.node_count as u64)
    }

    pub fn ttl_hops(&self) -> usize {
        self.engine.ttl_hops.unwrap_or(4 * self.node_count)
    }

    pub fn h_init(&self) -> f64 {
        self.cq.h_init.unwrap_or(self.h_cap)
    }

    pub fn validate(&self) -> ValidationReport {
        validate_config(self)
    }
}

pub fn validate_config(cfg: &SimConfig) -> ValidationReport {
    let mut r = ValidationReport::default();
    let n = cfg.node_count;
    r.check(
        n >= 2,
        "node_count",
        format!("node_count must be ≥ 2 (got {n})"),
    );
    r.check(
        cfg.area_width_m > 0.0 && cfg.area_height_m > 0.0,
        "area",
        "area dimensions must be positive",
    );
    r.check(
        cfg.radio_range_m > 0.0,
        "radio_range_m",
        "radio_range_m must be > 0",
    );
    r.check(
        cfg.slot_seconds > 0.0,
        "slot_seconds",
        "slot_seconds must be > 0",
    );
    r.check(
        cfg.traffic_slots >= 1,
        "traffic_slots",
        "traffic_slots must be ≥ 1",
    );
    r.check(
        cfg.k_neighbors >= 1,
        "k_neighbors",
        "k_neighbors must be ≥ 1",
    );
    r.check(cfg.h_cap >= 1.0, "h_cap", "h_cap must be ≥ 1");

    for (idx, flow) in cfg.flows.iter().enumerate() {
        r.check(
            flow.source != flow.destination,
            "flows",
            format!("flow {idx}: source equals destination"),
        );
        r.check(
            flow.source.index() < n && flow.destination.index() < n,
            "flows",
            format!("flow {idx}: node id out of range"),
        );
        r.check(
            flow.packets_per_slot >= 0.0 && flow.packets_per_slot.is_finite(),
            "flows",
            format!("flow {idx}: packets_per_slot must be a finite value ≥ 0"),
        );
    }

    let m = &cfg.mobility;
    r.check(
        (0.0..=1.0).contains(&m.mu),
        "mobility.mu",
        "mu must lie in [0, 1]",
    );
    r.check(
        m.mean_speed_mps >= 0.0,
        "mobility.mean_speed_mps",
        "mean speed must be ≥ 0",
    );
    r.check(
        m.speed_sigma() >= 0.0 && m.angle_sigma() >= 0.0,
        "mobility.sigma",
        "sigmas must be ≥ 0",
    );
    r.check(
        (0.0..0.5).contains(&m.region_overlap_frac),
        "mobility.region_overlap_frac",
        "region overlap must lie in [0, 0.5)",
    );
    r.check(
        m.update_seconds.is_none_or(|s| s > 0.0),
        "mobility.update_seconds",
        "update_seconds must be > 0",
    );
    r.check(
        m.region_layout != RegionLayout::Benchmark5 || n >= 5,
        "mobility.region_layout",
        "benchmark_5 layout needs at least 5 nodes",
    );

    let ch = cfg.channel.resolve(cfg.radio_range_m);
    r.check(ch.range_m > 0.0, "channel.range_m", "range must be > 0");
    r.check(
        ch.falloff_m > 0.0,
        "channel.falloff_m",
        "falloff must be > 0",
    );

    r.check(
        cfg.cq.lambda > 0.0 && cfg.cq.lambda < 1.0,
        "cq.lambda",
        "lambda must lie in (0, 1)",
    );
    r.check(
        (0.0..=1.0).contains(&cfg.cq.c_init),
        "cq.c_init",
        "c_init must lie in [0, 1]",
    );
    r.check(cfg.h_init() >= 1.0, "cq.h_init", "h_init must be ≥ 1");

    let p = &cfg.policy;
    r.check(
        (0.0..1.0).contains(&p.epsilon),
        "policy.epsilon",
        "epsilon must lie in [0, 1)",
    );
    if p.kind == PolicyKind::Neural {
        match &p.weights {
            None => r.check(false, "policy.weights", "neural policy requires weights"),
            Some(w) => r.check(
                w.input_width() == Observation::width(cfg.k_neighbors),
                "policy.weights",
                format!(
                    "network input {} does not match 4K+2 = {}",
                    w.input_width(),
                    Observation::width(cfg.k_neighbors)
                ),
            ),
        }
    }

    let rw = &cfg.reward;
    r.check(
        [rw.w1, rw.w2, rw.w3]
            .iter()
            .all(|w| w.is_finite() && *w >= 0.0),
        "reward",
        "reward weights must be finite and ≥ 0",
    );
    r.check(
        (0.0..1.0).contains(&rw.gamma),
        "reward.gamma",
        "gamma must lie in [0, 1)",
    );

    if let Some(pos) = &cfg.positions {
        r.check(
            pos.len() == n,
            "positions",
            "one position per node required",
        );
        r.check(
            pos.iter().all(|[x, y]| {
                (0.0..=cfg.area_width_m).contains(x) && (0.0..=cfg.area_height_m).contains(y)
            }),
            "positions",
            "positions must lie inside the area",
        );
    }
    r
}

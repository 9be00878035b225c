//! Packet-level simulator for confidence-based routing in mobile ad-hoc
//! networks.
//!
//! Nodes keep per-destination confidence and hop estimates for every
//! possible next hop, refresh them from values piggybacked on ACKs, and for
//! every packet choose between unicasting to the best next hop and
//! broadcasting to all neighbors. The choice is made by the classic CQ+ rule,
//! its deterministic threshold variant, or a small feed-forward network that
//! can be trained externally through [`envserver`].

pub mod channel;
pub mod config;
pub mod cqtable;
pub mod engine;
pub mod envserver;
pub mod experiment;
pub mod mobility;
pub mod packet;
pub mod policy;
pub mod rng;

pub use channel::{link_success_prob, transmit, Channel, ChannelConfig, TxMode, TxOutcome};
pub use config::{
    validate_config, ConfigError, EngineOptions, NodeOrder, SimConfig, ValidationReport, Violation,
};
pub use cqtable::{AckValues, CqConfig, CqTable, Matrix, RankedHop};
pub use engine::{
    compute_reward1, compute_reward2, run_episode, run_episode_logged, summarize, Decision,
    EngineError, Episode, EpisodeMetrics, EpisodeOutcome, Reception, RewardConfig, RewardKind,
    RunLogs, SlotEvents, SlotReport, Summary,
};
pub use mobility::{MobilityConfig, MobilityModel, NodeKinematics, RegionLayout};
pub use packet::{ArrivalMode, FlowSpec, NodeId, Packet, PacketId};
pub use policy::{
    build_observation, decide_cq_plus, decide_cq_plus_hard, decide_neural, forward, Action,
    Observation, PolicyKind, PolicySpec, PolicyWeights, PrevActionSource, WeightsError,
};
pub use rng::SimRng;

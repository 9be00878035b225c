//! Slot-by-slot episode loop.
//!
//! Each slot runs in three phases:
//!
//! 1. mobility tick and traffic generation;
//! 2. every node with a non-empty queue pops its head packet and a decision
//!    request (next hop, its confidence, observation) is formed against the
//!    tables as they stand at the start of the slot;
//! 3. once actions are known, transmissions are resolved in decision order:
//!    receptions, ACKs, table updates, rewards and metrics.
//!
//! Phase 3 is driven either by the configured policy ([`Episode::native_actions`])
//! or by an external agent through [`Episode::apply`].

mod metrics;
mod reward;

use std::collections::{HashMap, HashSet, VecDeque};
use std::io::{self, Write};

use serde::Serialize;
use thiserror::Error;

use crate::channel::{transmit, Channel, TxMode};
use crate::config::{ConfigError, NodeOrder, SimConfig};
use crate::cqtable::{AckValues, CqTable};
use crate::mobility::Mobility;
use crate::packet::{ArrivalMode, NodeId, Packet, PacketId};
use crate::policy::{build_observation, Action, Observation, PrevActionSource, WeightsError};
use crate::rng::SimRng;

pub use metrics::{summarize, EpisodeMetrics, Summary};
pub use reward::{compute_reward1, compute_reward2, RewardConfig, RewardKind, SlotEvents};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Policy(#[from] WeightsError),
    #[error("no decisions are pending")]
    NotAwaitingActions,
    #[error("missing action for node {0}")]
    MissingAction(NodeId),
    #[error("unexpected action for node {0}")]
    UnexpectedAction(NodeId),
    #[error("duplicate action for node {0}")]
    DuplicateAction(NodeId),
    #[error("log write failed: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone)]
struct Queued {
    packet: Packet,
    arrival: ArrivalMode,
    upstream_action: Option<Action>,
}

#[derive(Debug, Clone)]
pub struct NodeState {
    pub id: NodeId,
    queue: VecDeque<Queued>,
    queued_ids: HashSet<PacketId>,
    seen: HashSet<PacketId>,
    pub table: CqTable,
    last_action: HashMap<NodeId, Action>,
}

impl NodeState {
    fn new(id: NodeId, table: CqTable) -> Self {
        Self {
            id,
            queue: VecDeque::new(),
            queued_ids: HashSet::new(),
            seen: HashSet::new(),
            table,
            last_action: HashMap::new(),
        }
    }

    pub fn queue_len(&self) -> usize {
        self.queue.len()
    }

    pub fn has_seen(&self, id: PacketId) -> bool {
        self.seen.contains(&id)
    }

    fn push(&mut self, item: Queued) {
        self.queued_ids.insert(item.packet.id);
        self.seen.insert(item.packet.id);
        self.queue.push_back(item);
    }

    fn pop(&mut self) -> Option<Queued> {
        let item = self.queue.pop_front()?;
        self.queued_ids.remove(&item.packet.id);
        Some(item)
    }
}

/// Result of handing a successfully decoded packet to a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reception {
    /// First copy at the destination.
    Deliver,
    /// Another copy of an already delivered packet at the destination.
    DeliverDuplicate,
    EnqueueAck,
    /// Dropped as a duplicate but still acknowledged.
    DropAck,
    /// Dropped without an ACK (loop, or a suppressed stale duplicate).
    DropSilent,
}

impl Reception {
    pub fn acks(self) -> bool {
        !matches!(self, Reception::DropSilent)
    }
}

/// One pending routing decision.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub node: NodeId,
    pub destination: NodeId,
    pub next_hop: NodeId,
    pub c_best: f64,
    pub observation: Observation,
}

#[derive(Debug, Clone, Copy, Default)]
struct Fate {
    live: u32,
    delivered: bool,
}

/// What one call to [`Episode::apply`] produced.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotReport {
    pub slot: u64,
    /// Reward paid to each node that acted this slot, ascending by node.
    pub rewards: Vec<(NodeId, f64)>,
    pub done: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Transition<'a> {
    pub slot: u64,
    pub node: u32,
    pub observation: &'a [f64],
    pub action: u8,
    pub reward: f64,
    pub done: bool,
}

pub struct Episode {
    cfg: SimConfig,
    channel: Channel,
    mobility: Mobility,
    nodes: Vec<NodeState>,
    traffic_rng: SimRng,
    channel_rng: SimRng,
    policy_rng: SimRng,
    order_rng: SimRng,
    slot: u64,
    next_packet: u64,
    fates: Vec<Fate>,
    metrics: EpisodeMetrics,
    pending: Vec<(Decision, Queued)>,
    reward_pending: Vec<f64>,
    reward_totals: Vec<f64>,
    final_payouts: Vec<(NodeId, f64)>,
    finished: bool,
}

impl Episode {
    pub fn new(cfg: SimConfig) -> Result<Self, EngineError> {
        let report = cfg.validate();
        if !report.is_ok() {
            return Err(ConfigError::Invalid(report).into());
        }
        let root = SimRng::new(cfg.seed);
        let mobility = Mobility::new(&cfg, root.fork("mobility")).map_err(ConfigError::from)?;
        let n = cfg.node_count;
        let nodes = (0..n)
            .map(|i| {
                let id = NodeId::from(i);
                NodeState::new(id, CqTable::from_config(id, n, &cfg.cq, cfg.h_cap))
            })
            .collect();
        Ok(Self {
            channel: cfg.channel.resolve(cfg.radio_range_m),
            mobility,
            nodes,
            traffic_rng: root.fork("traffic"),
            channel_rng: root.fork("channel"),
            policy_rng: root.fork("policy"),
            order_rng: root.fork("order"),
            slot: 0,
            next_packet: 0,
            fates: Vec::new(),
            metrics: EpisodeMetrics::new(n),
            pending: Vec::new(),
            reward_pending: vec![0.0; n],
            reward_totals: vec![0.0; n],
            final_payouts: Vec::new(),
            finished: false,
            cfg,
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    /// Last slot that was started.
    pub fn slot(&self) -> u64 {
        self.slot
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    pub fn metrics(&self) -> &EpisodeMetrics {
        &self.metrics
    }

    pub fn node(&self, id: NodeId) -> &NodeState {
        &self.nodes[id.index()]
    }

    pub fn table(&self, id: NodeId) -> &CqTable {
        &self.nodes[id.index()].table
    }

    pub fn mobility(&self) -> &Mobility {
        &self.mobility
    }

    /// Rewards paid so far, per node, accumulated in payout order.
    pub fn reward_totals(&self) -> &[f64] {
        &self.reward_totals
    }

    /// Rewards still owed to nodes that have not acted since earning them.
    pub fn unpaid_rewards(&self) -> &[f64] {
        &self.reward_pending
    }

    /// Payouts made when the episode ended to nodes that did not act in the
    /// final slot. Drained by the call.
    pub fn take_final_payouts(&mut self) -> Vec<(NodeId, f64)> {
        std::mem::take(&mut self.final_payouts)
    }

    /// Pending decisions, advancing through idle slots as needed. Empty only
    /// when the episode is over.
    pub fn next_decisions(&mut self) -> Vec<Decision> {
        self.next_decisions_logged::<dyn Write>(None)
            .expect("no trajectory sink, no io error")
    }

    /// Same as [`Episode::next_decisions`], appending `slot,node,x,y,speed`
    /// rows for every simulated slot to `trajectory`.
    pub fn next_decisions_logged<W: Write + ?Sized>(
        &mut self,
        mut trajectory: Option<&mut W>,
    ) -> io::Result<Vec<Decision>> {
        while self.pending.is_empty() && !self.finished {
            self.begin_slot();
            if let Some(out) = trajectory.as_deref_mut() {
                self.mobility.log_positions(self.slot, out)?;
            }
            if self.pending.is_empty() {
                self.end_slot();
            }
        }
        Ok(self.pending.iter().map(|(d, _)| d.clone()).collect())
    }

    fn begin_slot(&mut self) {
        self.slot += 1;
        self.mobility.advance_slot();
        if self.slot <= self.cfg.traffic_slots {
            self.generate_traffic();
        }
        self.collect_decisions();
    }

    fn generate_traffic(&mut self) {
        for (flow_idx, flow) in self.cfg.flows.iter().enumerate() {
            let rate = flow.packets_per_slot;
            let mut count = rate.floor() as u64;
            let frac = rate - rate.floor();
            if frac > 0.0 && self.traffic_rng.chance(frac) {
                count += 1;
            }
            for _ in 0..count {
                let id = PacketId(self.next_packet);
                self.next_packet += 1;
                self.fates.push(Fate {
                    live: 1,
                    delivered: false,
                });
                self.metrics.generated += 1;
                let packet = Packet::new(id, flow_idx, flow, self.slot);
                self.nodes[flow.source.index()].push(Queued {
                    packet,
                    arrival: ArrivalMode::Local,
                    upstream_action: None,
                });
            }
        }
    }

    fn node_order(&mut self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.nodes.len()).collect();
        if self.cfg.engine.node_order == NodeOrder::Shuffled {
            for i in (1..order.len()).rev() {
                let j = (self.order_rng.next_u64() % (i as u64 + 1)) as usize;
                order.swap(i, j);
            }
        }
        order
    }

    fn collect_decisions(&mut self) {
        let ttl = self.cfg.ttl_hops();
        let k = self.cfg.k_neighbors;
        let h_cap = self.cfg.h_cap;
        let prev_source = self.cfg.policy.prev_action;
        for idx in self.node_order() {
            let item = loop {
                match self.nodes[idx].pop() {
                    None => break None,
                    Some(item) if item.packet.hop_count() >= ttl => {
                        self.release_copy(item.packet.id);
                    }
                    Some(item) => break Some(item),
                }
            };
            let Some(item) = item else { continue };
            let node = &mut self.nodes[idx];
            let d = item.packet.destination;
            let next_hop = node
                .table
                .best_next_hop(d, node.table.neighbors())
                .expect("at least two nodes");
            let c_best = node.table.c(next_hop, d);
            let prev_action = match prev_source {
                PrevActionSource::Own => node.last_action.get(&d).copied(),
                PrevActionSource::Upstream => item.upstream_action,
            };
            let observation =
                build_observation(&mut node.table, d, k, h_cap, prev_action, item.arrival);
            self.pending.push((
                Decision {
                    node: node.id,
                    destination: d,
                    next_hop,
                    c_best,
                    observation,
                },
                item,
            ));
        }
    }

    /// Actions chosen by the configured policy for the pending decisions.
    pub fn native_actions(&mut self) -> Result<Vec<(NodeId, Action)>, EngineError> {
        let policy = &self.cfg.policy;
        let rng = &mut self.policy_rng;
        self.pending
            .iter()
            .map(|(d, _)| {
                policy
                    .decide(d.c_best, &d.observation, rng)
                    .map(|a| (d.node, a))
                    .map_err(EngineError::from)
            })
            .collect()
    }

    fn check_actions(
        &self,
        actions: &[(NodeId, Action)],
    ) -> Result<HashMap<NodeId, Action>, EngineError> {
        if self.pending.is_empty() {
            return Err(EngineError::NotAwaitingActions);
        }
        let mut map = HashMap::with_capacity(actions.len());
        for &(node, action) in actions {
            if !self.pending.iter().any(|(d, _)| d.node == node) {
                return Err(EngineError::UnexpectedAction(node));
            }
            if map.insert(node, action).is_some() {
                return Err(EngineError::DuplicateAction(node));
            }
        }
        if let Some((d, _)) = self
            .pending
            .iter()
            .find(|(d, _)| !map.contains_key(&d.node))
        {
            return Err(EngineError::MissingAction(d.node));
        }
        Ok(map)
    }

    /// Resolve the current slot's transmissions. On error nothing changes.
    pub fn apply(&mut self, actions: &[(NodeId, Action)]) -> Result<SlotReport, EngineError> {
        let chosen = self.check_actions(actions)?;
        let n = self.nodes.len();
        let mut events = vec![SlotEvents::default(); n];
        let mut slot_reward1 = vec![0.0; n];
        let pending = std::mem::take(&mut self.pending);
        let mut acted = Vec::with_capacity(pending.len());
        for (decision, item) in pending {
            let action = chosen[&decision.node];
            acted.push(decision.node);
            slot_reward1[decision.node.index()] +=
                compute_reward1(action, decision.c_best, self.cfg.policy.epsilon);
            self.transmit_one(&decision, item, action, &mut events);
        }

        let reward_cfg = self.cfg.reward.clone();
        for i in 0..n {
            let r = match reward_cfg.kind {
                RewardKind::Reward1 => slot_reward1[i],
                RewardKind::Reward2 => compute_reward2(&events[i], &reward_cfg, n),
            };
            self.reward_pending[i] += r;
        }
        acted.sort();
        let rewards = acted
            .into_iter()
            .map(|node| (node, self.pay(node)))
            .collect();
        self.end_slot();
        Ok(SlotReport {
            slot: self.slot,
            rewards,
            done: self.finished,
        })
    }

    fn pay(&mut self, node: NodeId) -> f64 {
        let amount = std::mem::take(&mut self.reward_pending[node.index()]);
        self.reward_totals[node.index()] += amount;
        amount
    }

    fn transmit_one(
        &mut self,
        decision: &Decision,
        item: Queued,
        action: Action,
        events: &mut [SlotEvents],
    ) {
        let sender = decision.node;
        let d = decision.destination;
        self.nodes[sender.index()].last_action.insert(d, action);
        self.metrics.transmissions += 1;
        match action {
            Action::Broadcast => self.metrics.broadcasts += 1,
            Action::Unicast => self.metrics.unicasts += 1,
        }

        let mode = action.mode();
        let mobility = &self.mobility;
        let outcome = transmit(
            sender,
            mode,
            Some(decision.next_hop),
            self.nodes.len(),
            |j| mobility.distance(sender, j),
            &self.channel,
            &mut self.channel_rng,
        );

        let mut acks: Vec<(NodeId, AckValues)> = Vec::new();
        for &r in &outcome.receivers {
            let reception = self.receive(r, &item.packet, mode, action, events);
            if reception.acks() && outcome.acks.contains(&r) {
                let ack = if r == d {
                    AckValues::DESTINATION
                } else {
                    let table = &self.nodes[r.index()].table;
                    table.make_ack(d, table.neighbors(), false)
                };
                acks.push((r, ack));
            }
        }

        let table = &mut self.nodes[sender.index()].table;
        if acks.is_empty() {
            table.update_on_failure(decision.next_hop, d);
        } else {
            for &(r, ack) in &acks {
                table.update_on_ack(r, d, ack);
            }
        }
        self.metrics.acks_returned += acks.len() as u64;
        events[sender.index()].transmitted = true;
        events[sender.index()].acks += acks.len() as u32;
        self.release_copy(item.packet.id);
    }

    /// Handle a decoded copy of `packet` at `r`.
    fn receive(
        &mut self,
        r: NodeId,
        packet: &Packet,
        mode: TxMode,
        action: Action,
        events: &mut [SlotEvents],
    ) -> Reception {
        let fate = &mut self.fates[packet.id.0 as usize];
        if r == packet.destination {
            if fate.delivered {
                self.metrics.duplicates_at_destination += 1;
                return Reception::DeliverDuplicate;
            }
            fate.delivered = true;
            self.metrics.delivered += 1;
            self.metrics.delays.push(self.slot - packet.created_slot);
            self.metrics.hops.push(packet.hop_count() as u64 + 1);
            for hop in &packet.path_trace {
                events[hop.index()].contributed_delivery = true;
            }
            return Reception::Deliver;
        }
        if packet.visited(r) {
            return Reception::DropSilent;
        }
        let node = &mut self.nodes[r.index()];
        if node.queued_ids.contains(&packet.id) {
            return Reception::DropAck;
        }
        if node.seen.contains(&packet.id) {
            return if self.cfg.engine.ack_stale_duplicates {
                Reception::DropAck
            } else {
                Reception::DropSilent
            };
        }
        node.push(Queued {
            packet: packet.relayed_to(r),
            arrival: match mode {
                TxMode::Unicast => ArrivalMode::Unicast,
                TxMode::Broadcast => ArrivalMode::Broadcast,
            },
            upstream_action: Some(action),
        });
        fate.live += 1;
        Reception::EnqueueAck
    }

    fn release_copy(&mut self, id: PacketId) {
        let fate = &mut self.fates[id.0 as usize];
        fate.live -= 1;
        if fate.live == 0 && !fate.delivered {
            self.metrics.dropped += 1;
        }
    }

    fn end_slot(&mut self) {
        self.metrics.slots = self.slot;
        if self.slot < self.cfg.traffic_slots {
            return;
        }
        let idle = self.nodes.iter().all(|n| n.queue.is_empty());
        let capped = self.slot >= self.cfg.traffic_slots + self.cfg.drain_cap();
        if idle || capped {
            self.finish();
        }
    }

    fn finish(&mut self) {
        self.finished = true;
        self.metrics.residual = self
            .fates
            .iter()
            .filter(|f| f.live > 0 && !f.delivered)
            .count() as u64;
        for i in 0..self.nodes.len() {
            if self.reward_pending[i] != 0.0 {
                let node = NodeId::from(i);
                let amount = self.pay(node);
                self.final_payouts.push((node, amount));
            }
        }
    }
}

/// Final state of a completed episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeOutcome {
    pub metrics: EpisodeMetrics,
    pub reward_totals: Vec<f64>,
}

/// Optional sinks for a native run.
#[derive(Default)]
pub struct RunLogs<'a> {
    /// JSON lines: slot, node, observation, action, reward, done.
    pub transitions: Option<&'a mut dyn Write>,
    /// CSV rows: slot, node, x, y, speed.
    pub trajectory: Option<&'a mut dyn Write>,
}

/// Run a full episode with the configured policy.
pub fn run_episode(cfg: SimConfig) -> Result<EpisodeOutcome, EngineError> {
    run_episode_logged(cfg, RunLogs::default())
}

pub fn run_episode_logged(
    cfg: SimConfig,
    mut logs: RunLogs<'_>,
) -> Result<EpisodeOutcome, EngineError> {
    let mut episode = Episode::new(cfg)?;
    loop {
        let decisions = episode.next_decisions_logged(logs.trajectory.as_deref_mut())?;
        if decisions.is_empty() {
            break;
        }
        let actions = episode.native_actions()?;
        let report = episode.apply(&actions)?;
        if let Some(out) = logs.transitions.as_deref_mut() {
            for ((decision, (_, action)), (_, reward)) in decisions
                .iter()
                .zip(&actions)
                .zip(sorted_rewards(&decisions, &report))
            {
                let features = decision.observation.features();
                let line = Transition {
                    slot: report.slot,
                    node: decision.node.0,
                    observation: &features,
                    action: action.index(),
                    reward,
                    done: report.done,
                };
                serde_json::to_writer(&mut *out, &line).map_err(io::Error::other)?;
                out.write_all(b"\n")?;
            }
        }
    }
    Ok(EpisodeOutcome {
        metrics: episode.metrics().clone(),
        reward_totals: episode.reward_totals().to_vec(),
    })
}

/// Rewards from `report` lined up with `decisions` order.
fn sorted_rewards(decisions: &[Decision], report: &SlotReport) -> Vec<(NodeId, f64)> {
    decisions
        .iter()
        .map(|d| {
            let r = report
                .rewards
                .iter()
                .find(|(n, _)| *n == d.node)
                .map_or(0.0, |(_, r)| *r);
            (d.node, r)
        })
        .collect()
}

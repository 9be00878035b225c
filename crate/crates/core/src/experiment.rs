//! Batch runs and parameter sweeps with CSV output.
//!
//! Every episode's seed is derived from the base seed, the cell parameters
//! (node count, flow count, dynamic scale) and the episode index. The policy
//! is deliberately left out so that different policies face the same network
//! realizations, and a sweep cell reproduces a plain run with the same
//! parameters.

use std::io::{self, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;

use serde::Serialize;

use crate::config::{ConfigError, SimConfig};
use crate::engine::{run_episode, run_episode_logged, EngineError, EpisodeMetrics, RunLogs};
use crate::policy::{PolicySpec, PolicyWeights, WeightsError};
use crate::rng::derive_seed;

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Weights(#[from] WeightsError),
    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] io::Error),
}

/// Policy names accepted on the command line.
pub const POLICY_NAMES: [&str; 3] = ["cq+", "hard-cq+", "neural"];

/// Build a policy from its command-line name. `neural` needs `weights`.
pub fn policy_from_name(
    name: &str,
    epsilon: f64,
    weights: Option<&Path>,
) -> Result<PolicySpec, ExperimentError> {
    match name {
        "cq+" => Ok(PolicySpec::cq_plus(epsilon)),
        "hard-cq+" => Ok(PolicySpec::cq_plus_hard(epsilon)),
        "neural" => {
            let path = weights
                .ok_or_else(|| ExperimentError::Usage("policy neural requires --weights".into()))?;
            Ok(PolicySpec::neural(
                epsilon,
                Arc::new(PolicyWeights::load(path)?),
            ))
        }
        other => Err(ExperimentError::Usage(format!(
            "unknown policy {other:?} (expected one of {})",
            POLICY_NAMES.join(", ")
        ))),
    }
}

/// One point of the experiment grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub nodes: usize,
    pub flows: usize,
    pub dynamic_scale: f64,
}

impl Cell {
    pub fn of(cfg: &SimConfig) -> Self {
        Self {
            nodes: cfg.node_count,
            flows: cfg.flows.len(),
            dynamic_scale: 1.0,
        }
    }

    /// `base` reshaped to this cell.
    pub fn apply(&self, base: &SimConfig) -> SimConfig {
        let mut cfg = base.clone();
        if self.nodes != cfg.node_count {
            cfg = cfg.with_node_count(self.nodes);
        }
        if self.flows != cfg.flows.len() {
            cfg = cfg.with_flow_count(self.flows);
        }
        if self.dynamic_scale != 1.0 {
            cfg = cfg.with_dynamic_scale(self.dynamic_scale);
        }
        cfg
    }

    pub fn episode_seed(&self, base_seed: u64, episode: usize) -> u64 {
        derive_seed(
            base_seed,
            &[
                ("nodes", self.nodes as u64),
                ("flows", self.flows as u64),
                ("dynamic", self.dynamic_scale.to_bits()),
                ("episode", episode as u64),
            ],
        )
    }
}

/// One CSV line. Episode rows leave the `_std` and `episodes` columns empty;
/// aggregate rows leave `episode` and `seed` empty and carry count totals.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Row {
    pub row_type: &'static str,
    pub policy: String,
    pub nodes: usize,
    pub flows: usize,
    pub dynamic_scale: f64,
    pub episode: Option<usize>,
    pub seed: Option<u64>,
    pub episodes: Option<usize>,
    pub goodput: Option<f64>,
    pub goodput_std: Option<f64>,
    pub normalized_overhead: Option<f64>,
    pub normalized_overhead_std: Option<f64>,
    pub broadcast_rate: Option<f64>,
    pub broadcast_rate_std: Option<f64>,
    pub mean_delay: Option<f64>,
    pub mean_delay_std: Option<f64>,
    pub mean_hops: Option<f64>,
    pub mean_hops_std: Option<f64>,
    pub generated: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub residual: u64,
    pub transmissions: u64,
    pub slots: u64,
}

impl Row {
    fn episode(policy: &str, cell: &Cell, episode: usize, seed: u64, m: &EpisodeMetrics) -> Self {
        let s = m.summarize();
        Self {
            row_type: "episode",
            policy: policy.to_string(),
            nodes: cell.nodes,
            flows: cell.flows,
            dynamic_scale: cell.dynamic_scale,
            episode: Some(episode),
            seed: Some(seed),
            episodes: None,
            goodput: Some(s.goodput),
            goodput_std: None,
            normalized_overhead: s.normalized_overhead,
            normalized_overhead_std: None,
            broadcast_rate: s.broadcast_rate,
            broadcast_rate_std: None,
            mean_delay: s.mean_delay,
            mean_delay_std: None,
            mean_hops: s.mean_hops,
            mean_hops_std: None,
            generated: m.generated,
            delivered: m.delivered,
            dropped: m.dropped,
            residual: m.residual,
            transmissions: m.transmissions,
            slots: m.slots,
        }
    }
}

/// Mean and sample standard deviation of the defined values.
fn mean_std(values: impl Iterator<Item = Option<f64>>) -> (Option<f64>, Option<f64>) {
    let xs: Vec<f64> = values.flatten().collect();
    if xs.is_empty() {
        return (None, None);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let std = (xs.len() > 1)
        .then(|| (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
    (Some(mean), std)
}

/// Summary row over episode rows of a single cell and policy.
pub fn aggregate(rows: &[Row]) -> Row {
    let first = rows.first().expect("aggregate of at least one episode");
    let (goodput, goodput_std) = mean_std(rows.iter().map(|r| r.goodput));
    let (normalized_overhead, normalized_overhead_std) =
        mean_std(rows.iter().map(|r| r.normalized_overhead));
    let (broadcast_rate, broadcast_rate_std) = mean_std(rows.iter().map(|r| r.broadcast_rate));
    let (mean_delay, mean_delay_std) = mean_std(rows.iter().map(|r| r.mean_delay));
    let (mean_hops, mean_hops_std) = mean_std(rows.iter().map(|r| r.mean_hops));
    let total = |f: fn(&Row) -> u64| rows.iter().map(f).sum();
    Row {
        row_type: "mean",
        policy: first.policy.clone(),
        nodes: first.nodes,
        flows: first.flows,
        dynamic_scale: first.dynamic_scale,
        episode: None,
        seed: None,
        episodes: Some(rows.len()),
        goodput,
        goodput_std,
        normalized_overhead,
        normalized_overhead_std,
        broadcast_rate,
        broadcast_rate_std,
        mean_delay,
        mean_delay_std,
        mean_hops,
        mean_hops_std,
        generated: total(|r| r.generated),
        delivered: total(|r| r.delivered),
        dropped: total(|r| r.dropped),
        residual: total(|r| r.residual),
        transmissions: total(|r| r.transmissions),
        slots: total(|r| r.slots),
    }
}

/// Everything needed to run a batch of episodes for one cell and policy.
#[derive(Debug, Clone)]
pub struct Batch {
    pub base: SimConfig,
    pub cell: Cell,
    pub policy_name: String,
    pub policy: PolicySpec,
    pub episodes: usize,
}

impl Batch {
    /// Config of episode `index`, seed included.
    pub fn episode_config(&self, index: usize) -> SimConfig {
        let mut cfg = self.cell.apply(&self.base);
        cfg.policy = self.policy.clone();
        cfg.seed = self.cell.episode_seed(self.base.seed, index);
        cfg
    }

    fn check(&self) -> Result<(), ExperimentError> {
        if self.episodes == 0 {
            return Err(ExperimentError::Usage("episodes must be ≥ 1".into()));
        }
        let report = self.episode_config(0).validate();
        if !report.is_ok() {
            return Err(ConfigError::Invalid(report).into());
        }
        Ok(())
    }

    /// Episode rows in index order. Runs on all cores unless logs are
    /// requested, in which case episodes run one after another so the logs
    /// come out in order.
    pub fn run_episodes(&self, logs: RunLogs<'_>) -> Result<Vec<Row>, ExperimentError> {
        self.check()?;
        let row = |i: usize, m: &EpisodeMetrics| {
            let cfg_seed = self.cell.episode_seed(self.base.seed, i);
            Row::episode(&self.policy_name, &self.cell, i, cfg_seed, m)
        };
        if logs.transitions.is_some() || logs.trajectory.is_some() {
            let RunLogs {
                mut transitions,
                mut trajectory,
            } = logs;
            let mut rows = Vec::with_capacity(self.episodes);
            for i in 0..self.episodes {
                let outcome = run_episode_logged(
                    self.episode_config(i),
                    RunLogs {
                        transitions: transitions.as_mut().map(|w| &mut **w as &mut dyn Write),
                        trajectory: trajectory.as_mut().map(|w| &mut **w as &mut dyn Write),
                    },
                )?;
                rows.push(row(i, &outcome.metrics));
            }
            return Ok(rows);
        }

        let results: Mutex<Vec<Option<Result<EpisodeMetrics, EngineError>>>> =
            Mutex::new((0..self.episodes).map(|_| None).collect());
        let next = AtomicUsize::new(0);
        let workers = thread::available_parallelism()
            .map_or(1, |n| n.get())
            .min(self.episodes);
        thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= self.episodes {
                        break;
                    }
                    let outcome = run_episode(self.episode_config(i)).map(|o| o.metrics);
                    results
                        .lock()
                        .expect("no worker panics while holding the lock")[i] = Some(outcome);
                });
            }
        });
        results
            .into_inner()
            .expect("workers finished")
            .into_iter()
            .enumerate()
            .map(|(i, r)| {
                let metrics = r.expect("every index was claimed")?;
                Ok(row(i, &metrics))
            })
            .collect()
    }
}

/// Per-episode rows followed by one aggregate row.
pub fn run(batch: &Batch, logs: RunLogs<'_>) -> Result<Vec<Row>, ExperimentError> {
    let mut rows = batch.run_episodes(logs)?;
    let summary = aggregate(&rows);
    rows.push(summary);
    Ok(rows)
}

/// Axis values for a sweep. `None` keeps the base config's value.
#[derive(Debug, Clone, Default)]
pub struct SweepAxes {
    pub nodes: Option<Vec<usize>>,
    pub flows: Option<Vec<usize>>,
    pub dynamic_scale: Option<Vec<f64>>,
}

impl SweepAxes {
    /// Grid cells, nodes varying slowest.
    pub fn cells(&self, base: &SimConfig) -> Result<Vec<Cell>, ExperimentError> {
        fn axis<T: Copy>(
            name: &str,
            given: &Option<Vec<T>>,
            default: T,
        ) -> Result<Vec<T>, ExperimentError> {
            match given {
                Some(v) if v.is_empty() => Err(ExperimentError::Usage(format!(
                    "sweep axis {name} is empty"
                ))),
                Some(v) => Ok(v.clone()),
                None => Ok(vec![default]),
            }
        }
        let own = Cell::of(base);
        let nodes = axis("nodes", &self.nodes, own.nodes)?;
        let flows = axis("flows", &self.flows, own.flows)?;
        let dynamic = axis("dynamic", &self.dynamic_scale, own.dynamic_scale)?;
        let mut cells = Vec::with_capacity(nodes.len() * flows.len() * dynamic.len());
        for &n in &nodes {
            for &f in &flows {
                for &s in &dynamic {
                    cells.push(Cell {
                        nodes: n,
                        flows: f,
                        dynamic_scale: s,
                    });
                }
            }
        }
        Ok(cells)
    }
}

/// One aggregate row per (cell, policy), cells outermost.
pub fn sweep(
    base: &SimConfig,
    axes: &SweepAxes,
    policies: &[(String, PolicySpec)],
    episodes: usize,
) -> Result<Vec<Row>, ExperimentError> {
    if policies.is_empty() {
        return Err(ExperimentError::Usage("no policies given".into()));
    }
    let cells = axes.cells(base)?;
    let mut rows = Vec::with_capacity(cells.len() * policies.len());
    for cell in cells {
        for (name, policy) in policies {
            let batch = Batch {
                base: base.clone(),
                cell,
                policy_name: name.clone(),
                policy: policy.clone(),
                episodes,
            };
            rows.push(aggregate(&batch.run_episodes(RunLogs::default())?));
        }
    }
    Ok(rows)
}

pub fn write_csv<W: Write>(rows: &[Row], out: W) -> Result<(), ExperimentError> {
    let mut writer = csv::Writer::from_writer(out);
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn csv_string(rows: &[Row]) -> Result<String, ExperimentError> {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf)?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

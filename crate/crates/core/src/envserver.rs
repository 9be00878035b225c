//! Reset/step environment over newline-delimited JSON.
//!
//! Requests, one per line:
//!
//! ```text
//! {"cmd":"reset","cfg":{...overrides...}}
//! {"cmd":"step","actions":{"<node>":0|1, ...}}
//! {"cmd":"close"}
//! ```
//!
//! `reset` and `step` both answer with the observations of every node that
//! must decide in the next slot, keyed by node id. `step` also carries the
//! rewards paid in that slot (plus end-of-episode payouts to idle nodes) and
//! a metrics snapshot. Each reply's `info.decisions` lists the pending
//! decisions in the order the engine resolves them, with the next hop and its
//! confidence, so a driver can reproduce the built-in policies exactly.
//!
//! A bad request is answered with `{"error":"..."}` and leaves the session
//! untouched.

use std::collections::BTreeMap;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::thread;

use serde::Deserialize;
use serde_json::{json, Map, Value};

use crate::config::SimConfig;
use crate::engine::{Decision, EngineError, Episode};
use crate::packet::NodeId;
use crate::policy::Action;

#[derive(Debug, Deserialize)]
#[serde(tag = "cmd", rename_all = "snake_case", deny_unknown_fields)]
enum Request {
    Reset {
        #[serde(default)]
        cfg: Map<String, Value>,
    },
    Step {
        actions: Map<String, Value>,
    },
    Close,
}

/// What the caller should do after a request has been answered.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flow {
    Continue,
    Close,
}

/// One client's environment. Holds at most one episode at a time.
pub struct EnvSession {
    base: SimConfig,
    episode: Option<Episode>,
    pending: Vec<Decision>,
}

/// Recursively overlay `patch` on `target`. Objects merge key by key,
/// anything else replaces.
pub fn merge_json(target: &mut Value, patch: &Value) {
    match (target, patch) {
        (Value::Object(t), Value::Object(p)) => {
            for (key, value) in p {
                match t.get_mut(key) {
                    Some(slot) => merge_json(slot, value),
                    None => {
                        t.insert(key.clone(), value.clone());
                    }
                }
            }
        }
        (t, p) => *t = p.clone(),
    }
}

/// Apply reset overrides to `base`. Changing `node_count` without giving
/// `flows` regenerates the default flow pattern and drops fixed positions.
pub fn apply_overrides(
    base: &SimConfig,
    overrides: &Map<String, Value>,
) -> Result<SimConfig, String> {
    let mut value = serde_json::to_value(base).map_err(|e| e.to_string())?;
    merge_json(&mut value, &Value::Object(overrides.clone()));
    let mut cfg = SimConfig::from_json_value(value).map_err(|e| e.to_string())?;
    if overrides.contains_key("node_count")
        && !overrides.contains_key("flows")
        && cfg.node_count != base.node_count
    {
        let positions_given = overrides.contains_key("positions");
        let positions = cfg.positions.take();
        let flows = base.flows.len().max(1);
        let rate = base.flows.first().map_or(1.0, |f| f.packets_per_slot);
        cfg.flows = SimConfig::default_flows(cfg.node_count, flows, rate);
        if positions_given {
            cfg.positions = positions;
        }
    }
    Ok(cfg)
}

fn observations(decisions: &[Decision]) -> Value {
    let map: Map<String, Value> = decisions
        .iter()
        .map(|d| (d.node.0.to_string(), json!(d.observation.features())))
        .collect();
    Value::Object(map)
}

fn decision_info(decisions: &[Decision]) -> Value {
    decisions
        .iter()
        .map(|d| {
            json!({
                "node": d.node.0,
                "destination": d.destination.0,
                "next_hop": d.next_hop.0,
                "c_best": d.c_best,
            })
        })
        .collect()
}

fn metrics_info(episode: &Episode) -> Value {
    let m = episode.metrics();
    let s = m.summarize();
    json!({
        "slot": episode.slot(),
        "generated": m.generated,
        "delivered": m.delivered,
        "dropped": m.dropped,
        "residual": m.residual,
        "duplicates_at_destination": m.duplicates_at_destination,
        "transmissions": m.transmissions,
        "broadcasts": m.broadcasts,
        "unicasts": m.unicasts,
        "acks_returned": m.acks_returned,
        "goodput": s.goodput,
        "normalized_overhead": s.normalized_overhead,
        "broadcast_rate": s.broadcast_rate,
        "mean_delay": s.mean_delay,
        "mean_hops": s.mean_hops,
    })
}

fn parse_action(key: &str, value: &Value) -> Result<(NodeId, Action), String> {
    let node: u32 = key
        .parse()
        .map_err(|_| format!("agent key {key:?} is not a node id"))?;
    let index = value
        .as_u64()
        .and_then(|v| u8::try_from(v).ok())
        .and_then(Action::from_index)
        .ok_or_else(|| format!("action for agent {key} must be 0 or 1, got {value}"))?;
    Ok((NodeId(node), index))
}

fn engine_error(err: EngineError) -> String {
    match err {
        EngineError::MissingAction(n) => format!("missing action for agent {n}"),
        EngineError::UnexpectedAction(n) => format!("agent {n} was not asked to act"),
        other => other.to_string(),
    }
}

impl EnvSession {
    pub fn new(base: SimConfig) -> Self {
        Self {
            base,
            episode: None,
            pending: Vec::new(),
        }
    }

    pub fn episode(&self) -> Option<&Episode> {
        self.episode.as_ref()
    }

    /// Decisions the next `step` must answer.
    pub fn pending(&self) -> &[Decision] {
        &self.pending
    }

    /// Start a new episode from the base config plus `overrides`.
    pub fn reset(&mut self, overrides: &Map<String, Value>) -> Result<Value, String> {
        let cfg = apply_overrides(&self.base, overrides)?;
        let mut episode = Episode::new(cfg).map_err(engine_error)?;
        let pending = episode.next_decisions();
        let reply = json!({
            "obs": observations(&pending),
            "slot": episode.slot(),
            "done": episode.is_finished(),
            "info": {
                "decisions": decision_info(&pending),
                "metrics": metrics_info(&episode),
            },
        });
        self.episode = Some(episode);
        self.pending = pending;
        Ok(reply)
    }

    /// Resolve the outstanding slot with `actions` and advance to the next
    /// slot that needs decisions.
    pub fn step(&mut self, actions: &Map<String, Value>) -> Result<Value, String> {
        let episode = self
            .episode
            .as_mut()
            .ok_or_else(|| "no episode; send reset first".to_string())?;
        if episode.is_finished() {
            return Err("episode is finished; send reset".into());
        }
        let parsed = actions
            .iter()
            .map(|(k, v)| parse_action(k, v))
            .collect::<Result<Vec<_>, _>>()?;
        let report = episode.apply(&parsed).map_err(engine_error)?;

        let mut rewards: BTreeMap<NodeId, f64> = report.rewards.into_iter().collect();
        for (node, amount) in episode.take_final_payouts() {
            *rewards.entry(node).or_insert(0.0) += amount;
        }
        let rewards: Map<String, Value> = rewards
            .into_iter()
            .map(|(n, r)| (n.0.to_string(), json!(r)))
            .collect();

        let pending = episode.next_decisions();
        let reply = json!({
            "obs": observations(&pending),
            "rewards": rewards,
            "done": episode.is_finished(),
            "slot": episode.slot(),
            "info": {
                "decisions": decision_info(&pending),
                "metrics": metrics_info(episode),
            },
        });
        self.pending = pending;
        Ok(reply)
    }

    /// Handle one request line. Returns the reply and whether to keep going.
    pub fn handle_line(&mut self, line: &str) -> (Value, Flow) {
        let request: Request = match serde_json::from_str(line) {
            Ok(r) => r,
            Err(e) => {
                return (
                    json!({ "error": format!("bad request: {e}") }),
                    Flow::Continue,
                )
            }
        };
        let result = match request {
            Request::Reset { cfg } => self.reset(&cfg),
            Request::Step { actions } => self.step(&actions),
            Request::Close => return (json!({ "closed": true }), Flow::Close),
        };
        let reply = result.unwrap_or_else(|e| json!({ "error": e }));
        (reply, Flow::Continue)
    }
}

/// Serve one session over a pair of byte streams until `close` or EOF.
pub fn serve<R: BufRead, W: Write>(reader: R, mut writer: W, base: SimConfig) -> io::Result<()> {
    let mut session = EnvSession::new(base);
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (reply, flow) = session.handle_line(&line);
        serde_json::to_writer(&mut writer, &reply).map_err(io::Error::other)?;
        writer.write_all(b"\n")?;
        writer.flush()?;
        if flow == Flow::Close {
            break;
        }
    }
    Ok(())
}

fn serve_stream(stream: TcpStream, base: SimConfig) -> io::Result<()> {
    let reader = BufReader::new(stream.try_clone()?);
    serve(reader, BufWriter::new(stream), base)
}

/// Accept connections forever, one thread and one session per connection.
pub fn serve_listener(listener: TcpListener, base: SimConfig) -> io::Result<()> {
    for stream in listener.incoming() {
        let stream = stream?;
        let base = base.clone();
        thread::spawn(move || {
            let _ = serve_stream(stream, base);
        });
    }
    Ok(())
}

pub fn serve_tcp<A: ToSocketAddrs>(addr: A, base: SimConfig) -> io::Result<()> {
    serve_listener(TcpListener::bind(addr)?, base)
}

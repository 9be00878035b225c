//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits nonzero if any failed.
//!
//! cargo test -p deepcq-core --test acceptance

use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::path::PathBuf;
use std::process::ExitCode;
use std::thread;
use std::time::{Duration, Instant};

use deepcq::experiment::{self, Batch, Cell};
use deepcq::mobility::Mobility;
use deepcq::policy::forward_features;
use deepcq::{
    compute_reward1, decide_cq_plus, decide_cq_plus_hard, envserver, run_episode, Action, CqTable,
    Episode, FlowSpec, MobilityModel, NodeId, PolicySpec, PolicyWeights, RegionLayout, RunLogs,
    SimConfig, SimRng,
};
use serde_json::{json, Value};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn n(i: u32) -> NodeId {
    NodeId(i)
}

/// Direct evaluation of the ACK update: returns (c', h').
fn oracle_ack(c: f64, h: f64, c_ack: f64, h_ack: f64, lambda: f64) -> (f64, f64) {
    let alpha = if c_ack > 1.0 - c { c_ack } else { 1.0 - c };
    (c * (1.0 - lambda) + lambda * c_ack, h + alpha * (h_ack - h))
}

fn update_rule_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = SimRng::new(0xACCE_0001);
    let mut worst = 0.0f64;
    let mut clamps = 0;
    for _ in 0..10_000 {
        let c = rng.uniform();
        let h = rng.uniform_range(1.0, 64.0);
        let c_ack = rng.uniform();
        let h_ack = rng.uniform_range(1.0, 65.0);
        let lambda = rng.uniform_range(1e-6, 1.0);

        let mut t = CqTable::new(n(0), 3, lambda, 0.0, 32.0);
        t.set(n(1), n(2), c, h);
        t.update_on_ack(n(1), n(2), deepcq::AckValues { c_ack, h_ack });
        let (ce, he) = oracle_ack(c, h, c_ack, h_ack, lambda);
        worst = worst
            .max((t.c(n(1), n(2)) - ce).abs())
            .max((t.h(n(1), n(2)) - he).abs());

        t.set(n(1), n(2), c, h);
        t.update_on_failure(n(1), n(2));
        worst = worst.max((t.c(n(1), n(2)) - c * (1.0 - lambda)).abs());
        worst = worst.max((t.h(n(1), n(2)) - h).abs());
        clamps += t.clamp_events();
    }
    let elapsed = start.elapsed();
    check(
        worst <= 1e-12 && clamps == 0 && elapsed < Duration::from_secs(5),
        format!("max |err| {worst:.2e}, clamps {clamps}, {elapsed:.2?}"),
    )
}

fn hard_policy_equivalence() -> Outcome {
    let start = Instant::now();
    let mut points = 0;
    let mut ties = 0;
    let mut mismatches = Vec::new();
    for eps in [0.0, 0.05, 0.1, 0.3] {
        for i in 0..=1000 {
            let c = i as f64 / 1000.0;
            let r_bc = 1.0 - c * (1.0 - eps);
            let r_uc = c * (1.0 - eps);
            if compute_reward1(Action::Broadcast, c, eps) != r_bc
                || compute_reward1(Action::Unicast, c, eps) != r_uc
            {
                mismatches.push(format!("reward1 at c={c} eps={eps}"));
            }
            if r_bc == r_uc {
                ties += 1;
                continue;
            }
            points += 1;
            let best = if r_bc > r_uc {
                Action::Broadcast
            } else {
                Action::Unicast
            };
            if decide_cq_plus_hard(c, eps) != best {
                mismatches.push(format!("c={c} eps={eps}"));
            }
        }
    }
    let elapsed = start.elapsed();
    check(
        mismatches.is_empty() && elapsed < Duration::from_secs(1),
        format!("{points} points agree, {ties} exact ties skipped, {elapsed:.2?}; mismatches {mismatches:?}"),
    )
}

fn stochastic_frequency() -> Outcome {
    let eps = 0.05;
    let mut rng = SimRng::new(0xACCE_0003);
    let mut worst = 0.0f64;
    for c in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let draws = 100_000;
        let broadcasts = (0..draws)
            .filter(|_| decide_cq_plus(c, eps, &mut rng) == Action::Broadcast)
            .count();
        let p = 1.0 - c * (1.0 - eps);
        worst = worst.max((broadcasts as f64 / draws as f64 - p).abs());
    }
    check(worst <= 0.01, format!("max |freq − P_BC| {worst:.4}"))
}

fn static_config(positions: Vec<[f64; 2]>, flows: Vec<FlowSpec>) -> SimConfig {
    let mut cfg = SimConfig::benchmark();
    cfg.node_count = positions.len();
    cfg.positions = Some(positions);
    cfg.flows = flows;
    cfg.mobility.model = MobilityModel::Static;
    cfg.mobility.region_layout = RegionLayout::Uniform;
    cfg.channel.falloff_m = Some(1.0);
    cfg.channel.ack_lossless = true;
    cfg
}

fn line_network_convergence() -> Outcome {
    let start = Instant::now();
    let (s, m, d) = (n(0), n(1), n(2));
    let mut cfg = static_config(
        vec![[100.0, 150.0], [245.0, 150.0], [390.0, 150.0]],
        vec![FlowSpec {
            source: s,
            destination: d,
            packets_per_slot: 1.0,
        }],
    );
    cfg.traffic_slots = 1000;
    cfg.policy = PolicySpec::cq_plus(0.05);
    cfg.seed = 11;
    let window_start = cfg.traffic_slots - 500;

    let mut ep = Episode::new(cfg).map_err(|e| e.to_string())?;
    let mut at_500 = None;
    let (mut window_bc, mut window_total) = (0u64, 0u64);
    loop {
        let decisions = ep.next_decisions();
        if decisions.is_empty() {
            break;
        }
        let actions = ep.native_actions().map_err(|e| e.to_string())?;
        let slot = ep.slot();
        if slot > window_start && slot <= window_start + 500 {
            window_total += actions.len() as u64;
            window_bc += actions
                .iter()
                .filter(|(_, a)| *a == Action::Broadcast)
                .count() as u64;
        }
        ep.apply(&actions).map_err(|e| e.to_string())?;
        if ep.slot() == 500 {
            let t = ep.table(s);
            at_500 = Some((t.h(m, d), t.c(m, d)));
        }
    }
    let (h, c) = at_500.ok_or("episode ended before slot 500")?;
    let rate = window_bc as f64 / window_total as f64;
    let goodput = ep.metrics().goodput();
    let elapsed = start.elapsed();
    check(
        (1.9..=2.1).contains(&h)
            && c >= 0.95
            && rate <= 0.05 + 0.02
            && goodput == 1.0
            && elapsed < Duration::from_secs(5),
        format!("h {h:.4}, c {c:.4} at slot 500; broadcast rate {rate:.4} over last 500 slots; goodput {goodput}; {elapsed:.2?}"),
    )
}

fn random_batches(seed: u64) -> Vec<Batch> {
    let mut rng = SimRng::new(seed);
    (0..50)
        .map(|_| {
            let mut base = SimConfig::benchmark();
            base.traffic_slots = 200 + (rng.next_u64() % 800);
            base.seed = rng.next_u64();
            let rate = [0.5, 1.0, 1.5][(rng.next_u64() % 3) as usize];
            base.flows = SimConfig::default_flows(12, 1, rate);
            if rng.chance(0.3) {
                base.mobility.model = MobilityModel::RandomWaypoint;
            }
            if rng.chance(0.5) {
                base.channel.ack_lossless = true;
            }
            let cell = Cell {
                nodes: 12,
                flows: 1 + (rng.next_u64() % 3) as usize,
                dynamic_scale: rng.uniform_range(0.5, 3.0),
            };
            let (name, policy) = if rng.chance(0.5) {
                ("cq+", PolicySpec::cq_plus(0.05))
            } else {
                ("hard-cq+", PolicySpec::cq_plus_hard(0.05))
            };
            Batch {
                base,
                cell,
                policy_name: name.into(),
                policy,
                episodes: 1,
            }
        })
        .collect()
}

fn conservation_and_determinism() -> Outcome {
    let render = || -> Result<(String, Vec<String>), String> {
        let mut rows = Vec::new();
        let mut violations = Vec::new();
        for (i, b) in random_batches(0xACCE_0005).iter().enumerate() {
            let r = b
                .run_episodes(RunLogs::default())
                .map_err(|e| e.to_string())?;
            let row = &r[0];
            if row.generated != row.delivered + row.dropped + row.residual {
                violations.push(format!(
                    "episode {i}: {} ≠ {} + {} + {}",
                    row.generated, row.delivered, row.dropped, row.residual
                ));
            }
            rows.extend(r);
        }
        Ok((
            experiment::csv_string(&rows).map_err(|e| e.to_string())?,
            violations,
        ))
    };
    let (first, violations) = render()?;
    let (second, _) = render()?;
    check(
        violations.is_empty() && first == second,
        format!(
            "50 episodes, {} conservation violations, csv {} bytes, identical {}; {violations:?}",
            violations.len(),
            first.len(),
            first == second
        ),
    )
}

fn gauss_markov_stationarity() -> Outcome {
    let mut details = Vec::new();
    let mut ok = true;
    for mu in [0.3, 0.85] {
        let mut cfg = SimConfig::benchmark();
        cfg.mobility.mu = mu;
        let v_bar = cfg.mobility.mean_speed_mps;
        let mut mob = Mobility::new(&cfg, SimRng::new(0xACCE_0006).fork("mobility"))
            .map_err(|e| e.to_string())?;
        let (w, h) = (cfg.area_width_m, cfg.area_height_m);
        let (mut sum, mut count, mut outside) = (0.0, 0u64, 0u64);
        for _ in 0..100_000 {
            mob.tick();
            for k in mob.nodes() {
                sum += k.speed;
                count += 1;
                if !(0.0..=w).contains(&k.x) || !(0.0..=h).contains(&k.y) {
                    outside += 1;
                }
            }
        }
        let mean = sum / count as f64;
        let rel = (mean - v_bar).abs() / v_bar;
        ok &= rel <= 0.05 && outside == 0;
        details.push(format!(
            "μ={mu}: mean speed {mean:.4} ({:.2}% off), {outside} outside",
            rel * 100.0
        ));
    }
    check(ok, details.join("; "))
}

struct WireClient {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
}

impl WireClient {
    fn call(&mut self, request: &Value) -> Result<Value, String> {
        let mut line = serde_json::to_string(request).map_err(|e| e.to_string())?;
        line.push('\n');
        self.writer
            .write_all(line.as_bytes())
            .map_err(|e| e.to_string())?;
        let mut reply = String::new();
        self.reader
            .read_line(&mut reply)
            .map_err(|e| e.to_string())?;
        let value: Value = serde_json::from_str(&reply).map_err(|e| e.to_string())?;
        match value.get("error") {
            Some(e) => Err(format!("server error: {e}")),
            None => Ok(value),
        }
    }
}

fn envserver_transparency() -> Outcome {
    let mut base = SimConfig::benchmark();
    base.traffic_slots = 400;
    base.policy = PolicySpec::cq_plus(0.05);
    let eps = base.policy.epsilon;

    let listener = TcpListener::bind("127.0.0.1:0").map_err(|e| e.to_string())?;
    let addr = listener.local_addr().map_err(|e| e.to_string())?;
    let server_base = base.clone();
    thread::spawn(move || envserver::serve_listener(listener, server_base));
    let stream = TcpStream::connect(addr).map_err(|e| e.to_string())?;
    let mut client = WireClient {
        reader: BufReader::new(stream.try_clone().map_err(|e| e.to_string())?),
        writer: stream,
    };

    let fields = [
        "generated",
        "delivered",
        "dropped",
        "residual",
        "duplicates_at_destination",
        "transmissions",
        "broadcasts",
        "unicasts",
        "acks_returned",
        "goodput",
        "normalized_overhead",
        "broadcast_rate",
        "mean_delay",
        "mean_hops",
    ];
    let mut mismatches = Vec::new();
    for episode in 0..10u64 {
        let seed = 1000 + episode;
        let mut cfg = base.clone();
        cfg.seed = seed;
        let native = run_episode(cfg).map_err(|e| e.to_string())?;
        let s = native.metrics.summarize();
        let m = &native.metrics;
        let expected = json!({
            "generated": m.generated, "delivered": m.delivered, "dropped": m.dropped,
            "residual": m.residual, "duplicates_at_destination": m.duplicates_at_destination,
            "transmissions": m.transmissions, "broadcasts": m.broadcasts, "unicasts": m.unicasts,
            "acks_returned": m.acks_returned, "goodput": s.goodput,
            "normalized_overhead": s.normalized_overhead, "broadcast_rate": s.broadcast_rate,
            "mean_delay": s.mean_delay, "mean_hops": s.mean_hops,
        });

        let mut rng = SimRng::new(seed).fork("policy");
        let mut reply = client.call(&json!({"cmd": "reset", "cfg": {"seed": seed}}))?;
        let mut totals = vec![0.0; base.node_count];
        while !reply["done"].as_bool().unwrap_or(true) {
            let mut actions = serde_json::Map::new();
            for d in reply["info"]["decisions"]
                .as_array()
                .ok_or("no decisions")?
            {
                let c_best = d["c_best"].as_f64().ok_or("no c_best")?;
                let action = decide_cq_plus(c_best, eps, &mut rng);
                actions.insert(d["node"].to_string(), json!(action.index()));
            }
            reply = client.call(&json!({"cmd": "step", "actions": actions}))?;
            for (node, r) in reply["rewards"].as_object().ok_or("no rewards")? {
                totals[node.parse::<usize>().map_err(|e| e.to_string())?] +=
                    r.as_f64().unwrap_or(f64::NAN);
            }
        }
        let wire = &reply["info"]["metrics"];
        for f in fields {
            if wire[f] != expected[f] {
                mismatches.push(format!(
                    "episode {episode} {f}: wire {} native {}",
                    wire[f], expected[f]
                ));
            }
        }
        if totals != native.reward_totals {
            mismatches.push(format!("episode {episode}: reward totals differ"));
        }
    }
    let _ = client.call(&json!({"cmd": "close"}));
    check(
        mismatches.is_empty(),
        format!(
            "10 episodes, {} mismatches {mismatches:?}",
            mismatches.len()
        ),
    )
}

fn neural_golden() -> Outcome {
    let data = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data");
    let weights =
        PolicyWeights::load(&data.join("golden_weights.json")).map_err(|e| e.to_string())?;
    let text =
        std::fs::read_to_string(data.join("golden_expected.json")).map_err(|e| e.to_string())?;
    let cases: Vec<Value> = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for case in &cases {
        let obs: Vec<f64> =
            serde_json::from_value(case["observation"].clone()).map_err(|e| e.to_string())?;
        let want: Vec<f64> =
            serde_json::from_value(case["probabilities"].clone()).map_err(|e| e.to_string())?;
        let (pu, pb) = forward_features(&weights, &obs).map_err(|e| e.to_string())?;
        worst = worst.max((pu - want[0]).abs()).max((pb - want[1]).abs());
    }
    check(
        !cases.is_empty() && worst <= 1e-6,
        format!("{} observations, max |Δp| {worst:.2e}", cases.len()),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("update-rule oracle", update_rule_oracle),
        ("hard-policy equivalence", hard_policy_equivalence),
        ("stochastic-policy frequency", stochastic_frequency),
        ("line-network convergence", line_network_convergence),
        ("conservation and determinism", conservation_and_determinism),
        ("gauss-markov stationarity", gauss_markov_stationarity),
        ("envserver transparency", envserver_transparency),
        ("neural golden forward pass", neural_golden),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        match run() {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

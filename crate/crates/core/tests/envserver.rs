use deepcq::envserver::EnvSession;
use deepcq::{
    compute_reward1, Action, FlowSpec, MobilityModel, NodeId, RegionLayout, RewardKind, SimConfig,
};
use serde_json::{json, Map, Value};

fn call(s: &mut EnvSession, request: Value) -> Value {
    let reply = s.handle_line(&request.to_string()).0;
    assert!(reply.get("error").is_none(), "{reply}");
    reply
}

fn obj(v: Value) -> Map<String, Value> {
    v.as_object().unwrap().clone()
}

fn base() -> SimConfig {
    let mut cfg = SimConfig::benchmark();
    cfg.traffic_slots = 150;
    cfg
}

/// Drive an episode with `choose`, returning per-node reward sums and the final reply.
fn drive(
    s: &mut EnvSession,
    overrides: Value,
    mut choose: impl FnMut(&Value) -> Action,
) -> (Vec<f64>, Value) {
    let mut reply = call(s, json!({"cmd": "reset", "cfg": overrides}));
    let n = s.episode().unwrap().config().node_count;
    let mut totals = vec![0.0; n];
    while !reply["done"].as_bool().unwrap() {
        let mut actions = Map::new();
        for d in reply["info"]["decisions"].as_array().unwrap() {
            actions.insert(d["node"].to_string(), json!(choose(d).index()));
        }
        reply = call(s, json!({"cmd": "step", "actions": actions}));
        for (k, r) in obj(reply["rewards"].clone()) {
            totals[k.parse::<usize>().unwrap()] += r.as_f64().unwrap();
        }
    }
    (totals, reply)
}

#[test]
fn reset_is_deterministic() {
    let mut s = EnvSession::new(base());
    let a = call(&mut s, json!({"cmd": "reset", "cfg": {"seed": 5}}));
    call(&mut s, json!({"cmd": "step", "actions": {"0": 1}}));
    let b = call(&mut s, json!({"cmd": "reset", "cfg": {"seed": 5}}));
    assert_eq!(a, b);
    assert_eq!(obj(a["obs"].clone()).keys().collect::<Vec<_>>(), vec!["0"]);
}

#[test]
fn rewards_sum_to_engine_totals() {
    for kind in ["reward1", "reward2"] {
        let mut s = EnvSession::new(base());
        let mut flip = false;
        let (totals, _) = drive(&mut s, json!({"seed": 2, "reward": {"kind": kind}}), |_| {
            flip = !flip;
            if flip {
                Action::Broadcast
            } else {
                Action::Unicast
            }
        });
        assert_eq!(totals, s.episode().unwrap().reward_totals(), "{kind}");
        assert!(s
            .episode()
            .unwrap()
            .unpaid_rewards()
            .iter()
            .all(|&r| r == 0.0));
    }
}

#[test]
fn reward1_matches_direct_computation() {
    let mut s = EnvSession::new(base());
    let mut reply = call(
        &mut s,
        json!({"cmd": "reset", "cfg": {"seed": 3, "reward": {"kind": "reward1"}}}),
    );
    let eps = s.episode().unwrap().config().policy.epsilon;
    assert_eq!(
        s.episode().unwrap().config().reward.kind,
        RewardKind::Reward1
    );
    let mut checked = 0;
    while !reply["done"].as_bool().unwrap() {
        let mut actions = Map::new();
        let mut expected = Vec::new();
        for (i, d) in reply["info"]["decisions"]
            .as_array()
            .unwrap()
            .iter()
            .enumerate()
        {
            let a = if i % 2 == 0 {
                Action::Broadcast
            } else {
                Action::Unicast
            };
            actions.insert(d["node"].to_string(), json!(a.index()));
            expected.push((
                d["node"].to_string(),
                compute_reward1(a, d["c_best"].as_f64().unwrap(), eps),
            ));
        }
        reply = call(&mut s, json!({"cmd": "step", "actions": actions}));
        let rewards = obj(reply["rewards"].clone());
        for (node, r) in expected {
            assert_eq!(rewards[&node].as_f64().unwrap(), r);
            checked += 1;
        }
    }
    assert!(checked > 100);
}

#[test]
fn flooding_a_connected_lossless_network_delivers_everything() {
    let mut cfg = base();
    cfg.node_count = 5;
    cfg.positions = Some(vec![
        [100.0, 100.0],
        [150.0, 120.0],
        [200.0, 100.0],
        [250.0, 150.0],
        [300.0, 100.0],
    ]);
    cfg.flows = vec![FlowSpec {
        source: NodeId(0),
        destination: NodeId(4),
        packets_per_slot: 1.0,
    }];
    cfg.mobility.model = MobilityModel::Static;
    cfg.mobility.region_layout = RegionLayout::Uniform;
    cfg.channel.ack_lossless = true;
    let mut s = EnvSession::new(cfg);
    let (_, last) = drive(&mut s, json!({}), |_| Action::Broadcast);
    assert_eq!(last["info"]["metrics"]["goodput"], 1.0);
    assert_eq!(last["info"]["metrics"]["broadcast_rate"], 1.0);
}

#[test]
fn node_count_override_keeps_observation_width() {
    let mut s = EnvSession::new(base());
    for nodes in [5, 20] {
        let r = call(
            &mut s,
            json!({"cmd": "reset", "cfg": {"node_count": nodes}}),
        );
        for (_, o) in obj(r["obs"].clone()) {
            assert_eq!(o.as_array().unwrap().len(), 18);
        }
    }
}

#[test]
fn errors_preserve_session() {
    let mut s = EnvSession::new(base());
    let first = call(&mut s, json!({"cmd": "reset", "cfg": {"seed": 8}}));
    for bad in [
        json!({"cmd": "step", "actions": {}}),
        json!({"cmd": "step", "actions": {"0": 1, "3": 1}}),
        json!({"cmd": "step", "actions": {"0": "broadcast"}}),
        json!({"cmd": "reset", "cfg": {"seed": "x"}}),
        json!({"cmd": "step"}),
    ] {
        let reply = s.handle_line(&bad.to_string()).0;
        assert!(reply.get("error").is_some(), "{bad}");
    }
    assert_eq!(s.episode().unwrap().slot(), first["slot"].as_u64().unwrap());
    call(&mut s, json!({"cmd": "step", "actions": {"0": 0}}));
}

#[test]
fn reals_round_trip() {
    let mut s = EnvSession::new(base());
    let mut reply = call(&mut s, json!({"cmd": "reset", "cfg": {"seed": 1}}));
    for _ in 0..40 {
        if reply["done"].as_bool().unwrap() {
            break;
        }
        let mut actions = Map::new();
        for d in reply["info"]["decisions"].as_array().unwrap() {
            actions.insert(d["node"].to_string(), json!(1));
        }
        reply = call(&mut s, json!({"cmd": "step", "actions": actions}));
    }
    let ep = s.episode().unwrap();
    for d in reply["info"]["decisions"].as_array().unwrap() {
        let node = NodeId(d["node"].as_u64().unwrap() as u32);
        let next = NodeId(d["next_hop"].as_u64().unwrap() as u32);
        let dest = NodeId(d["destination"].as_u64().unwrap() as u32);
        assert_eq!(d["c_best"].as_f64().unwrap(), ep.table(node).c(next, dest));
    }
}

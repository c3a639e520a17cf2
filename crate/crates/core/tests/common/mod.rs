//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use pwe_core::channel::{compute_pdp, pdp_to_csv, ChannelParams};
use pwe_core::geometry::Vec3;
use pwe_core::graph::{absorb_id, steer_id, Configuration, PweGraph};
use pwe_core::service::PdpRequest;
use pwe_core::schedule::{UpdateGraph, UpdateProblem, UpdateSchedule};
use pwe_core::{parse_scenario_str, Scenario};
use petgraph::algo::dijkstra;
use petgraph::graph::{DiGraph, NodeIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random small update problem: `n` nodes, edge probability 0.45, 1–2 rounds,
/// 1–2 pairs per round with some pairs continuing.
pub fn random_problem(seed: u64, n: usize) -> UpdateProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.gen_bool(0.45) {
                edges.push((u, v));
            }
        }
    }
    let graph = UpdateGraph::undirected(n, &edges);
    let initial_active = (0..n).map(|_| rng.gen_bool(0.5)).collect();
    let rounds = rng.gen_range(1..=2);
    let mut pairs_per_round: Vec<Vec<(usize, usize)>> = Vec::new();
    for t in 0..rounds {
        let mut round: Vec<(usize, usize)> = Vec::new();
        if t > 0 {
            for &p in &pairs_per_round[t - 1] {
                if rng.gen_bool(0.5) {
                    round.push(p);
                }
            }
        }
        let want = rng.gen_range(1..=2);
        while round.len() < want {
            let s = rng.gen_range(0..n);
            let d = rng.gen_range(0..n);
            if s != d && !round.contains(&(s, d)) {
                round.push((s, d));
            }
        }
        pairs_per_round.push(round);
    }
    UpdateProblem { graph, initial_active, pairs_per_round }
}

/// All simple paths from `s` to `d` using only `allowed` nodes.
pub fn simple_paths(graph: &UpdateGraph, allowed: &[bool], s: usize, d: usize) -> Vec<Vec<usize>> {
    fn go(g: &UpdateGraph, allowed: &[bool], path: &mut Vec<usize>, d: usize, out: &mut Vec<Vec<usize>>) {
        let u = *path.last().unwrap();
        if u == d {
            out.push(path.clone());
            return;
        }
        for &(a, b) in &g.arcs {
            if a == u && allowed[b] && !path.contains(&b) {
                path.push(b);
                go(g, allowed, path, d, out);
                path.pop();
            }
        }
    }
    let mut out = Vec::new();
    if allowed[s] && allowed[d] {
        go(graph, allowed, &mut vec![s], d, &mut out);
    }
    out
}

fn acyclic(arcs: &BTreeSet<(usize, usize)>) -> bool {
    // Repeatedly strip nodes without incoming arcs.
    let mut arcs = arcs.clone();
    loop {
        let heads: BTreeSet<usize> = arcs.iter().map(|a| a.1).collect();
        let before = arcs.len();
        arcs.retain(|a| heads.contains(&a.0));
        if arcs.is_empty() {
            return true;
        }
        if arcs.len() == before {
            return false;
        }
    }
}

/// Does a path choice exist for every (round, pair) under the given activity,
/// with continuing pairs keeping their path and each round's arcs acyclic?
pub fn routable(problem: &UpdateProblem, activity: &[Vec<bool>]) -> bool {
    fn rec(p: &UpdateProblem, act: &[Vec<bool>], t: usize, k: usize, chosen: &mut Vec<Vec<Vec<usize>>>) -> bool {
        if t == p.pairs_per_round.len() {
            return true;
        }
        if k == p.pairs_per_round[t].len() {
            chosen.push(Vec::new());
            let ok = rec(p, act, t + 1, 0, chosen);
            chosen.pop();
            return ok;
        }
        let (s, d) = p.pairs_per_round[t][k];
        let options = match (t > 0).then(|| p.pairs_per_round[t - 1].iter().position(|&x| x == (s, d))).flatten() {
            Some(q) => {
                let old = chosen[t - 1][q].clone();
                if old.iter().all(|&x| act[t][x]) {
                    vec![old]
                } else {
                    vec![]
                }
            }
            None => simple_paths(&p.graph, &act[t], s, d),
        };
        for path in options {
            let mut arcs: BTreeSet<(usize, usize)> =
                chosen[t].iter().flat_map(|q| q.windows(2).map(|w| (w[0], w[1]))).collect();
            arcs.extend(path.windows(2).map(|w| (w[0], w[1])));
            if !acyclic(&arcs) {
                continue;
            }
            chosen[t].push(path);
            if rec(p, act, t, k + 1, chosen) {
                chosen[t].pop();
                return true;
            }
            chosen[t].pop();
        }
        false
    }
    let mut chosen = vec![Vec::new()];
    rec(problem, activity, 0, 0, &mut chosen)
}

/// Minimum touches over every per-round activity assignment.
pub fn exhaustive_min_touches(problem: &UpdateProblem) -> Option<usize> {
    let n = problem.graph.node_count;
    let rounds = problem.pairs_per_round.len();
    let bits = n * rounds;
    let mut best: Option<usize> = None;
    for mask in 0u64..(1u64 << bits) {
        let activity: Vec<Vec<bool>> =
            (0..rounds).map(|t| (0..n).map(|u| mask >> (t * n + u) & 1 == 1).collect()).collect();
        let mut touches = 0;
        let mut prev = problem.initial_active.clone();
        for a in &activity {
            touches += a.iter().zip(&prev).filter(|(x, y)| x != y).count();
            prev = a.clone();
        }
        if best.is_some_and(|b| touches >= b) {
            continue;
        }
        if routable(problem, &activity) {
            best = Some(touches);
        }
    }
    best
}

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct InterleavingVerdict {
    pub loops: bool,
    pub black_holes: bool,
}

/// Apply every subset of the changed tiles of a continuing pair and walk the wave.
pub fn interleaving_verdict(problem: &UpdateProblem, schedule: &UpdateSchedule) -> InterleavingVerdict {
    let mut v = InterleavingVerdict::default();
    for t in 1..problem.pairs_per_round.len() {
        for (k, &(s, d)) in problem.pairs_per_round[t].iter().enumerate() {
            let Some(q) = problem.pairs_per_round[t - 1].iter().position(|&x| x == (s, d)) else { continue };
            let old: BTreeMap<usize, usize> =
                schedule.rounds[t - 1].paths[q].windows(2).map(|w| (w[0], w[1])).collect();
            let new: BTreeMap<usize, usize> = schedule.rounds[t].paths[k].windows(2).map(|w| (w[0], w[1])).collect();
            let nodes: BTreeSet<usize> = old.keys().chain(new.keys()).copied().collect();
            let changing: Vec<usize> = nodes.into_iter().filter(|x| old.get(x) != new.get(x)).collect();
            for mask in 0u32..(1 << changing.len()) {
                let rule = |x: usize| -> Option<usize> {
                    match changing.iter().position(|&c| c == x) {
                        Some(i) if mask >> i & 1 == 1 => new.get(&x).copied(),
                        _ => old.get(&x).copied(),
                    }
                };
                let mut seen = BTreeSet::new();
                let mut x = s;
                loop {
                    if x == d {
                        break;
                    }
                    if !seen.insert(x) {
                        v.loops = true;
                        break;
                    }
                    match rule(x) {
                        Some(y) => x = y,
                        None => {
                            v.black_holes = true;
                            break;
                        }
                    }
                }
            }
        }
    }
    v
}

const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Routing cost (dB, clamped at 0) of the directed link `u → v` recomputed
/// from its raw length and nLOS factor: free-space spreading with the
/// near/far exponent, user antenna gains at the ends and a 0.9 steering
/// efficiency at every synthesised tile the wave enters. `None` when the
/// link is absent or the tile cannot steer.
pub fn link_cost_db(g: &PweGraph, u: usize, v: usize, rx: usize, params: &ChannelParams) -> Option<f64> {
    let l = g.links.iter().find(|l| (l.a, l.b) == (u, v) || (l.a, l.b) == (v, u))?;
    let k = 4.0 * std::f64::consts::PI * params.frequency_hz / SPEED_OF_LIGHT;
    let a = if l.length <= params.near_field_radius_m { params.a_near } else { params.a_far };
    let mut gain = l.nlos_factor / (k * k * l.length.powf(a));
    let (pu, pv) = (g.position(u), g.position(v));
    if !g.is_tile(u) {
        gain *= g.user(u).antenna.gain(pv - pu);
    }
    if v == rx {
        gain *= g.user(v).antenna.gain(pu - pv);
    } else {
        if g.tiles[v].is_virtual() || g.neighbors(v).len() < 2 {
            return None;
        }
        gain *= 0.9;
    }
    (gain > 0.0).then(|| (-10.0 * gain.log10()).max(0.0))
}

/// Received power of a route with each tile steering, from the raw links.
pub fn route_power(g: &PweGraph, nodes: &[usize], params: &ChannelParams) -> f64 {
    let rx = *nodes.last().unwrap();
    let loss: f64 = nodes.windows(2).map(|w| link_cost_db(g, w[0], w[1], rx, params).unwrap()).sum();
    params.tx_power_w * 10f64.powf(-loss / 10.0)
}

/// Three-wall room split by a low obstacle, with tx and rx at the given points.
pub fn toy_with_users(tx: [f64; 3], rx: [f64; 3]) -> Scenario {
    let text = format!(
        r#"{{
  "floorplan": {{
    "kind": "explicit",
    "surfaces": [
      {{ "id": "west", "origin": [0.0, 1.0, 0.0], "edge_u": [0.0, 2.0, 0.0], "edge_v": [0.0, 0.0, 1.0] }},
      {{ "id": "east", "origin": [4.0, 1.0, 0.0], "edge_u": [0.0, 0.0, 1.0], "edge_v": [0.0, 2.0, 0.0] }},
      {{ "id": "north", "origin": [1.0, 4.0, 0.0], "edge_u": [2.0, 0.0, 0.0], "edge_v": [0.0, 0.0, 1.0] }}
    ],
    "obstacles": [{{ "min": [1.9, 1.0, 0.0], "max": [2.1, 2.0, 1.0] }}],
    "ceiling_height_m": 1.0
  }},
  "users": [
    {{ "user_id": "tx", "position_m": {tx:?} }},
    {{ "user_id": "rx", "position_m": {rx:?} }}
  ]
}}"#
    );
    parse_scenario_str(&text).unwrap()
}

/// A blocked direct path and two single-tile detours whose losses differ by
/// about 10 dB. Every link is in the near field, so each route loses
/// K²·l per hop and the squared hop lengths differ tenfold.
pub const TWO_ROUTE_TOY: &str = r#"{
  "floorplan": {
    "kind": "explicit",
    "surfaces": [
      { "id": "north", "origin": [1.5, 0.57, 0.0], "edge_u": [1.0, 0.0, 0.0], "edge_v": [0.0, 0.0, 1.0] },
      { "id": "south", "origin": [1.5, -1.89, 0.0], "edge_u": [0.0, 0.0, 1.0], "edge_v": [1.0, 0.0, 0.0] }
    ],
    "obstacles": [{ "min": [1.95, -0.3, 0.0], "max": [2.05, 0.3, 1.0] }],
    "ceiling_height_m": 1.0
  },
  "users": [
    { "user_id": "tx", "position_m": [1.8, 0.0, 0.5] },
    { "user_id": "rx", "position_m": [2.2, 0.0, 0.5] }
  ]
}"#;

/// Users on either side of a partition; the only way round is west wall,
/// then east wall.
pub const TWO_WALL_TOY: &str = r#"{
  "floorplan": {
    "kind": "explicit",
    "surfaces": [
      { "id": "west", "origin": [0.0, 0.0, 0.0], "edge_u": [0.0, 2.0, 0.0], "edge_v": [0.0, 0.0, 1.0] },
      { "id": "east", "origin": [4.0, 2.0, 0.0], "edge_u": [0.0, 0.0, 1.0], "edge_v": [0.0, 2.0, 0.0] }
    ],
    "obstacles": [{ "min": [1.9, 0.0, 0.0], "max": [2.1, 2.0, 1.0] }],
    "ceiling_height_m": 1.0
  },
  "users": [
    { "user_id": "tx", "position_m": [1.0, 1.0, 0.5] },
    { "user_id": "rx", "position_m": [3.0, 1.0, 0.5] }
  ]
}"#;

/// Random PDP request against `graph`: any ordered user pair, sometimes a
/// moved receiver, sometimes per-tile overrides (a steer, an absorb, or ∅).
pub fn random_request(rng: &mut ChaCha8Rng, graph: &PweGraph, bounds: (Vec3, Vec3)) -> PdpRequest {
    let users: Vec<&str> = graph.users.iter().map(|u| u.user_id.as_str()).collect();
    let tx = users[rng.gen_range(0..users.len())];
    let mut rx = users[rng.gen_range(0..users.len())];
    if rx == tx {
        rx = users.iter().copied().find(|&u| u != tx).unwrap_or(tx);
    }
    let rx_id = if rng.gen_bool(0.05) { "ghost".to_string() } else { rx.to_string() };
    let overrides = rng.gen_bool(0.6).then(|| {
        let mut o = BTreeMap::new();
        for _ in 0..rng.gen_range(1..4) {
            let t = rng.gen_range(0..graph.tiles.len());
            let tile = &graph.tiles[t];
            let ids = if tile.ports.len() < 2 || rng.gen_bool(0.3) {
                vec![]
            } else {
                let a = tile.ports[rng.gen_range(0..tile.ports.len())].port_id;
                let b = tile.ports[rng.gen_range(0..tile.ports.len())].port_id;
                if a == b {
                    vec![absorb_id(a)]
                } else {
                    vec![steer_id(a, b)]
                }
            };
            o.insert(tile.tile_id.clone(), ids);
        }
        o
    });
    let (lo, hi) = bounds;
    let rx_position = rng.gen_bool(0.4).then(|| {
        Vec3::new(rng.gen_range(lo.x..hi.x), rng.gen_range(lo.y..hi.y), rng.gen_range(lo.z..hi.z))
    });
    PdpRequest { tx_id: tx.to_string(), rx_id, overrides, rx_position }
}

/// The expected response line for a request, built straight from the
/// library: overrides replace whole tile entries, an empty list clears one.
pub fn expected_response(graph: &PweGraph, base: &Configuration, params: &ChannelParams, req: &PdpRequest) -> String {
    if graph.user_node(&req.tx_id).is_err() || graph.user_node(&req.rx_id).is_err() {
        return "unknown_user".into();
    }
    let mut config = base.clone();
    for (tile_id, ids) in req.overrides.iter().flatten() {
        let t = graph.tile_node(tile_id).unwrap();
        config.assignment.remove(&t);
        if let Some(m) = Configuration::from_function_ids(graph, &BTreeMap::from([(t, ids.clone())])).unwrap().assignment.remove(&t) {
            config.assignment.insert(t, m);
        }
    }
    let moved;
    let g = match req.rx_position {
        Some(p) => {
            moved = graph.with_user_position(&req.rx_id, p).unwrap();
            &moved
        }
        None => graph,
    };
    let pdp = compute_pdp(g, &config, &req.tx_id, &req.rx_id, params).unwrap();
    pdp_to_csv(&pdp)
}

/// Shortest distance by the reference search.
pub fn reference_distance(n: usize, edges: &[(usize, usize, f64)], s: usize, t: usize) -> Option<f64> {
    let mut g: DiGraph<(), f64> = DiGraph::new();
    let nodes: Vec<NodeIndex> = (0..n).map(|_| g.add_node(())).collect();
    for &(u, v, c) in edges {
        g.add_edge(nodes[u], nodes[v], c);
    }
    dijkstra(&g, nodes[s], Some(nodes[t]), |e| *e.weight()).get(&nodes[t]).copied()
}

/// Least-loss cost between the users over the reference search, with every
/// edge cost recomputed from the raw link geometry.
pub fn reference_least_loss(graph: &PweGraph, tx: usize, rx: usize, params: &ChannelParams) -> Option<f64> {
    let mut edges = Vec::new();
    for link in &graph.links {
        for (u, v) in [(link.a, link.b), (link.b, link.a)] {
            let endpoint_ok = |x: usize| graph.is_tile(x) || x == tx || x == rx;
            if !endpoint_ok(u) || !endpoint_ok(v) || v == tx || u == rx || (u == tx && v == rx) {
                continue;
            }
            if let Some(c) = link_cost_db(graph, u, v, rx, params) {
                edges.push((u, v, c));
            }
        }
    }
    reference_distance(graph.node_count(), &edges, tx, rx)
}

/// Every loop-free user-to-user route through tiles, with its summed link cost.
pub fn enumerate_routes(
    g: &PweGraph,
    at: usize,
    rx: usize,
    params: &ChannelParams,
    path: &mut Vec<usize>,
    cost: f64,
    out: &mut Vec<(f64, Vec<usize>)>,
) {
    for &(v, _) in g.neighbors(at) {
        if path.contains(&v) || (!g.is_tile(v) && v != rx) || (path.len() == 1 && v == rx) {
            continue;
        }
        let Some(c) = link_cost_db(g, at, v, rx, params) else { continue };
        path.push(v);
        if v == rx {
            out.push((cost + c, path.clone()));
        } else {
            enumerate_routes(g, v, rx, params, path, cost + c, out);
        }
        path.pop();
    }
}

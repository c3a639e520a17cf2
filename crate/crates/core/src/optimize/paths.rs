//! Path-based configuration: least-loss tile chains turned into STEER functions.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::channel::{spreading_constant, ChannelParams};
use crate::em::{merge, EmFunction, PortId};
use crate::geometry::Vec3;
use crate::graph::{Configuration, GraphError, NodeIdx, PweGraph};

use super::objective::{PathConstraints, UserObjective};
use super::routing::{k_shortest_paths, lexicographic_path, shortest_path, RoutingGraph};
use super::OptimizeError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathOptions {
    /// Paths kept per user pair.
    pub k: usize,
    /// Extra candidates generated per pair before re-scoring.
    pub candidate_slack: usize,
    /// Set every coated tile off the chosen paths to ABSORB.
    pub absorb_unused: bool,
}

impl Default for PathOptions {
    fn default() -> Self {
        PathOptions { k: 1, candidate_slack: 4, absorb_unused: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedPath {
    pub tx_id: String,
    pub rx_id: String,
    pub nodes: Vec<NodeIdx>,
    /// Routing cost in dB, including merge degradation at selection time.
    pub cost_db: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathConfiguration {
    pub configuration: Configuration,
    pub paths: Vec<SelectedPath>,
}

fn db(x: f64) -> f64 {
    -10.0 * x.log10()
}

fn segment_distance(p: Vec3, a: Vec3, b: Vec3) -> f64 {
    let ab = b - a;
    let len2 = ab.dot(ab);
    let t = if len2 > 0.0 { ((p - a).dot(ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
    (a + ab * t).distance(p)
}

/// Best steering efficiency a tile offers for waves arriving from `from`.
fn steer_efficiency(graph: &PweGraph, t: NodeIdx, from: NodeIdx) -> Option<f64> {
    graph.tiles[t].best_steer_efficiency(PortId(from as u32))
}

/// Directed loss graph for one user pair: users are endpoints only, virtual tiles are skipped.
pub fn loss_graph(
    graph: &PweGraph,
    tx: NodeIdx,
    rx: NodeIdx,
    constraints: &PathConstraints,
    params: &ChannelParams,
) -> Result<RoutingGraph, OptimizeError> {
    let k2 = spreading_constant(params.frequency_hz);
    let mut forbidden = HashSet::new();
    for (a, b) in &constraints.forbidden_links {
        let na = graph.node(a).ok_or_else(|| GraphError::UnknownTile(a.clone()))?;
        let nb = graph.node(b).ok_or_else(|| GraphError::UnknownTile(b.clone()))?;
        forbidden.insert((na, nb));
        forbidden.insert((nb, na));
    }
    let eaves: Vec<Vec3> = constraints
        .eavesdroppers
        .iter()
        .map(|e| graph.user_node(e).map(|n| graph.position(n)))
        .collect::<Result<_, _>>()?;
    let clearance = constraints.eavesdropper_clearance_m.unwrap_or(1.0);
    let mut g = RoutingGraph::new(graph.node_count());
    for link in &graph.links {
        for (u, v) in [(link.a, link.b), (link.b, link.a)] {
            let relay_ok = |n: NodeIdx| graph.is_tile(n) || n == tx || n == rx;
            if !relay_ok(u) || !relay_ok(v) || v == tx || u == rx || (u == tx && v == rx) {
                continue;
            }
            if forbidden.contains(&(u, v)) {
                continue;
            }
            let (pu, pv) = (graph.position(u), graph.position(v));
            if eaves.iter().any(|&e| segment_distance(e, pu, pv) < clearance) {
                continue;
            }
            let mut gain = link.nlos_factor / (k2 * link.length.powf(params.exponent(link.length)));
            if u == tx {
                gain *= graph.user(tx).antenna.gain(pv - pu);
            }
            if v == rx {
                gain *= graph.user(rx).antenna.gain(pu - pv);
                if let Some(p) = constraints.perpendicular {
                    let cos = (pv - pu).normalized().dot(p.trajectory.normalized());
                    if cos.abs() > p.tolerance {
                        continue;
                    }
                }
            } else {
                match steer_efficiency(graph, v, u) {
                    Some(e) => gain *= e,
                    None => continue,
                }
            }
            if gain > 0.0 {
                g.add_edge(u, v, db(gain).max(0.0));
            }
        }
    }
    Ok(g)
}

/// The STEER functions a path deploys, one per intermediate tile.
fn path_functions(graph: &PweGraph, nodes: &[NodeIdx]) -> Option<Vec<(NodeIdx, EmFunction)>> {
    nodes
        .windows(3)
        .map(|w| graph.tiles[w[1]].steer(PortId(w[0] as u32), PortId(w[2] as u32)).map(|f| (w[1], f)))
        .collect()
}

/// Extra loss (dB) from merging a path's functions into the tentative deployment,
/// or `None` when a per-tile function cap would be exceeded.
fn merge_penalty(
    deployed: &BTreeMap<NodeIdx, Vec<EmFunction>>,
    funcs: &[(NodeIdx, EmFunction)],
    cap: Option<usize>,
) -> Option<f64> {
    let mut penalty = 0.0;
    for (t, f) in funcs {
        let existing = deployed.get(t).map(Vec::as_slice).unwrap_or(&[]);
        if existing.iter().any(|e| e.function_id == f.function_id) {
            continue;
        }
        if cap.is_some_and(|c| existing.len() + 1 > c) {
            return None;
        }
        if existing.is_empty() {
            continue;
        }
        let mut all = existing.to_vec();
        all.push(f.clone());
        let m = merge(&all).ok()?;
        let kept = m.efficiency_of(&f.function_id) / f.efficiency;
        if kept <= 0.0 {
            return None;
        }
        penalty += db(kept);
    }
    Some(penalty)
}

fn finish(
    graph: &PweGraph,
    deployed: BTreeMap<NodeIdx, Vec<EmFunction>>,
    paths: Vec<SelectedPath>,
    absorb_unused: bool,
) -> Result<PathConfiguration, OptimizeError> {
    let used: HashSet<NodeIdx> = paths.iter().flat_map(|p| p.nodes.iter().copied()).collect();
    let mut configuration = if absorb_unused { Configuration::absorb_all(graph, &used) } else { Configuration::empty() };
    for (t, funcs) in deployed {
        configuration.assignment.insert(t, merge(&funcs).map_err(GraphError::from)?);
    }
    Ok(PathConfiguration { configuration, paths })
}

fn pair_nodes(graph: &PweGraph, o: &UserObjective) -> Result<(NodeIdx, NodeIdx), OptimizeError> {
    let tx = graph.user_node(&o.tx_id)?;
    let rx = graph.user_node(&o.rx_id)?;
    if tx == rx {
        return Err(GraphError::SameUser.into());
    }
    Ok((tx, rx))
}

/// k least-loss paths per user pair, most distant pairs first. Later
/// candidates are re-scored against the functions already deployed.
pub fn k_shortest_configure(
    graph: &PweGraph,
    objectives: &[UserObjective],
    params: &ChannelParams,
    options: &PathOptions,
) -> Result<PathConfiguration, OptimizeError> {
    let mut order: Vec<&UserObjective> = objectives.iter().collect();
    let mut dist = BTreeMap::new();
    for o in objectives {
        let (tx, rx) = pair_nodes(graph, o)?;
        dist.insert((o.tx_id.clone(), o.rx_id.clone()), graph.position(tx).distance(graph.position(rx)));
    }
    order.sort_by(|a, b| {
        let da = dist[&(a.tx_id.clone(), a.rx_id.clone())];
        let db_ = dist[&(b.tx_id.clone(), b.rx_id.clone())];
        db_.total_cmp(&da)
    });
    let mut deployed: BTreeMap<NodeIdx, Vec<EmFunction>> = BTreeMap::new();
    let mut paths = Vec::new();
    for o in order {
        let (tx, rx) = pair_nodes(graph, o)?;
        let g = loss_graph(graph, tx, rx, &o.constraints, params)?;
        let mut pool: Vec<(f64, Vec<NodeIdx>, Vec<(NodeIdx, EmFunction)>)> =
            k_shortest_paths(&g, tx, rx, options.k + options.candidate_slack)
                .into_iter()
                .filter_map(|r| {
                    let funcs = path_functions(graph, &r.nodes)?;
                    Some((r.cost(), r.nodes, funcs))
                })
                .collect();
        let mut chosen = 0;
        while chosen < options.k && !pool.is_empty() {
            let scored = pool
                .iter()
                .enumerate()
                .filter_map(|(i, (c, _, f))| {
                    merge_penalty(&deployed, f, o.constraints.max_functions_per_tile).map(|p| (i, c + p))
                })
                .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            let Some((i, cost)) = scored else { break };
            let (_, nodes, funcs) = pool.remove(i);
            for (t, f) in funcs {
                let e = deployed.entry(t).or_default();
                if !e.iter().any(|x| x.function_id == f.function_id) {
                    e.push(f);
                }
            }
            paths.push(SelectedPath { tx_id: o.tx_id.clone(), rx_id: o.rx_id.clone(), nodes, cost_db: cost });
            chosen += 1;
        }
        if chosen == 0 {
            return Err(OptimizeError::NoFeasiblePath { tx: o.tx_id.clone(), rx: o.rx_id.clone() });
        }
    }
    finish(graph, deployed, paths, options.absorb_unused)
}

/// One least-loss path per pair, closest pairs first; equal-loss choices
/// prefer tiles already serving earlier pairs.
pub fn lexicographic_greedy(
    graph: &PweGraph,
    objectives: &[UserObjective],
    params: &ChannelParams,
    absorb_unused: bool,
) -> Result<PathConfiguration, OptimizeError> {
    let counted: Vec<bool> = (0..graph.node_count()).map(|n| graph.is_tile(n)).collect();
    let mut staged = Vec::new();
    for o in objectives {
        let (tx, rx) = pair_nodes(graph, o)?;
        let g = loss_graph(graph, tx, rx, &o.constraints, params)?;
        let base = shortest_path(&g, tx, rx, &[], &HashSet::new())
            .ok_or_else(|| OptimizeError::NoFeasiblePath { tx: o.tx_id.clone(), rx: o.rx_id.clone() })?;
        staged.push((base.cost_q, o, g, tx, rx));
    }
    staged.sort_by_key(|s| s.0);
    let mut reused = vec![false; graph.node_count()];
    let mut deployed: BTreeMap<NodeIdx, Vec<EmFunction>> = BTreeMap::new();
    let mut paths = Vec::new();
    for (_, o, g, tx, rx) in staged {
        let route = lexicographic_path(&g, tx, rx, &reused, &counted)
            .map(|(r, _)| r)
            .ok_or_else(|| OptimizeError::NoFeasiblePath { tx: o.tx_id.clone(), rx: o.rx_id.clone() })?;
        let funcs = path_functions(graph, &route.nodes)
            .ok_or_else(|| OptimizeError::NoFeasiblePath { tx: o.tx_id.clone(), rx: o.rx_id.clone() })?;
        for &n in &route.nodes {
            reused[n] = true;
        }
        for (t, f) in funcs {
            let e = deployed.entry(t).or_default();
            if !e.iter().any(|x| x.function_id == f.function_id) {
                e.push(f);
            }
        }
        let cost_db = route.cost();
        paths.push(SelectedPath { tx_id: o.tx_id.clone(), rx_id: o.rx_id.clone(), nodes: route.nodes, cost_db });
    }
    finish(graph, deployed, paths, absorb_unused)
}

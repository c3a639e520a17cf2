//! Stochastic explorer: waves walk the graph sampling tile functions from a
//! learned weight table; strong arrivals reinforce the choices they made.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{spreading_constant, w_to_dbm, ChannelParams};
use crate::em::{self, EmFunction, PortId};
use crate::graph::{Configuration, GraphError, NodeIdx, PweGraph};

use super::objective::UserObjective;
use super::OptimizeError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExplorerOptions {
    pub seed: u64,
    pub rounds: usize,
    /// Waves launched per first-contact tile and round.
    pub waves_per_round: usize,
    pub max_hops: usize,
    /// Largest number of children a wave spawns at one tile.
    pub spawn_fanout: usize,
    /// Waves weaker than this are discarded.
    pub power_threshold_dbm: f64,
    /// Arrivals per receiver that reinforce the weights each round.
    pub top_n: usize,
    /// Deposit scale Q.
    pub deposit: f64,
    /// Fraction of every weight that evaporates per round.
    pub decay: f64,
}

impl Default for ExplorerOptions {
    fn default() -> Self {
        ExplorerOptions {
            seed: 0,
            rounds: 20,
            waves_per_round: 8,
            max_hops: 6,
            spawn_fanout: 2,
            power_threshold_dbm: -200.0,
            top_n: 4,
            deposit: 1.0,
            decay: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExplorerRoute {
    pub rx_id: String,
    pub nodes: Vec<NodeIdx>,
    /// Received power, W.
    pub power: f64,
}

/// Key of the weight table: (tile, node the wave came from).
pub type ChoiceKey = (NodeIdx, NodeIdx);

#[derive(Debug, Clone, PartialEq)]
pub struct ExplorerResult {
    pub configuration: Configuration,
    /// Strongest arrivals of the last round that had any, per receiver,
    /// strongest first.
    pub top_routes: Vec<ExplorerRoute>,
    /// Arrival count per node route over all rounds.
    pub route_counts: BTreeMap<Vec<NodeIdx>, usize>,
    /// Arrival count per route in the last round only.
    pub final_route_counts: BTreeMap<Vec<NodeIdx>, usize>,
    pub weights: BTreeMap<ChoiceKey, Vec<(String, f64)>>,
}

#[derive(Clone)]
struct Wave {
    node: NodeIdx,
    from: NodeIdx,
    power: f64,
    nodes: Vec<NodeIdx>,
    choices: Vec<(ChoiceKey, usize)>,
}

struct Arrival {
    rx: NodeIdx,
    power: f64,
    nodes: Vec<NodeIdx>,
    choices: Vec<(ChoiceKey, usize)>,
}

fn link_gain(graph: &PweGraph, a: NodeIdx, b: NodeIdx, k2: f64, params: &ChannelParams) -> f64 {
    let Some(l) = graph.link_between(a, b) else { return 0.0 };
    let link = &graph.links[l];
    link.nlos_factor / (k2 * link.length.powf(params.exponent(link.length)))
}

struct Table {
    entries: BTreeMap<ChoiceKey, (Vec<EmFunction>, Vec<f64>)>,
}

impl Table {
    fn slot(&mut self, graph: &PweGraph, key: ChoiceKey) -> &mut (Vec<EmFunction>, Vec<f64>) {
        self.entries.entry(key).or_insert_with(|| {
            let funcs = graph.tiles[key.0].functions_for_input(PortId(key.1 as u32));
            let w = vec![1.0; funcs.len()];
            (funcs, w)
        })
    }
}

fn sample(rng: &mut ChaCha8Rng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut x = rng.gen::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if x < *w {
            return i;
        }
        x -= w;
    }
    weights.len() - 1
}

pub fn explorer_search(
    graph: &PweGraph,
    objectives: &[UserObjective],
    params: &ChannelParams,
    options: &ExplorerOptions,
) -> Result<ExplorerResult, OptimizeError> {
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let k2 = spreading_constant(params.frequency_hz);
    let threshold = crate::channel::dbm_to_w(options.power_threshold_dbm);
    let mut pairs = Vec::new();
    for o in objectives {
        let tx = graph.user_node(&o.tx_id)?;
        let rx = graph.user_node(&o.rx_id)?;
        if tx == rx {
            return Err(GraphError::SameUser.into());
        }
        pairs.push((tx, rx));
    }
    let mut table = Table { entries: BTreeMap::new() };
    let mut route_counts: BTreeMap<Vec<NodeIdx>, usize> = BTreeMap::new();
    let mut final_route_counts = BTreeMap::new();
    let mut last_top: Vec<Arrival> = Vec::new();
    for _round in 0..options.rounds {
        let mut arrivals: Vec<Arrival> = Vec::new();
        for &(tx, rx) in &pairs {
            let tx_pos = graph.position(tx);
            let mut frontier: Vec<Wave> = Vec::new();
            for &(t, _) in graph.neighbors(tx) {
                if !graph.is_tile(t) {
                    continue;
                }
                let g = graph.user(tx).antenna.gain(graph.position(t) - tx_pos) * link_gain(graph, tx, t, k2, params);
                let p = params.tx_power_w * g;
                if p < threshold {
                    continue;
                }
                for _ in 0..options.waves_per_round {
                    frontier.push(Wave { node: t, from: tx, power: p, nodes: vec![tx, t], choices: vec![] });
                }
            }
            // Advance every live wave one hop per step.
            for _hop in 0..options.max_hops {
                let mut next = Vec::new();
                for w in frontier {
                    let key = (w.node, w.from);
                    let (funcs, weights) = table.slot(graph, key);
                    if funcs.is_empty() {
                        continue;
                    }
                    let pick = sample(&mut rng, weights);
                    let merged = em::merge(std::slice::from_ref(&funcs[pick])).map_err(GraphError::from)?;
                    let out = em::forward(&graph.tile_view(w.node), &merged, PortId(w.from as u32))
                        .map_err(GraphError::from)?;
                    let mut outs: Vec<(PortId, f64)> = out.into_iter().collect();
                    outs.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
                    for (port, frac) in outs.into_iter().take(options.spawn_fanout) {
                        let v = port.0 as usize;
                        if w.nodes.contains(&v) {
                            continue;
                        }
                        let mut p = w.power * frac * link_gain(graph, w.node, v, k2, params);
                        let mut nodes = w.nodes.clone();
                        nodes.push(v);
                        let mut choices = w.choices.clone();
                        choices.push((key, pick));
                        if !graph.is_tile(v) {
                            if v == rx {
                                p *= graph.user(rx).antenna.gain(graph.position(w.node) - graph.position(rx));
                                if p >= threshold {
                                    arrivals.push(Arrival { rx, power: p, nodes, choices });
                                }
                            }
                            continue;
                        }
                        if p >= threshold {
                            next.push(Wave { node: v, from: w.node, power: p, nodes, choices });
                        }
                    }
                }
                frontier = next;
                if frontier.is_empty() {
                    break;
                }
            }
        }
        for a in &arrivals {
            *route_counts.entry(a.nodes.clone()).or_default() += 1;
        }
        final_route_counts = BTreeMap::new();
        for a in &arrivals {
            *final_route_counts.entry(a.nodes.clone()).or_default() += 1;
        }
        for (_, w) in table.entries.values_mut() {
            for x in w.iter_mut() {
                *x *= 1.0 - options.decay;
            }
        }
        let best = arrivals.iter().map(|a| a.power).fold(0.0, f64::max);
        let mut top = Vec::new();
        for &(_, rx) in &pairs {
            let mut mine: Vec<Arrival> = Vec::new();
            for a in arrivals.iter().filter(|a| a.rx == rx) {
                mine.push(Arrival { rx, power: a.power, nodes: a.nodes.clone(), choices: a.choices.clone() });
            }
            mine.sort_by(|a, b| b.power.total_cmp(&a.power));
            mine.truncate(options.top_n);
            top.extend(mine);
        }
        for a in &top {
            let delta = options.deposit * a.power / best;
            for (key, i) in &a.choices {
                table.slot(graph, *key).1[*i] += delta;
            }
        }
        if !top.is_empty() {
            log::debug!("explorer best arrival {:.1} dBm", w_to_dbm(best));
            last_top = top;
        }
    }
    if route_counts.is_empty() {
        return Err(OptimizeError::NoArrivals);
    }
    let mut per_tile: BTreeMap<NodeIdx, Vec<EmFunction>> = BTreeMap::new();
    for a in &last_top {
        for (key, _) in &a.choices {
            let (funcs, w) = table.slot(graph, *key);
            let best = (0..w.len()).max_by(|&a, &b| w[a].total_cmp(&w[b]).then(b.cmp(&a))).unwrap();
            let f = funcs[best].clone();
            let e = per_tile.entry(key.0).or_default();
            if !e.iter().any(|x| x.function_id == f.function_id) {
                e.push(f);
            }
        }
    }
    let mut configuration = Configuration::empty();
    for (t, funcs) in per_tile {
        configuration.assignment.insert(t, em::merge(&funcs).map_err(GraphError::from)?);
    }
    let weights = table
        .entries
        .into_iter()
        .map(|(k, (funcs, w))| (k, funcs.into_iter().map(|f| f.function_id).zip(w).collect()))
        .collect();
    let top_routes = last_top
        .iter()
        .map(|a| ExplorerRoute { rx_id: graph.node_id(a.rx).to_string(), nodes: a.nodes.clone(), power: a.power })
        .collect();
    Ok(ExplorerResult { configuration, top_routes, route_counts, final_route_counts, weights })
}

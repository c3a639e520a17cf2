//! Wall-route neural configuration: each wall on the route is a layer, each
//! tile a neuron, and trained weights are mapped back to tile functions.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::channel::{spreading_constant, ChannelParams};
use crate::em::{self, PortId};
use crate::graph::{Configuration, GraphError, NodeIdx, PweGraph};

use super::objective::UserObjective;
use super::OptimizeError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BackpropOptions {
    pub learning_rate: f64,
    pub max_iterations: usize,
    /// Stop once the loss improves by less than this between iterations.
    pub tolerance: f64,
    /// Neurons whose activation falls below this fraction of the layer maximum stay ∅.
    pub activity_floor: f64,
}

impl Default for BackpropOptions {
    fn default() -> Self {
        BackpropOptions { learning_rate: 0.5, max_iterations: 2000, tolerance: 1e-12, activity_floor: 1e-3 }
    }
}

/// Layered network over a wall route. Layer 0 is the transmitter, the last
/// layer holds the receiver followed by any eavesdroppers.
#[derive(Debug, Clone, PartialEq)]
pub struct WallMlp {
    pub layers: Vec<Vec<NodeIdx>>,
    /// `gains[k][i][j]`: normalised link gain from layer k neuron i to layer k+1 neuron j.
    pub gains: Vec<Vec<Vec<f64>>>,
    pub target: Vec<f64>,
}

pub type Weights = Vec<Vec<Vec<f64>>>;

fn relu(x: f64) -> f64 {
    x.max(0.0)
}

impl WallMlp {
    pub fn initial_weights(&self) -> Weights {
        self.gains
            .iter()
            .map(|g| {
                g.iter()
                    .map(|row| {
                        let live = row.iter().filter(|&&x| x > 0.0).count().max(1) as f64;
                        row.iter().map(|&x| if x > 0.0 { 1.0 / live } else { 0.0 }).collect()
                    })
                    .collect()
            })
            .collect()
    }

    /// Pre-activations and activations of every layer.
    pub fn forward(&self, w: &Weights) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let mut z = vec![vec![1.0]];
        let mut a = vec![vec![1.0]];
        for k in 0..self.gains.len() {
            let width = self.layers[k + 1].len();
            let mut zn = vec![0.0; width];
            for (i, ai) in a[k].iter().enumerate() {
                for j in 0..width {
                    zn[j] += ai * self.gains[k][i][j] * w[k][i][j];
                }
            }
            a.push(zn.iter().map(|&x| relu(x)).collect());
            z.push(zn);
        }
        (z, a)
    }

    pub fn loss(&self, w: &Weights) -> f64 {
        let (_, a) = self.forward(w);
        a.last().unwrap().iter().zip(&self.target).map(|(y, t)| 0.5 * (y - t) * (y - t)).sum()
    }

    pub fn gradient(&self, w: &Weights) -> Weights {
        let (z, a) = self.forward(w);
        let depth = self.gains.len();
        let step = |x: f64| if x > 0.0 { 1.0 } else { 0.0 };
        let mut delta: Vec<f64> =
            a[depth].iter().zip(&self.target).zip(&z[depth]).map(|((y, t), zz)| (y - t) * step(*zz)).collect();
        let mut grad: Weights = w.iter().map(|l| l.iter().map(|r| vec![0.0; r.len()]).collect()).collect();
        for k in (0..depth).rev() {
            let mut prev = vec![0.0; self.layers[k].len()];
            for i in 0..self.layers[k].len() {
                for j in 0..self.layers[k + 1].len() {
                    let g = self.gains[k][i][j];
                    grad[k][i][j] = a[k][i] * g * delta[j];
                    prev[i] += g * w[k][i][j] * delta[j];
                }
                prev[i] *= if k == 0 { 1.0 } else { step(z[k][i]) };
            }
            delta = prev;
        }
        grad
    }
}

/// Euclidean projection onto {w ≥ 0, Σw ≤ 1}.
pub fn project_capped_simplex(v: &mut [f64]) {
    for x in v.iter_mut() {
        *x = x.max(0.0);
    }
    if v.iter().sum::<f64>() <= 1.0 {
        return;
    }
    let mut s: Vec<f64> = v.to_vec();
    s.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (i, x) in s.iter().enumerate() {
        cum += x;
        let t = (cum - 1.0) / (i + 1) as f64;
        if x - t > 0.0 {
            theta = t;
        }
    }
    for x in v.iter_mut() {
        *x = (*x - theta).max(0.0);
    }
}

/// Shortest sequence of surfaces carrying a tile chain from `tx` to `rx`.
pub fn wall_route(graph: &PweGraph, tx: NodeIdx, rx: NodeIdx) -> Result<Vec<String>, OptimizeError> {
    let surface = |t: NodeIdx| graph.tiles[t].placement.surface_id.clone();
    let coated = |t: NodeIdx| graph.is_tile(t) && !graph.tiles[t].is_virtual();
    let touching = |u: NodeIdx| -> BTreeSet<String> {
        graph.neighbors(u).iter().map(|&(n, _)| n).filter(|&n| coated(n)).map(surface).collect()
    };
    let (starts, ends) = (touching(tx), touching(rx));
    let mut adj: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for l in &graph.links {
        if coated(l.a) && coated(l.b) {
            adj.entry(surface(l.a)).or_default().insert(surface(l.b));
            adj.entry(surface(l.b)).or_default().insert(surface(l.a));
        }
    }
    let mut prev: BTreeMap<String, Option<String>> = BTreeMap::new();
    let mut queue = VecDeque::new();
    for s in &starts {
        prev.insert(s.clone(), None);
        queue.push_back(s.clone());
    }
    while let Some(s) = queue.pop_front() {
        if ends.contains(&s) {
            let mut route = vec![s.clone()];
            let mut cur = s;
            while let Some(Some(p)) = prev.get(&cur) {
                route.push(p.clone());
                cur = p.clone();
            }
            route.reverse();
            return Ok(route);
        }
        for n in adj.get(&s).into_iter().flatten() {
            if !prev.contains_key(n) {
                prev.insert(n.clone(), Some(s.clone()));
                queue.push_back(n.clone());
            }
        }
    }
    Err(OptimizeError::EmptyWallRoute)
}

fn link_gain(graph: &PweGraph, a: NodeIdx, b: NodeIdx, k2: f64, params: &ChannelParams) -> f64 {
    let Some(l) = graph.link_between(a, b) else { return 0.0 };
    let link = &graph.links[l];
    let mut g = link.nlos_factor / (k2 * link.length.powf(params.exponent(link.length)));
    for (u, other) in [(a, b), (b, a)] {
        if !graph.is_tile(u) {
            g *= graph.user(u).antenna.gain(graph.position(other) - graph.position(u));
        }
    }
    g
}

pub fn build_mlp(
    graph: &PweGraph,
    objective: &UserObjective,
    params: &ChannelParams,
) -> Result<(WallMlp, Vec<String>), OptimizeError> {
    let tx = graph.user_node(&objective.tx_id)?;
    let rx = graph.user_node(&objective.rx_id)?;
    if tx == rx {
        return Err(GraphError::SameUser.into());
    }
    let route = wall_route(graph, tx, rx)?;
    let mut layers = vec![vec![tx]];
    for s in &route {
        layers.push(
            (0..graph.tiles.len())
                .filter(|&t| !graph.tiles[t].is_virtual() && &graph.tiles[t].placement.surface_id == s)
                .collect(),
        );
    }
    let mut out = vec![rx];
    for e in &objective.constraints.eavesdroppers {
        out.push(graph.user_node(e)?);
    }
    layers.push(out);
    let k2 = spreading_constant(params.frequency_hz);
    let gains = layers
        .windows(2)
        .map(|w| {
            let raw: Vec<Vec<f64>> =
                w[0].iter().map(|&a| w[1].iter().map(|&b| link_gain(graph, a, b, k2, params)).collect()).collect();
            let max = raw.iter().flatten().copied().fold(0.0, f64::max);
            raw.into_iter().map(|r| r.into_iter().map(|g| if max > 0.0 { g / max } else { 0.0 }).collect()).collect()
        })
        .collect();
    let mut target = vec![0.0; layers.last().unwrap().len()];
    target[0] = 1.0;
    Ok((WallMlp { layers, gains, target }, route))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackpropResult {
    pub configuration: Configuration,
    pub wall_route: Vec<String>,
    pub loss_history: Vec<f64>,
    pub converged: bool,
    pub weights: Weights,
}

pub fn train(mlp: &WallMlp, options: &BackpropOptions) -> (Weights, Vec<f64>, bool) {
    let mut w = mlp.initial_weights();
    let mut history = vec![mlp.loss(&w)];
    let mut converged = false;
    for _ in 0..options.max_iterations {
        let g = mlp.gradient(&w);
        for (k, layer) in w.iter_mut().enumerate() {
            for (i, row) in layer.iter_mut().enumerate() {
                for (j, x) in row.iter_mut().enumerate() {
                    if mlp.gains[k][i][j] > 0.0 {
                        *x -= options.learning_rate * g[k][i][j];
                    }
                }
                project_capped_simplex(row);
            }
        }
        let loss = mlp.loss(&w);
        let prev = *history.last().unwrap();
        history.push(loss);
        if (prev - loss).abs() < options.tolerance {
            converged = true;
            break;
        }
    }
    (w, history, converged)
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

pub fn backprop_configure(
    graph: &PweGraph,
    objective: &UserObjective,
    params: &ChannelParams,
    options: &BackpropOptions,
) -> Result<BackpropResult, OptimizeError> {
    let (mlp, wall_route) = build_mlp(graph, objective, params)?;
    let (weights, loss_history, converged) = train(&mlp, options);
    if !converged {
        log::warn!("wall-route training stopped after {} iterations without converging", options.max_iterations);
    }
    let (_, acts) = mlp.forward(&weights);
    let mut configuration = Configuration::empty();
    for k in 1..mlp.layers.len() - 1 {
        let layer_max = acts[k].iter().copied().fold(0.0, f64::max);
        for (i, &t) in mlp.layers[k].iter().enumerate() {
            if layer_max <= 0.0 || acts[k][i] < options.activity_floor * layer_max {
                continue;
            }
            let incoming = |p: usize| acts[k - 1][p] * mlp.gains[k - 1][p][i] * weights[k - 1][p][i];
            let pred = (0..mlp.layers[k - 1].len()).max_by(|&a, &b| incoming(a).total_cmp(&incoming(b))).unwrap();
            let in_port = PortId(mlp.layers[k - 1][pred] as u32);
            let next = &mlp.layers[k + 1];
            let view = graph.tile_view(t);
            let mut best: Option<(f64, em::EmFunction)> = None;
            for f in graph.tiles[t].functions_for_input(in_port) {
                let merged = em::merge(std::slice::from_ref(&f)).map_err(GraphError::from)?;
                let out = em::forward(&view, &merged, in_port).map_err(GraphError::from)?;
                let profile: Vec<f64> = next.iter().map(|&n| out.get(&PortId(n as u32)).copied().unwrap_or(0.0)).collect();
                let sim = cosine(&weights[k][i], &profile);
                if best.as_ref().map_or(sim > 0.0, |(s, _)| sim > *s) {
                    best = Some((sim, f));
                }
            }
            if let Some((_, f)) = best {
                configuration.assignment.insert(t, em::merge(&[f]).map_err(GraphError::from)?);
            }
        }
    }
    Ok(BackpropResult { configuration, wall_route, loss_history, converged, weights })
}

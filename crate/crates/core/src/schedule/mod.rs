//! Consistent update scheduling: move the PWE between configurations in
//! rounds so that no interleaving of tile updates loops or drops a wave.

pub mod consistency;
pub mod exact;
pub mod model;
pub mod rounding;
pub mod simplex;

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::PweGraph;

pub use consistency::{validate_consistency, ConsistencyReport, Violation};
pub use exact::{solve_exact, ExactLimits};
pub use model::{build_model, MilpModel, Row, RowFamily, Sense, Var, VarKind};
pub use rounding::{lp_relaxation, relax_and_round, LpRelaxation};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScheduleError {
    #[error("pair endpoint {0} is not a node of the update graph")]
    UnknownEndpoint(usize),
    #[error("at least one round is required")]
    RoundsNonPositive,
    #[error("invalid update problem: {0}")]
    InvalidProblem(String),
    #[error("no schedule satisfies the constraints")]
    Infeasible,
    #[error("instance exceeds exact-solver limits ({0}); use the relaxation")]
    LimitExceeded(String),
    #[error("no feasible sample after {0} attempts")]
    NoFeasibleSample(usize),
    #[error("linear relaxation failed: {0}")]
    Lp(String),
}

/// Directed graph the scheduler routes over.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateGraph {
    pub node_count: usize,
    pub arcs: Vec<(usize, usize)>,
    pub labels: Vec<String>,
}

impl UpdateGraph {
    /// Both directions of every undirected edge; labels are node indices.
    pub fn undirected(node_count: usize, edges: &[(usize, usize)]) -> Self {
        let mut arcs = BTreeSet::new();
        for &(u, v) in edges {
            if u != v {
                arcs.insert((u, v));
                arcs.insert((v, u));
            }
        }
        UpdateGraph { node_count, arcs: arcs.into_iter().collect(), labels: (0..node_count).map(|i| i.to_string()).collect() }
    }

    pub fn from_pwe(graph: &PweGraph) -> Self {
        let edges: Vec<(usize, usize)> = graph.links.iter().map(|l| (l.a, l.b)).collect();
        let mut g = UpdateGraph::undirected(graph.node_count(), &edges);
        g.labels = (0..graph.node_count()).map(|n| graph.node_id(n).to_string()).collect();
        g
    }

    pub fn successors(&self) -> Vec<Vec<usize>> {
        let mut s = vec![Vec::new(); self.node_count];
        for &(u, v) in &self.arcs {
            s[u].push(v);
        }
        for l in &mut s {
            l.sort_unstable();
        }
        s
    }

    pub fn has_arc(&self, u: usize, v: usize) -> bool {
        self.arcs.binary_search(&(u, v)).is_ok()
    }

    /// Hop distances over arcs; unreachable pairs get `node_count`.
    pub fn hop_distances(&self) -> Vec<Vec<usize>> {
        let succ = self.successors();
        let n = self.node_count;
        (0..n)
            .map(|s| {
                let mut d = vec![n; n];
                d[s] = 0;
                let mut q = VecDeque::from([s]);
                while let Some(u) = q.pop_front() {
                    for &v in &succ[u] {
                        if d[v] == n {
                            d[v] = d[u] + 1;
                            q.push_back(v);
                        }
                    }
                }
                d
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateProblem {
    pub graph: UpdateGraph,
    /// Activity before the first round.
    pub initial_active: Vec<bool>,
    /// (source, sink) pairs to serve in each round.
    pub pairs_per_round: Vec<Vec<(usize, usize)>>,
}

impl UpdateProblem {
    pub fn rounds(&self) -> usize {
        self.pairs_per_round.len()
    }

    pub fn validate(&self) -> Result<(), ScheduleError> {
        let n = self.graph.node_count;
        if self.pairs_per_round.is_empty() {
            return Err(ScheduleError::RoundsNonPositive);
        }
        if self.initial_active.len() != n || self.graph.labels.len() != n {
            return Err(ScheduleError::InvalidProblem("per-node vectors do not match node count".into()));
        }
        if let Some(&(u, v)) = self.graph.arcs.iter().find(|&&(u, v)| u >= n || v >= n || u == v) {
            return Err(ScheduleError::InvalidProblem(format!("bad arc ({u},{v})")));
        }
        if self.graph.arcs.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ScheduleError::InvalidProblem("arcs must be sorted and unique".into()));
        }
        for round in &self.pairs_per_round {
            let mut seen = BTreeSet::new();
            for &(s, d) in round {
                for x in [s, d] {
                    if x >= n {
                        return Err(ScheduleError::UnknownEndpoint(x));
                    }
                }
                if s == d || !seen.insert((s, d)) {
                    return Err(ScheduleError::InvalidProblem(format!("pair ({s},{d}) repeated or degenerate")));
                }
            }
        }
        Ok(())
    }

    /// Index of `pair` in round `t − 1`, if the pair continues into round `t`.
    pub fn continuing(&self, t: usize, pair: (usize, usize)) -> Option<usize> {
        if t == 0 {
            return None;
        }
        self.pairs_per_round[t - 1].iter().position(|&p| p == pair)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeUpdate {
    pub node: usize,
    pub label: String,
    pub active: bool,
    /// (from, to) hops steered through the node in this round.
    pub steering: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleRound {
    /// Nodes whose activity or steering changes entering this round.
    pub updates: Vec<NodeUpdate>,
    pub active: Vec<bool>,
    /// One node path per pair of the round, in pair order.
    pub paths: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UpdateSchedule {
    pub rounds: Vec<ScheduleRound>,
    pub touches: usize,
    pub consistent: bool,
}

pub const SCHEDULE_CSV_HEADER: &str = "round,tile_id,active,function";

impl UpdateSchedule {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(SCHEDULE_CSV_HEADER);
        s.push('\n');
        for (t, r) in self.rounds.iter().enumerate() {
            for u in &r.updates {
                let f = if !u.active {
                    "off".to_string()
                } else if u.steering.is_empty() {
                    "on".to_string()
                } else {
                    u.steering.iter().map(|(a, b)| format!("steer:{a}>{b}")).collect::<Vec<_>>().join("+")
                };
                s.push_str(&format!("{},{},{},{}\n", t + 1, u.label, u.active, f));
            }
        }
        s
    }
}

fn steering_of(paths: &[Vec<usize>], node: usize) -> Vec<(usize, usize)> {
    let mut v: Vec<(usize, usize)> = paths
        .iter()
        .flat_map(|p| p.windows(3).filter(|w| w[1] == node).map(|w| (w[0], w[2])))
        .collect();
    v.sort_unstable();
    v.dedup();
    v
}

/// Topological positions of the nodes under the given arcs, or `None` on a cycle.
pub fn topological_order(n: usize, arcs: &BTreeSet<(usize, usize)>) -> Option<Vec<usize>> {
    let mut indeg = vec![0usize; n];
    let mut succ = vec![Vec::new(); n];
    for &(u, v) in arcs {
        indeg[v] += 1;
        succ[u].push(v);
    }
    let mut ready: BTreeSet<usize> = (0..n).filter(|&u| indeg[u] == 0).collect();
    let mut pos = vec![0; n];
    let mut k = 0;
    while let Some(u) = ready.pop_first() {
        pos[u] = k;
        k += 1;
        for &v in &succ[u] {
            indeg[v] -= 1;
            if indeg[v] == 0 {
                ready.insert(v);
            }
        }
    }
    (k == n).then_some(pos)
}

pub(crate) fn path_arcs(path: &[usize]) -> impl Iterator<Item = (usize, usize)> + '_ {
    path.windows(2).map(|w| (w[0], w[1]))
}

/// Assemble a schedule from per-round activity and paths.
pub(crate) fn assemble(problem: &UpdateProblem, activity: &[Vec<bool>], paths: &[Vec<Vec<usize>>]) -> UpdateSchedule {
    let mut rounds = Vec::new();
    let mut prev_active = problem.initial_active.clone();
    let mut prev_paths: Vec<Vec<usize>> = Vec::new();
    let mut touches = 0;
    for (t, act) in activity.iter().enumerate() {
        let mut updates = Vec::new();
        for u in 0..problem.graph.node_count {
            let steer = steering_of(&paths[t], u);
            let changed = act[u] != prev_active[u];
            touches += usize::from(changed);
            if changed || (act[u] && steer != steering_of(&prev_paths, u)) {
                updates.push(NodeUpdate { node: u, label: problem.graph.labels[u].clone(), active: act[u], steering: steer });
            }
        }
        rounds.push(ScheduleRound { updates, active: act.clone(), paths: paths[t].clone() });
        prev_active = act.clone();
        prev_paths = paths[t].clone();
    }
    let mut s = UpdateSchedule { rounds, touches, consistent: false };
    s.consistent = validate_consistency(problem, &s).consistent;
    s
}

/// Full variable assignment for a schedule, used to check it against every model row.
pub fn schedule_assignment(model: &MilpModel, schedule: &UpdateSchedule) -> Vec<f64> {
    let p = &model.problem;
    let g = &p.graph;
    let n = g.node_count;
    let mut x = vec![0.0; model.vars.len()];
    let hops = g.hop_distances();
    for (t, round) in schedule.rounds.iter().enumerate() {
        let ix = &model.index;
        let prev: Vec<bool> = if t == 0 { p.initial_active.clone() } else { schedule.rounds[t - 1].active.clone() };
        for u in 0..n {
            x[ix.activity[t][u]] = f64::from(u8::from(round.active[u]));
            x[ix.change[t][u]] = f64::from(u8::from(round.active[u] != prev[u]));
        }
        let mut used = BTreeSet::new();
        for (k, path) in round.paths.iter().enumerate() {
            for a in path_arcs(path) {
                used.insert(a);
                if let Ok(e) = g.arcs.binary_search(&a) {
                    x[ix.flow[t][k][e]] = 1.0;
                }
            }
        }
        for (e, a) in g.arcs.iter().enumerate() {
            if used.contains(a) {
                x[ix.link[t][e]] = 1.0;
            }
        }
        if let Some(order) = topological_order(n, &used) {
            for u in 0..n {
                x[ix.order[t][u]] = order[u] as f64;
            }
        }
        for (&(u, v), &i) in &ix.distance[t] {
            x[i] = hops[u][v] as f64;
        }
        for (&(u, v, w), &i) in &ix.aux[t] {
            x[i] = f64::from(u8::from(hops[u][v] == hops[u][w] + hops[w][v]));
        }
    }
    x[model.index.touches] = schedule.touches as f64;
    x
}

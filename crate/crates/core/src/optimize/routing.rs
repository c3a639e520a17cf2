//! Weighted directed routing graphs: Dijkstra, loopless k-shortest paths and
//! the lexicographic (cost, fresh tiles) variant used for tile reuse.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};

/// Edge costs are summed in micro-dB integers so equal-cost routes compare exactly.
const COST_SCALE: f64 = 1e6;

pub fn quantize(cost: f64) -> i64 {
    (cost * COST_SCALE).round() as i64
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RoutingGraph {
    adj: Vec<Vec<(usize, i64)>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Route {
    pub nodes: Vec<usize>,
    /// Quantised cost, see [`Route::cost`].
    pub cost_q: i64,
}

impl Route {
    pub fn cost(&self) -> f64 {
        self.cost_q as f64 / COST_SCALE
    }
}

impl RoutingGraph {
    pub fn new(nodes: usize) -> Self {
        RoutingGraph { adj: vec![Vec::new(); nodes] }
    }

    pub fn node_count(&self) -> usize {
        self.adj.len()
    }

    /// Add or replace the directed edge `u → v`. Costs must be non-negative.
    pub fn add_edge(&mut self, u: usize, v: usize, cost: f64) {
        assert!(cost >= 0.0 && cost.is_finite(), "edge cost must be finite and non-negative");
        let q = quantize(cost);
        match self.adj[u].iter_mut().find(|(n, _)| *n == v) {
            Some(e) => e.1 = q,
            None => self.adj[u].push((v, q)),
        }
    }

    pub fn out_edges(&self, u: usize) -> impl Iterator<Item = (usize, i64)> + '_ {
        self.adj[u].iter().copied()
    }

    pub fn edge_cost_q(&self, u: usize, v: usize) -> Option<i64> {
        self.adj[u].iter().find(|(n, _)| *n == v).map(|e| e.1)
    }

    pub fn path_cost_q(&self, nodes: &[usize]) -> Option<i64> {
        nodes.windows(2).map(|w| self.edge_cost_q(w[0], w[1])).sum()
    }
}

#[derive(PartialEq, Eq)]
struct Entry<K> {
    key: K,
    node: usize,
}

impl<K: Ord> Ord for Entry<K> {
    fn cmp(&self, other: &Self) -> Ordering {
        other.key.cmp(&self.key).then_with(|| other.node.cmp(&self.node))
    }
}

impl<K: Ord> PartialOrd for Entry<K> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Generic label-setting search; `step` maps (label, target node, edge cost) to the new label.
fn label_search<K: Ord + Copy>(
    g: &RoutingGraph,
    s: usize,
    t: usize,
    start: K,
    banned_nodes: &[bool],
    banned_edges: &HashSet<(usize, usize)>,
    step: impl Fn(K, usize, i64) -> K,
) -> Option<(Vec<usize>, K)> {
    let n = g.node_count();
    let mut best: Vec<Option<K>> = vec![None; n];
    let mut prev = vec![usize::MAX; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    best[s] = Some(start);
    heap.push(Entry { key: start, node: s });
    while let Some(Entry { key, node }) = heap.pop() {
        if done[node] {
            continue;
        }
        done[node] = true;
        if node == t {
            let mut path = vec![t];
            let mut cur = t;
            while cur != s {
                cur = prev[cur];
                path.push(cur);
            }
            path.reverse();
            return Some((path, key));
        }
        for (v, c) in g.out_edges(node) {
            if done[v] || banned_nodes.get(v).copied().unwrap_or(false) || banned_edges.contains(&(node, v)) {
                continue;
            }
            let k = step(key, v, c);
            if best[v].is_none_or(|b| k < b) {
                best[v] = Some(k);
                prev[v] = node;
                heap.push(Entry { key: k, node: v });
            }
        }
    }
    None
}

pub fn shortest_path(
    g: &RoutingGraph,
    s: usize,
    t: usize,
    banned_nodes: &[bool],
    banned_edges: &HashSet<(usize, usize)>,
) -> Option<Route> {
    label_search(g, s, t, 0i64, banned_nodes, banned_edges, |k, _, c| k + c)
        .map(|(nodes, cost_q)| Route { nodes, cost_q })
}

/// Up to `k` loopless paths in non-decreasing cost order (Yen).
pub fn k_shortest_paths(g: &RoutingGraph, s: usize, t: usize, k: usize) -> Vec<Route> {
    let none = HashSet::new();
    let Some(first) = shortest_path(g, s, t, &[], &none) else {
        return vec![];
    };
    let mut accepted = vec![first];
    let mut candidates: Vec<Route> = Vec::new();
    while accepted.len() < k {
        let last = accepted.last().unwrap().clone();
        for i in 0..last.nodes.len() - 1 {
            let spur = last.nodes[i];
            let root = &last.nodes[..=i];
            let mut banned_edges = HashSet::new();
            for p in &accepted {
                if p.nodes.len() > i + 1 && &p.nodes[..=i] == root {
                    banned_edges.insert((p.nodes[i], p.nodes[i + 1]));
                }
            }
            let mut banned_nodes = vec![false; g.node_count()];
            for &r in &root[..i] {
                banned_nodes[r] = true;
            }
            if let Some(spur_route) = shortest_path(g, spur, t, &banned_nodes, &banned_edges) {
                let mut nodes = root[..i].to_vec();
                nodes.extend(spur_route.nodes);
                let cost_q = g.path_cost_q(&nodes).expect("edges exist");
                let r = Route { nodes, cost_q };
                if !accepted.contains(&r) && !candidates.contains(&r) {
                    candidates.push(r);
                }
            }
        }
        if candidates.is_empty() {
            break;
        }
        let best = (0..candidates.len())
            .min_by(|&a, &b| {
                let (ra, rb) = (&candidates[a], &candidates[b]);
                ra.cost_q.cmp(&rb.cost_q).then_with(|| ra.nodes.cmp(&rb.nodes))
            })
            .unwrap();
        accepted.push(candidates.swap_remove(best));
    }
    accepted
}

/// Least-cost path; among equal costs, the one entering the fewest nodes not in `reused`.
/// Only nodes flagged in `counted` contribute to the fresh count.
pub fn lexicographic_path(
    g: &RoutingGraph,
    s: usize,
    t: usize,
    reused: &[bool],
    counted: &[bool],
) -> Option<(Route, usize)> {
    let none = HashSet::new();
    label_search(g, s, t, (0i64, 0usize), &[], &none, |(c0, f0), v, c| {
        let fresh = usize::from(counted[v] && !reused[v]);
        (c0 + c, f0 + fresh)
    })
    .map(|(nodes, (cost_q, fresh))| (Route { nodes, cost_q }, fresh))
}

/// Route pairs one after another. With `tie_break`, equal-cost choices prefer
/// nodes already used by earlier pairs.
pub fn greedy_routes(g: &RoutingGraph, pairs: &[(usize, usize)], counted: &[bool], tie_break: bool) -> Vec<Option<Route>> {
    let mut reused = vec![false; g.node_count()];
    let none = HashSet::new();
    pairs
        .iter()
        .map(|&(s, t)| {
            let r = if tie_break {
                lexicographic_path(g, s, t, &reused, counted).map(|(r, _)| r)
            } else {
                shortest_path(g, s, t, &[], &none)
            };
            if let Some(r) = &r {
                for &n in &r.nodes {
                    reused[n] = true;
                }
            }
            r
        })
        .collect()
}

//! Transition checks between consecutive rounds.
//!
//! During a round every tile holds either its old or its new rule for a pair.
//! A pair that continues into the round is safe iff the union of its old and
//! new arcs, restricted to what the source reaches, admits a topological
//! order (no interleaving loops) and every reached node other than the sink
//! has both rules (no interleaving drops the wave).

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{path_arcs, topological_order, UpdateProblem, UpdateSchedule};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    Shape { round: usize, message: String },
    InvalidPath { round: usize, pair: (usize, usize), message: String },
    InactiveNode { round: usize, pair: (usize, usize), node: usize },
    Loop { round: usize, pair: (usize, usize) },
    BlackHole { round: usize, pair: (usize, usize), node: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub consistent: bool,
    pub violations: Vec<Violation>,
}

fn next_hops(path: &[usize]) -> BTreeMap<usize, usize> {
    path_arcs(path).collect()
}

pub fn validate_consistency(problem: &UpdateProblem, schedule: &UpdateSchedule) -> ConsistencyReport {
    let mut violations = Vec::new();
    if schedule.rounds.len() != problem.rounds() {
        violations.push(Violation::Shape {
            round: 0,
            message: format!("{} rounds scheduled, {} expected", schedule.rounds.len(), problem.rounds()),
        });
        return ConsistencyReport { consistent: false, violations };
    }
    let n = problem.graph.node_count;
    for (t, round) in schedule.rounds.iter().enumerate() {
        let r = t + 1;
        if round.paths.len() != problem.pairs_per_round[t].len() || round.active.len() != n {
            violations.push(Violation::Shape { round: r, message: "paths or activity do not match the round".into() });
            continue;
        }
        for (&(s, d), path) in problem.pairs_per_round[t].iter().zip(&round.paths) {
            let pair = (s, d);
            if path.first() != Some(&s) || path.last() != Some(&d) {
                violations.push(Violation::InvalidPath { round: r, pair, message: "path does not join the pair".into() });
                continue;
            }
            if let Some((u, v)) = path_arcs(path).find(|&(u, v)| !problem.graph.has_arc(u, v)) {
                violations.push(Violation::InvalidPath { round: r, pair, message: format!("no arc ({u},{v})") });
                continue;
            }
            for &x in path {
                if !round.active[x] {
                    violations.push(Violation::InactiveNode { round: r, pair, node: x });
                }
            }
            let unique: BTreeSet<usize> = path.iter().copied().collect();
            if unique.len() != path.len() {
                violations.push(Violation::Loop { round: r, pair });
                continue;
            }
            let Some(k) = problem.continuing(t, pair) else { continue };
            let Some(old) = schedule.rounds[t - 1].paths.get(k) else { continue };
            let (old_next, new_next) = (next_hops(old), next_hops(path));
            // Nodes reachable under some interleaving.
            let mut reach = BTreeSet::from([s]);
            let mut stack = vec![s];
            let mut arcs = BTreeSet::new();
            while let Some(x) = stack.pop() {
                for nx in [old_next.get(&x), new_next.get(&x)].into_iter().flatten() {
                    arcs.insert((x, *nx));
                    if reach.insert(*nx) {
                        stack.push(*nx);
                    }
                }
            }
            if topological_order(n, &arcs).is_none() {
                violations.push(Violation::Loop { round: r, pair });
            }
            for &x in &reach {
                if x != d && (!old_next.contains_key(&x) || !new_next.contains_key(&x)) {
                    violations.push(Violation::BlackHole { round: r, pair, node: x });
                }
            }
        }
    }
    ConsistencyReport { consistent: violations.is_empty(), violations }
}

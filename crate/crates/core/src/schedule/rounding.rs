//! LP relaxation with randomized rounding and repair.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::exact::RoundPaths;
use super::simplex::{solve, LinearProgram, LpOutcome};
use super::{assemble, path_arcs, schedule_assignment, topological_order, MilpModel, RowFamily, ScheduleError, UpdateSchedule};

#[derive(Debug, Clone, PartialEq)]
pub struct LpRelaxation {
    pub objective: f64,
    /// Relaxed value per model variable; the presolved distance block reads 0.
    pub values: Vec<f64>,
}

/// Solve the relaxation. The distance/auxiliary block is dropped first: any
/// assignment of the other variables extends to it (all distances 1, all
/// auxiliaries 0), so removing it leaves the optimum unchanged.
pub fn lp_relaxation(model: &MilpModel) -> Result<LpRelaxation, ScheduleError> {
    let mut dropped = vec![false; model.vars.len()];
    for t in 0..model.index.distance.len() {
        for &i in model.index.distance[t].values().chain(model.index.aux[t].values()) {
            dropped[i] = true;
        }
    }
    let mut map = vec![usize::MAX; model.vars.len()];
    let mut kept = Vec::new();
    for (i, d) in dropped.iter().enumerate() {
        if !d {
            map[i] = kept.len();
            kept.push(i);
        }
    }
    let rows = model
        .rows
        .iter()
        .filter(|r| !matches!(r.family, RowFamily::LinkDistance | RowFamily::Triangle | RowFamily::TriangleBigM))
        .map(|r| (r.coeffs.iter().map(|&(i, c)| (map[i], c)).collect(), r.sense, r.rhs))
        .collect();
    let mut objective = vec![0.0; kept.len()];
    for &(i, c) in &model.objective {
        objective[map[i]] += c;
    }
    let lp = LinearProgram {
        objective,
        rows,
        lb: kept.iter().map(|&i| model.vars[i].lb).collect(),
        ub: kept.iter().map(|&i| model.vars[i].ub).collect(),
    };
    match solve(&lp) {
        LpOutcome::Optimal { x, objective } => {
            let mut values = vec![0.0; model.vars.len()];
            for (k, &i) in kept.iter().enumerate() {
                values[i] = x[k];
            }
            Ok(LpRelaxation { objective, values })
        }
        LpOutcome::Infeasible => Err(ScheduleError::Infeasible),
        LpOutcome::Unbounded => Err(ScheduleError::Lp("unbounded relaxation".into())),
    }
}

/// Fewest inactive nodes, then fewest hops, avoiding arcs that close a cycle with `union`.
fn repair_path(
    succ: &[Vec<usize>],
    active: &[bool],
    union: &BTreeSet<(usize, usize)>,
    s: usize,
    d: usize,
) -> Option<Vec<usize>> {
    let n = succ.len();
    let reaches = |from: usize, to: usize| -> bool {
        let mut seen = vec![false; n];
        let mut stack = vec![from];
        while let Some(u) = stack.pop() {
            if u == to {
                return true;
            }
            for &(_, b) in union.range((u, 0)..(u + 1, 0)) {
                if !seen[b] {
                    seen[b] = true;
                    stack.push(b);
                }
            }
        }
        false
    };
    let mut best = vec![(usize::MAX, usize::MAX); n];
    let mut prev = vec![usize::MAX; n];
    let mut heap = BinaryHeap::new();
    best[s] = (usize::from(!active[s]), 0);
    heap.push(Reverse((best[s].0, 0, s)));
    while let Some(Reverse((c, h, u))) = heap.pop() {
        if (c, h) > best[u] {
            continue;
        }
        if u == d {
            break;
        }
        for &v in &succ[u] {
            if reaches(v, u) {
                continue;
            }
            let key = (c + usize::from(!active[v]), h + 1);
            if key < best[v] {
                best[v] = key;
                prev[v] = u;
                heap.push(Reverse((key.0, key.1, v)));
            }
        }
    }
    if best[d].0 == usize::MAX {
        return None;
    }
    let mut path = vec![d];
    while *path.last().unwrap() != s {
        path.push(prev[*path.last().unwrap()]);
    }
    path.reverse();
    Some(path)
}

pub fn relax_and_round(model: &MilpModel, seed: u64, attempts: usize) -> Result<UpdateSchedule, ScheduleError> {
    if attempts == 0 {
        return Err(ScheduleError::NoFeasibleSample(0));
    }
    let relaxed = lp_relaxation(model)?;
    let problem = &model.problem;
    let n = problem.graph.node_count;
    let succ = problem.graph.successors();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<UpdateSchedule> = None;
    'attempt: for _ in 0..attempts {
        let mut activity: Vec<Vec<bool>> = model
            .index
            .activity
            .iter()
            .map(|round| round.iter().map(|&i| rng.gen::<f64>() < relaxed.values[i]).collect())
            .collect();
        let mut paths: RoundPaths = Vec::new();
        for (t, pairs) in problem.pairs_per_round.iter().enumerate() {
            let mut union = BTreeSet::new();
            let mut round = Vec::new();
            for &(s, d) in pairs {
                let path = match problem.continuing(t, (s, d)) {
                    Some(q) => paths[t - 1][q].clone(),
                    None => match repair_path(&succ, &activity[t], &union, s, d) {
                        Some(p) => p,
                        None => continue 'attempt,
                    },
                };
                union.extend(path_arcs(&path));
                if topological_order(n, &union).is_none() {
                    continue 'attempt;
                }
                for &x in &path {
                    activity[t][x] = true;
                }
                round.push(path);
            }
            paths.push(round);
        }
        let schedule = assemble(problem, &activity, &paths);
        if !model.violations(&schedule_assignment(model, &schedule)).is_empty() {
            continue;
        }
        if best.as_ref().is_none_or(|b| schedule.touches < b.touches) {
            best = Some(schedule);
        }
    }
    best.ok_or(ScheduleError::NoFeasibleSample(attempts))
}

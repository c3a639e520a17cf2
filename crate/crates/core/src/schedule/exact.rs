//! Exact solver: depth-first branch-and-bound over tile activations.
//!
//! Deactivating a tile only ever adds touches, so an optimal schedule turns
//! each needed tile on once and keeps it on. The search therefore branches on
//! which initially inactive tiles become available, checks feasibility of the
//! routing rows (flow, pinning, MTZ) by exhaustive path search, and bounds by
//! the number of activations.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{assemble, path_arcs, topological_order, MilpModel, ScheduleError, UpdateProblem, UpdateSchedule};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExactLimits {
    pub max_nodes: usize,
    pub max_rounds: usize,
    pub max_pairs: usize,
    /// Budget of path-search steps before giving up.
    pub max_search_steps: u64,
}

impl Default for ExactLimits {
    fn default() -> Self {
        ExactLimits { max_nodes: 15, max_rounds: 4, max_pairs: 4, max_search_steps: 20_000_000 }
    }
}

pub(crate) type RoundPaths = Vec<Vec<Vec<usize>>>;

/// Exhaustive search for per-round pair paths over `available` nodes.
pub(crate) struct PathSearch<'a> {
    problem: &'a UpdateProblem,
    succ: Vec<Vec<usize>>,
    prefer: &'a [bool],
    pub steps: u64,
    pub budget: u64,
}

impl<'a> PathSearch<'a> {
    pub fn new(problem: &'a UpdateProblem, prefer: &'a [bool], budget: u64) -> Self {
        PathSearch { problem, succ: problem.graph.successors(), prefer, steps: 0, budget }
    }

    /// First combination found, or `None` when none exists. Errors when over budget.
    pub fn find(&mut self, available: &[bool]) -> Result<Option<RoundPaths>, ScheduleError> {
        let slots: Vec<(usize, usize)> = self
            .problem
            .pairs_per_round
            .iter()
            .enumerate()
            .flat_map(|(t, ps)| (0..ps.len()).map(move |k| (t, k)))
            .collect();
        let mut chosen: RoundPaths = self.problem.pairs_per_round.iter().map(|ps| vec![Vec::new(); ps.len()]).collect();
        if self.assign(available, &slots, 0, &mut chosen)? {
            Ok(Some(chosen))
        } else {
            Ok(None)
        }
    }

    fn tick(&mut self) -> Result<(), ScheduleError> {
        self.steps += 1;
        if self.steps > self.budget {
            return Err(ScheduleError::LimitExceeded(format!("search budget of {} steps", self.budget)));
        }
        Ok(())
    }

    fn union_ok(&self, n: usize, round: &[Vec<usize>], extra: &[usize]) -> bool {
        let arcs: BTreeSet<(usize, usize)> =
            round.iter().chain(std::iter::once(&extra.to_vec())).flat_map(|p| path_arcs(p).collect::<Vec<_>>()).collect();
        topological_order(n, &arcs).is_some()
    }

    fn assign(
        &mut self,
        available: &[bool],
        slots: &[(usize, usize)],
        i: usize,
        chosen: &mut RoundPaths,
    ) -> Result<bool, ScheduleError> {
        let Some(&(t, k)) = slots.get(i) else { return Ok(true) };
        let n = self.problem.graph.node_count;
        let (s, d) = self.problem.pairs_per_round[t][k];
        if let Some(q) = self.problem.continuing(t, (s, d)) {
            let path = chosen[t - 1][q].clone();
            if !self.union_ok(n, &chosen[t][..k], &path) {
                return Ok(false);
            }
            chosen[t][k] = path;
            let ok = self.assign(available, slots, i + 1, chosen)?;
            if !ok {
                chosen[t][k].clear();
            }
            return Ok(ok);
        }
        if !available[s] || !available[d] {
            return Ok(false);
        }
        let mut path = vec![s];
        let mut on_path = vec![false; n];
        on_path[s] = true;
        self.extend(available, slots, i, chosen, &mut path, &mut on_path)
    }

    fn reaches(&self, available: &[bool], on_path: &[bool], from: usize, d: usize) -> bool {
        let mut seen = vec![false; available.len()];
        let mut stack = vec![from];
        seen[from] = true;
        while let Some(u) = stack.pop() {
            if u == d {
                return true;
            }
            for &v in &self.succ[u] {
                if !seen[v] && available[v] && (!on_path[v] || v == d) {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        false
    }

    fn extend(
        &mut self,
        available: &[bool],
        slots: &[(usize, usize)],
        i: usize,
        chosen: &mut RoundPaths,
        path: &mut Vec<usize>,
        on_path: &mut Vec<bool>,
    ) -> Result<bool, ScheduleError> {
        self.tick()?;
        let (t, k) = slots[i];
        let (_, d) = self.problem.pairs_per_round[t][k];
        let u = *path.last().unwrap();
        if u == d {
            if !self.union_ok(self.problem.graph.node_count, &chosen[t][..k], path) {
                return Ok(false);
            }
            chosen[t][k] = path.clone();
            if self.assign(available, slots, i + 1, chosen)? {
                return Ok(true);
            }
            chosen[t][k].clear();
            return Ok(false);
        }
        if !self.reaches(available, on_path, u, d) {
            return Ok(false);
        }
        let mut next: Vec<usize> = self.succ[u].iter().copied().filter(|&v| available[v] && !on_path[v]).collect();
        next.sort_by_key(|&v| (v != d, !self.prefer[v], v));
        for v in next {
            path.push(v);
            on_path[v] = true;
            let ok = self.extend(available, slots, i, chosen, path, on_path)?;
            path.pop();
            on_path[v] = false;
            if ok {
                return Ok(true);
            }
        }
        Ok(false)
    }
}

/// Activity per round for paths when tiles turn on at first use and stay on.
pub(crate) fn activity_for(problem: &UpdateProblem, paths: &RoundPaths) -> Vec<Vec<bool>> {
    let mut act = problem.initial_active.clone();
    paths
        .iter()
        .map(|round| {
            for &x in round.iter().flatten() {
                act[x] = true;
            }
            act.clone()
        })
        .collect()
}

fn activations(problem: &UpdateProblem, paths: &RoundPaths) -> usize {
    let used: BTreeSet<usize> = paths.iter().flatten().flatten().copied().collect();
    used.into_iter().filter(|&x| !problem.initial_active[x]).count()
}

struct Bnb<'a> {
    problem: &'a UpdateProblem,
    candidates: Vec<usize>,
    best: Option<(usize, RoundPaths)>,
    search: PathSearch<'a>,
}

impl Bnb<'_> {
    fn run(&mut self, depth: usize, available: &mut Vec<bool>, on_count: usize) -> Result<(), ScheduleError> {
        if self.best.as_ref().is_some_and(|(c, _)| on_count >= *c) {
            return Ok(());
        }
        // Optimistic check: undecided candidates count as available.
        let mut optimistic = available.clone();
        for &c in &self.candidates[depth..] {
            optimistic[c] = true;
        }
        let Some(paths) = self.search.find(&optimistic)? else { return Ok(()) };
        let cost = activations(self.problem, &paths);
        if self.best.as_ref().is_none_or(|(c, _)| cost < *c) {
            self.best = Some((cost, paths));
        }
        if cost <= on_count || depth == self.candidates.len() {
            return Ok(());
        }
        let c = self.candidates[depth];
        // Prefer the previous activity (off) first.
        self.run(depth + 1, available, on_count)?;
        available[c] = true;
        self.run(depth + 1, available, on_count + 1)?;
        available[c] = false;
        Ok(())
    }
}

impl ExactLimits {
    /// `LimitExceeded` when the instance is too large for the exact solver.
    pub fn check(&self, problem: &UpdateProblem) -> Result<(), ScheduleError> {
        let n = problem.graph.node_count;
        let pairs = problem.pairs_per_round.iter().map(Vec::len).max().unwrap_or(0);
        if n > self.max_nodes || problem.rounds() > self.max_rounds || pairs > self.max_pairs {
            return Err(ScheduleError::LimitExceeded(format!(
                "{n} tiles, {} rounds, {pairs} pairs; limits {}/{}/{}",
                problem.rounds(),
                self.max_nodes,
                self.max_rounds,
                self.max_pairs
            )));
        }
        Ok(())
    }
}

pub fn solve_exact(model: &MilpModel, limits: &ExactLimits) -> Result<UpdateSchedule, ScheduleError> {
    let problem = &model.problem;
    let n = problem.graph.node_count;
    limits.check(problem)?;
    let candidates: Vec<usize> = (0..n).filter(|&u| !problem.initial_active[u]).collect();
    let prefer = problem.initial_active.clone();
    let mut bnb = Bnb { problem, candidates, best: None, search: PathSearch::new(problem, &prefer, limits.max_search_steps) };
    let mut available = problem.initial_active.clone();
    bnb.run(0, &mut available, 0)?;
    let (_, paths) = bnb.best.ok_or(ScheduleError::Infeasible)?;
    let activity = activity_for(problem, &paths);
    Ok(assemble(problem, &activity, &paths))
}

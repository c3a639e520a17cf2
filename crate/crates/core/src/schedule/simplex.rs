//! Dense-tableau two-phase simplex with Bland's rule.

use super::Sense;

const EPS: f64 = 1e-9;

/// min c·x subject to rows and lb ≤ x ≤ ub (finite bounds).
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub rows: Vec<(Vec<(usize, f64)>, Sense, f64)>,
    pub lb: Vec<f64>,
    pub ub: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, objective: f64 },
    Infeasible,
    Unbounded,
}

struct Tableau {
    t: Vec<Vec<f64>>,
    basis: Vec<usize>,
    cols: usize,
}

impl Tableau {
    fn rhs(&self, i: usize) -> f64 {
        self.t[i][self.cols]
    }

    fn pivot(&mut self, r: usize, c: usize, reduced: &mut [f64]) {
        let p = self.t[r][c];
        for v in self.t[r].iter_mut() {
            *v /= p;
        }
        let row = self.t[r].clone();
        for (i, other) in self.t.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = other[c];
            if f.abs() > 0.0 {
                for (o, x) in other.iter_mut().zip(&row) {
                    *o -= f * x;
                }
            }
        }
        let f = reduced[c];
        if f.abs() > 0.0 {
            for (o, x) in reduced.iter_mut().zip(&row) {
                *o -= f * x;
            }
        }
        self.basis[r] = c;
    }

    /// Reduced-cost row (last entry is −objective) for cost vector `c`.
    fn reduced(&self, c: &[f64]) -> Vec<f64> {
        let mut r: Vec<f64> = c.iter().copied().chain(std::iter::once(0.0)).collect();
        for (i, &b) in self.basis.iter().enumerate() {
            let cb = c[b];
            if cb != 0.0 {
                for (o, x) in r.iter_mut().zip(&self.t[i]) {
                    *o -= cb * x;
                }
            }
        }
        r
    }

    /// Bland's rule iterations; `false` when unbounded.
    fn optimize(&mut self, reduced: &mut [f64], allowed: &[bool]) -> bool {
        loop {
            let Some(enter) = (0..self.cols).find(|&j| allowed[j] && reduced[j] < -EPS) else { return true };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.t.len() {
                let a = self.t[i][enter];
                if a > EPS {
                    let ratio = self.rhs(i) / a;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((li, lr)) => {
                            if ratio < lr - EPS || ((ratio - lr).abs() <= EPS && self.basis[i] < self.basis[li]) {
                                Some((i, ratio))
                            } else {
                                Some((li, lr))
                            }
                        }
                    };
                }
            }
            let Some((r, _)) = leave else { return false };
            self.pivot(r, enter, reduced);
        }
    }
}

pub fn solve(lp: &LinearProgram) -> LpOutcome {
    let n = lp.objective.len();
    // Shift to y = x − lb ≥ 0 and add y ≤ ub − lb rows.
    let mut rows: Vec<(Vec<(usize, f64)>, Sense, f64)> = Vec::new();
    for (coeffs, sense, rhs) in &lp.rows {
        let shift: f64 = coeffs.iter().map(|&(j, c)| c * lp.lb[j]).sum();
        rows.push((coeffs.clone(), *sense, rhs - shift));
    }
    for j in 0..n {
        rows.push((vec![(j, 1.0)], Sense::Le, lp.ub[j] - lp.lb[j]));
    }
    let m = rows.len();
    let mut slack_of = vec![None; m];
    let mut art_of = vec![None; m];
    let mut cols = n;
    // Normalise right-hand sides to be non-negative.
    for (coeffs, sense, rhs) in rows.iter_mut() {
        if *rhs < 0.0 {
            for c in coeffs.iter_mut() {
                c.1 = -c.1;
            }
            *rhs = -*rhs;
            *sense = match *sense {
                Sense::Le => Sense::Ge,
                Sense::Ge => Sense::Le,
                Sense::Eq => Sense::Eq,
            };
        }
    }
    for (i, (_, sense, _)) in rows.iter().enumerate() {
        if *sense != Sense::Eq {
            slack_of[i] = Some(cols);
            cols += 1;
        }
    }
    for (i, (_, sense, _)) in rows.iter().enumerate() {
        if *sense != Sense::Le {
            art_of[i] = Some(cols);
            cols += 1;
        }
    }
    let mut t = vec![vec![0.0; cols + 1]; m];
    let mut basis = vec![0; m];
    for (i, (coeffs, sense, rhs)) in rows.iter().enumerate() {
        for &(j, c) in coeffs {
            t[i][j] += c;
        }
        if let Some(s) = slack_of[i] {
            t[i][s] = if *sense == Sense::Le { 1.0 } else { -1.0 };
        }
        basis[i] = match (art_of[i], slack_of[i]) {
            (Some(a), _) => {
                t[i][a] = 1.0;
                a
            }
            (None, Some(s)) => s,
            (None, None) => unreachable!("equality rows carry an artificial"),
        };
        t[i][cols] = *rhs;
    }
    let mut tab = Tableau { t, basis, cols };
    let is_art: Vec<bool> = (0..cols).map(|j| art_of.contains(&Some(j))).collect();
    let phase1: Vec<f64> = (0..cols).map(|j| if is_art[j] { 1.0 } else { 0.0 }).collect();
    let mut r = tab.reduced(&phase1);
    let all = vec![true; cols];
    tab.optimize(&mut r, &all);
    if -r[cols] > 1e-7 {
        return LpOutcome::Infeasible;
    }
    // Drive remaining artificials out of the basis where possible.
    for i in 0..m {
        if is_art[tab.basis[i]] {
            if let Some(j) = (0..cols).find(|&j| !is_art[j] && tab.t[i][j].abs() > EPS) {
                let mut dummy = vec![0.0; cols + 1];
                tab.pivot(i, j, &mut dummy);
            }
        }
    }
    let mut c2 = vec![0.0; cols];
    c2[..n].copy_from_slice(&lp.objective);
    let mut r2 = tab.reduced(&c2);
    let allowed: Vec<bool> = is_art.iter().map(|a| !a).collect();
    if !tab.optimize(&mut r2, &allowed) {
        return LpOutcome::Unbounded;
    }
    let mut y = vec![0.0; cols];
    for (i, &b) in tab.basis.iter().enumerate() {
        y[b] = tab.rhs(i);
    }
    let x: Vec<f64> = (0..n).map(|j| y[j] + lp.lb[j]).collect();
    let objective = x.iter().zip(&lp.objective).map(|(a, b)| a * b).sum();
    LpOutcome::Optimal { x, objective }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textbook_maximisation() {
        // max 3x + 5y st x ≤ 4, 2y ≤ 12, 3x + 2y ≤ 18 → (2, 6), 36
        let lp = LinearProgram {
            objective: vec![-3.0, -5.0],
            rows: vec![
                (vec![(0, 1.0)], Sense::Le, 4.0),
                (vec![(1, 2.0)], Sense::Le, 12.0),
                (vec![(0, 3.0), (1, 2.0)], Sense::Le, 18.0),
            ],
            lb: vec![0.0, 0.0],
            ub: vec![100.0, 100.0],
        };
        let LpOutcome::Optimal { x, objective } = solve(&lp) else { panic!() };
        assert!((objective + 36.0).abs() < 1e-9);
        assert!((x[0] - 2.0).abs() < 1e-9 && (x[1] - 6.0).abs() < 1e-9);
    }

    #[test]
    fn equality_and_lower_bounds() {
        // min x + 2y st x + y = 3, x ≥ 1 (bound), y ≥ 0.5 (row)
        let lp = LinearProgram {
            objective: vec![1.0, 2.0],
            rows: vec![(vec![(0, 1.0), (1, 1.0)], Sense::Eq, 3.0), (vec![(1, 1.0)], Sense::Ge, 0.5)],
            lb: vec![1.0, 0.0],
            ub: vec![10.0, 10.0],
        };
        let LpOutcome::Optimal { x, objective } = solve(&lp) else { panic!() };
        assert!((x[0] - 2.5).abs() < 1e-9 && (x[1] - 0.5).abs() < 1e-9);
        assert!((objective - 3.5).abs() < 1e-9);
    }

    #[test]
    fn detects_infeasibility() {
        let lp = LinearProgram {
            objective: vec![1.0],
            rows: vec![(vec![(0, 1.0)], Sense::Ge, 5.0)],
            lb: vec![0.0],
            ub: vec![2.0],
        };
        assert_eq!(solve(&lp), LpOutcome::Infeasible);
    }
}

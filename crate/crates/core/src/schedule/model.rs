//! The consistent-update MILP: variables, constraint rows and LP-format export.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::{ScheduleError, UpdateProblem};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Binary,
    Integer,
    Continuous,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Var {
    pub name: String,
    pub kind: VarKind,
    pub lb: f64,
    pub ub: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

/// Which family of the formulation a row belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RowFamily {
    /// Σ δ ≤ touches
    TouchCap,
    /// δ_u^t ≥ |a_u^t − a_u^{t−1}|, two rows per node and round.
    TouchChange,
    /// a_(u,v) ≤ a_u and a_(u,v) ≤ a_v
    Coupling,
    /// a_(u,v) ≤ dis_{u,v}
    LinkDistance,
    /// a_(u,v)^{(s,d)} ≤ a_(u,v)
    PairLink,
    /// dis_{u,v} ≤ dis_{u,w} + dis_{w,v}
    Triangle,
    /// dis_{u,v} ≥ dis_{u,w} + dis_{w,v} − M(1 − a_{u,v,w})
    TriangleBigM,
    SourceFlow,
    SinkFlow,
    Conservation,
    /// o_u − o_v + |V|·a_(u,v) ≤ |V| − 1
    Mtz,
    /// A pair present in consecutive rounds keeps its arcs.
    Pin,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub name: String,
    pub family: RowFamily,
    pub coeffs: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl Row {
    pub fn lhs(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(i, c)| c * x[i]).sum()
    }

    pub fn satisfied(&self, x: &[f64], tol: f64) -> bool {
        let l = self.lhs(x);
        match self.sense {
            Sense::Le => l <= self.rhs + tol,
            Sense::Ge => l >= self.rhs - tol,
            Sense::Eq => (l - self.rhs).abs() <= tol,
        }
    }
}

/// Variable indices per family, `[round][...]`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct VarIndex {
    pub activity: Vec<Vec<usize>>,
    pub change: Vec<Vec<usize>>,
    pub link: Vec<Vec<usize>>,
    /// `[round][pair][arc]`
    pub flow: Vec<Vec<Vec<usize>>>,
    pub order: Vec<Vec<usize>>,
    pub distance: Vec<BTreeMap<(usize, usize), usize>>,
    pub aux: Vec<BTreeMap<(usize, usize, usize), usize>>,
    pub touches: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MilpModel {
    pub problem: UpdateProblem,
    pub vars: Vec<Var>,
    pub rows: Vec<Row>,
    /// Minimised objective coefficients.
    pub objective: Vec<(usize, f64)>,
    pub big_m: f64,
    pub index: VarIndex,
}

impl MilpModel {
    fn add_var(&mut self, name: String, kind: VarKind, lb: f64, ub: f64) -> usize {
        self.vars.push(Var { name, kind, lb, ub });
        self.vars.len() - 1
    }

    fn add_row(&mut self, name: String, family: RowFamily, coeffs: Vec<(usize, f64)>, sense: Sense, rhs: f64) {
        self.rows.push(Row { name, family, coeffs, sense, rhs });
    }

    pub fn rows_in(&self, family: RowFamily) -> usize {
        self.rows.iter().filter(|r| r.family == family).count()
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().map(|&(i, c)| c * x[i]).sum()
    }

    /// Names of violated rows, bounds and integrality markers.
    pub fn violations(&self, x: &[f64]) -> Vec<String> {
        let tol = 1e-6;
        let mut out = Vec::new();
        for (v, &val) in self.vars.iter().zip(x) {
            if val < v.lb - tol || val > v.ub + tol {
                out.push(format!("bound {}", v.name));
            }
            if v.kind != VarKind::Continuous && (val - val.round()).abs() > tol {
                out.push(format!("integrality {}", v.name));
            }
        }
        out.extend(self.rows.iter().filter(|r| !r.satisfied(x, tol)).map(|r| r.name.clone()));
        out
    }

    /// Export in CPLEX LP text format.
    pub fn to_lp_format(&self) -> String {
        let term = |c: f64, v: usize, first: bool| -> String {
            let sign = if c < 0.0 { "-" } else if first { "" } else { "+" };
            let mag = c.abs();
            if mag == 1.0 {
                format!("{sign} {}", self.vars[v].name)
            } else {
                format!("{sign} {mag} {}", self.vars[v].name)
            }
        };
        let expr = |coeffs: &[(usize, f64)]| -> String {
            if coeffs.is_empty() {
                return "0".to_string();
            }
            coeffs.iter().enumerate().map(|(k, &(v, c))| term(c, v, k == 0)).collect::<Vec<_>>().join(" ").trim().to_string()
        };
        let mut s = String::new();
        let _ = writeln!(s, "\\ consistent update model: {} vars, {} rows", self.vars.len(), self.rows.len());
        let _ = writeln!(s, "Minimize\n obj: {}", expr(&self.objective));
        let _ = writeln!(s, "Subject To");
        for r in &self.rows {
            let op = match r.sense {
                Sense::Le => "<=",
                Sense::Ge => ">=",
                Sense::Eq => "=",
            };
            let _ = writeln!(s, " {}: {} {op} {}", r.name, expr(&r.coeffs), r.rhs);
        }
        let _ = writeln!(s, "Bounds");
        for v in self.vars.iter().filter(|v| v.kind != VarKind::Binary) {
            let _ = writeln!(s, " {} <= {} <= {}", v.lb, v.name, v.ub);
        }
        for (label, kind) in [("Generals", VarKind::Integer), ("Binaries", VarKind::Binary)] {
            let names: Vec<&str> = self.vars.iter().filter(|v| v.kind == kind).map(|v| v.name.as_str()).collect();
            if !names.is_empty() {
                let _ = writeln!(s, "{label}");
                for chunk in names.chunks(8) {
                    let _ = writeln!(s, " {}", chunk.join(" "));
                }
            }
        }
        s.push_str("End\n");
        s
    }
}

/// Ceiling on the triangle rows a model may carry (they grow as n³ per round).
pub const MAX_TRIANGLE_ROWS: usize = 2_000_000;

pub fn build_model(problem: &UpdateProblem) -> Result<MilpModel, ScheduleError> {
    problem.validate()?;
    let g = &problem.graph;
    let n = g.node_count;
    let rounds = problem.pairs_per_round.len();
    let triangles = rounds.saturating_mul(n.saturating_mul(n.saturating_sub(1)).saturating_mul(n.saturating_sub(2)));
    if triangles > MAX_TRIANGLE_ROWS {
        return Err(ScheduleError::LimitExceeded(format!(
            "{n} tiles over {rounds} rounds need {triangles} ordering rows; at most {MAX_TRIANGLE_ROWS} are supported"
        )));
    }
    let mut m = MilpModel {
        problem: problem.clone(),
        vars: Vec::new(),
        rows: Vec::new(),
        objective: Vec::new(),
        big_m: (2 * n + 1) as f64,
        index: VarIndex::default(),
    };
    let nf = n as f64;
    let touches = m.add_var("touches".into(), VarKind::Integer, 0.0, (n * rounds) as f64);
    m.index.touches = touches;
    m.objective.push((touches, 1.0));
    let mut cap = vec![(touches, -1.0)];
    for t in 0..rounds {
        let r = t + 1;
        let act: Vec<usize> = (0..n).map(|u| m.add_var(format!("a_{u}_r{r}"), VarKind::Binary, 0.0, 1.0)).collect();
        let chg: Vec<usize> = (0..n).map(|u| m.add_var(format!("chg_{u}_r{r}"), VarKind::Binary, 0.0, 1.0)).collect();
        let link: Vec<usize> = g
            .arcs
            .iter()
            .map(|&(u, v)| m.add_var(format!("l_{u}_{v}_r{r}"), VarKind::Binary, 0.0, 1.0))
            .collect();
        let order: Vec<usize> =
            (0..n).map(|u| m.add_var(format!("o_{u}_r{r}"), VarKind::Integer, 0.0, nf - 1.0)).collect();
        let mut dist = BTreeMap::new();
        for u in 0..n {
            for v in 0..n {
                if u != v {
                    dist.insert((u, v), m.add_var(format!("dis_{u}_{v}_r{r}"), VarKind::Integer, 0.0, nf));
                }
            }
        }
        let mut aux = BTreeMap::new();
        for u in 0..n {
            for v in 0..n {
                for w in 0..n {
                    if u != v && v != w && u != w {
                        aux.insert((u, v, w), m.add_var(format!("x_{u}_{v}_{w}_r{r}"), VarKind::Binary, 0.0, 1.0));
                    }
                }
            }
        }
        let pairs = &problem.pairs_per_round[t];
        let flow: Vec<Vec<usize>> = pairs
            .iter()
            .enumerate()
            .map(|(p, _)| {
                g.arcs
                    .iter()
                    .map(|&(u, v)| m.add_var(format!("f{p}_{u}_{v}_r{r}"), VarKind::Binary, 0.0, 1.0))
                    .collect()
            })
            .collect();

        // Touch counting.
        for u in 0..n {
            cap.push((chg[u], 1.0));
            if t == 0 {
                let prev = if problem.initial_active[u] { 1.0 } else { 0.0 };
                m.add_row(format!("chg_up_{u}_r{r}"), RowFamily::TouchChange, vec![(chg[u], 1.0), (act[u], -1.0)], Sense::Ge, -prev);
                m.add_row(format!("chg_dn_{u}_r{r}"), RowFamily::TouchChange, vec![(chg[u], 1.0), (act[u], 1.0)], Sense::Ge, prev);
            } else {
                let prev = m.index.activity[t - 1][u];
                m.add_row(
                    format!("chg_up_{u}_r{r}"),
                    RowFamily::TouchChange,
                    vec![(chg[u], 1.0), (act[u], -1.0), (prev, 1.0)],
                    Sense::Ge,
                    0.0,
                );
                m.add_row(
                    format!("chg_dn_{u}_r{r}"),
                    RowFamily::TouchChange,
                    vec![(chg[u], 1.0), (act[u], 1.0), (prev, -1.0)],
                    Sense::Ge,
                    0.0,
                );
            }
        }
        for (e, &(u, v)) in g.arcs.iter().enumerate() {
            m.add_row(format!("cpl_u_{u}_{v}_r{r}"), RowFamily::Coupling, vec![(link[e], 1.0), (act[u], -1.0)], Sense::Le, 0.0);
            m.add_row(format!("cpl_v_{u}_{v}_r{r}"), RowFamily::Coupling, vec![(link[e], 1.0), (act[v], -1.0)], Sense::Le, 0.0);
            m.add_row(
                format!("ldis_{u}_{v}_r{r}"),
                RowFamily::LinkDistance,
                vec![(link[e], 1.0), (dist[&(u, v)], -1.0)],
                Sense::Le,
                0.0,
            );
            for (p, f) in flow.iter().enumerate() {
                m.add_row(format!("pl{p}_{u}_{v}_r{r}"), RowFamily::PairLink, vec![(f[e], 1.0), (link[e], -1.0)], Sense::Le, 0.0);
            }
        }
        for (&(u, v, w), &x) in &aux {
            let (duv, duw, dwv) = (dist[&(u, v)], dist[&(u, w)], dist[&(w, v)]);
            m.add_row(
                format!("tri_{u}_{v}_{w}_r{r}"),
                RowFamily::Triangle,
                vec![(duv, 1.0), (duw, -1.0), (dwv, -1.0)],
                Sense::Le,
                0.0,
            );
            let big = m.big_m;
            m.add_row(
                format!("trm_{u}_{v}_{w}_r{r}"),
                RowFamily::TriangleBigM,
                vec![(duv, 1.0), (duw, -1.0), (dwv, -1.0), (x, -big)],
                Sense::Ge,
                -big,
            );
        }
        for (p, &(s, d)) in pairs.iter().enumerate() {
            let f = &flow[p];
            let out_of = |x: usize| -> Vec<(usize, f64)> {
                g.arcs.iter().enumerate().filter(|(_, a)| a.0 == x).map(|(e, _)| (f[e], 1.0)).collect()
            };
            let into = |x: usize| -> Vec<(usize, f64)> {
                g.arcs.iter().enumerate().filter(|(_, a)| a.1 == x).map(|(e, _)| (f[e], 1.0)).collect()
            };
            m.add_row(format!("src{p}_r{r}"), RowFamily::SourceFlow, out_of(s), Sense::Eq, 1.0);
            m.add_row(format!("snk{p}_r{r}"), RowFamily::SinkFlow, into(d), Sense::Eq, 1.0);
            for w in (0..n).filter(|&w| w != s && w != d) {
                let mut c = out_of(w);
                c.extend(into(w).into_iter().map(|(i, _)| (i, -1.0)));
                if !c.is_empty() {
                    m.add_row(format!("cons{p}_{w}_r{r}"), RowFamily::Conservation, c, Sense::Eq, 0.0);
                }
            }
            if t > 0 {
                if let Some(q) = problem.pairs_per_round[t - 1].iter().position(|&x| x == (s, d)) {
                    for (e, &(u, v)) in g.arcs.iter().enumerate() {
                        let prev = m.index.flow[t - 1][q][e];
                        m.add_row(format!("pin{p}_{u}_{v}_r{r}"), RowFamily::Pin, vec![(f[e], 1.0), (prev, -1.0)], Sense::Eq, 0.0);
                    }
                }
            }
        }
        for (e, &(u, v)) in g.arcs.iter().enumerate() {
            m.add_row(
                format!("mtz_{u}_{v}_r{r}"),
                RowFamily::Mtz,
                vec![(order[u], 1.0), (order[v], -1.0), (link[e], nf)],
                Sense::Le,
                nf - 1.0,
            );
        }
        m.index.activity.push(act);
        m.index.change.push(chg);
        m.index.link.push(link);
        m.index.flow.push(flow);
        m.index.order.push(order);
        m.index.distance.push(dist);
        m.index.aux.push(aux);
    }
    m.add_row("touch_cap".into(), RowFamily::TouchCap, cap, Sense::Le, 0.0);
    Ok(m)
}

//! EM functions, codebooks, the mode-rule merge and the router-model
//! forwarding lookup.
//!
//! Ports are opaque ids. Inside a [`crate::graph::PweGraph`] a port id is the
//! node index of the neighbour at the far end of the link.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PortId(pub u32);

impl fmt::Display for PortId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PortKind {
    TileLink,
    UserLink,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Port {
    pub port_id: PortId,
    /// Unit vector from the tile centre towards the neighbour.
    pub direction: Vec3,
    /// Position of the neighbour (tile centre or user antenna).
    pub target: Vec3,
    pub kind: PortKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Template {
    Steer { in_port: PortId, out_port: PortId },
    Split { in_port: PortId, out_ports: Vec<PortId> },
    Absorb { in_port: PortId },
    Specular,
    PhaseShift { in_port: PortId, out_port: PortId, phase_rad: f64 },
    Polarize { in_port: PortId, out_port: PortId },
}

impl Template {
    pub fn in_port(&self) -> Option<PortId> {
        match self {
            Template::Steer { in_port, .. }
            | Template::Split { in_port, .. }
            | Template::Absorb { in_port }
            | Template::PhaseShift { in_port, .. }
            | Template::Polarize { in_port, .. } => Some(*in_port),
            Template::Specular => None,
        }
    }

    /// Ports that receive power when the template's input port is hit.
    pub fn out_ports(&self) -> Vec<PortId> {
        match self {
            Template::Steer { out_port, .. }
            | Template::PhaseShift { out_port, .. }
            | Template::Polarize { out_port, .. } => vec![*out_port],
            Template::Split { out_ports, .. } => out_ports.clone(),
            Template::Absorb { .. } | Template::Specular => vec![],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmFunction {
    pub function_id: String,
    pub template: Template,
    pub bias_vector: Vec<u8>,
    /// Reflected-over-impinging power ratio in (0, 1].
    pub efficiency: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmError {
    #[error("cannot merge an empty function list")]
    EmptyFunctionList,
    #[error("function `{function}` has {got} cells, expected {expected}")]
    MismatchedCellCount { function: String, expected: usize, got: usize },
    #[error("unknown port {0}")]
    UnknownPort(PortId),
    #[error("unknown function `{0}`")]
    UnknownFunction(String),
    #[error("duplicate function id `{0}`")]
    DuplicateFunction(String),
    #[error("efficiency of `{0}` outside (0, 1]")]
    InvalidEfficiency(String),
}

/// Map of supported functions for a tile, keyed by stable string id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Codebook {
    pub cell_count: usize,
    pub entries: BTreeMap<String, EmFunction>,
}

impl Codebook {
    pub fn new(cell_count: usize) -> Self {
        Codebook { cell_count, entries: BTreeMap::new() }
    }

    pub fn insert(&mut self, f: EmFunction) -> Result<(), EmError> {
        if !(f.efficiency > 0.0 && f.efficiency <= 1.0) {
            return Err(EmError::InvalidEfficiency(f.function_id));
        }
        let specular_ok = matches!(f.template, Template::Specular) && f.bias_vector.is_empty();
        if !specular_ok && f.bias_vector.len() != self.cell_count {
            return Err(EmError::MismatchedCellCount {
                function: f.function_id,
                expected: self.cell_count,
                got: f.bias_vector.len(),
            });
        }
        if self.entries.contains_key(&f.function_id) {
            return Err(EmError::DuplicateFunction(f.function_id));
        }
        self.entries.insert(f.function_id.clone(), f);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub fn codebook_lookup<'a>(codebook: &'a Codebook, function_id: &str) -> Result<&'a EmFunction, EmError> {
    codebook.entries.get(function_id).ok_or_else(|| EmError::UnknownFunction(function_id.to_string()))
}

/// Several functions deployed together on one tile via the per-cell mode rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergedFunction {
    /// Constituents sorted by function id.
    pub constituents: Vec<EmFunction>,
    pub merged_bias: Vec<u8>,
    pub per_constituent_efficiency: BTreeMap<String, f64>,
}

impl MergedFunction {
    pub fn function_ids(&self) -> Vec<&str> {
        self.constituents.iter().map(|f| f.function_id.as_str()).collect()
    }

    pub fn efficiency_of(&self, function_id: &str) -> f64 {
        self.per_constituent_efficiency.get(function_id).copied().unwrap_or(0.0)
    }

    /// Human-readable descriptor, `+`-joined constituent ids.
    pub fn descriptor(&self) -> String {
        self.function_ids().join("+")
    }
}

/// Merge functions with the per-cell mode rule.
///
/// Ties in the mode go to the smallest cell state, so the result does not
/// depend on argument order. Duplicate function ids are merged once.
pub fn merge(functions: &[EmFunction]) -> Result<MergedFunction, EmError> {
    let first = functions.first().ok_or(EmError::EmptyFunctionList)?;
    let cells = first.bias_vector.len();
    for f in functions {
        if f.bias_vector.len() != cells {
            return Err(EmError::MismatchedCellCount {
                function: f.function_id.clone(),
                expected: cells,
                got: f.bias_vector.len(),
            });
        }
    }
    let mut uniq: BTreeMap<&str, &EmFunction> = BTreeMap::new();
    for f in functions {
        uniq.entry(f.function_id.as_str()).or_insert(f);
    }
    // The mode is taken over the argument list including duplicates.
    let merged_bias: Vec<u8> = (0..cells)
        .map(|i| {
            let mut counts: BTreeMap<u8, usize> = BTreeMap::new();
            for f in functions {
                *counts.entry(f.bias_vector[i]).or_default() += 1;
            }
            let best = counts.values().copied().max().unwrap_or(0);
            counts.into_iter().find(|&(_, c)| c == best).map(|(v, _)| v).unwrap_or(0)
        })
        .collect();
    let per_constituent_efficiency = uniq
        .values()
        .map(|f| (f.function_id.clone(), degraded_efficiency(f, &merged_bias)))
        .collect();
    Ok(MergedFunction {
        constituents: uniq.into_values().cloned().collect(),
        merged_bias,
        per_constituent_efficiency,
    })
}

/// Efficiency a constituent keeps under a merged bias: ε · (cell overlap fraction).
pub fn degraded_efficiency(f: &EmFunction, merged_bias: &[u8]) -> f64 {
    if f.bias_vector.is_empty() {
        return f.efficiency;
    }
    let agree = f.bias_vector.iter().zip(merged_bias).filter(|(a, b)| a == b).count();
    f.efficiency * (agree as f64 / f.bias_vector.len() as f64)
}

/// Geometry of the tile a lookup is performed on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TileFrame {
    pub center: Vec3,
    pub normal: Vec3,
    pub axis_u: Vec3,
    pub axis_v: Vec3,
    pub half_side: f64,
}

impl TileFrame {
    fn contains(&self, p: Vec3) -> bool {
        let d = p - self.center;
        let h = self.half_side + 1e-9;
        d.dot(self.axis_u).abs() <= h && d.dot(self.axis_v).abs() <= h
    }
}

/// Constants of the forwarding model that the paper leaves open.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForwardRules {
    /// Fraction reflected specularly when a wave enters from a port no
    /// constituent is configured for.
    pub unintended_fraction: f64,
}

impl Default for ForwardRules {
    fn default() -> Self {
        ForwardRules { unintended_fraction: 0.25 }
    }
}

/// A tile as seen by the forwarding lookup.
#[derive(Debug, Clone, Copy)]
pub struct TileView<'a> {
    pub frame: TileFrame,
    pub ports: &'a [Port],
    pub rules: ForwardRules,
}

impl<'a> TileView<'a> {
    fn port(&self, id: PortId) -> Result<&'a Port, EmError> {
        self.ports.iter().find(|p| p.port_id == id).ok_or(EmError::UnknownPort(id))
    }
}

/// Power distribution leaving the tile for a wave entering at `in_port`.
pub fn forward(tile: &TileView<'_>, active: &MergedFunction, in_port: PortId) -> Result<BTreeMap<PortId, f64>, EmError> {
    tile.port(in_port)?;
    let mut out: BTreeMap<PortId, f64> = BTreeMap::new();
    let mut matched = false;
    for f in &active.constituents {
        let eps = active.efficiency_of(&f.function_id);
        match &f.template {
            Template::Specular => {
                matched = true;
                for (p, frac) in specular(tile, in_port, eps)? {
                    *out.entry(p).or_default() += frac;
                }
            }
            t if t.in_port() == Some(in_port) => {
                matched = true;
                let outs = t.out_ports();
                let share = if outs.is_empty() { 0.0 } else { eps / outs.len() as f64 };
                // An out-port without a link (a user that moved out of sight
                // since deployment) loses its share.
                for p in outs {
                    if tile.port(p).is_ok() {
                        *out.entry(p).or_default() += share;
                    }
                }
            }
            _ => {}
        }
    }
    if !matched {
        return specular(tile, in_port, tile.rules.unintended_fraction);
    }
    let total: f64 = out.values().sum();
    if total > 1.0 {
        out.values_mut().for_each(|v| *v /= total);
    }
    out.retain(|_, v| *v > 0.0);
    Ok(out)
}

/// Natural behaviour of a deactivated (or virtual) tile.
pub fn forward_natural(tile: &TileView<'_>, in_port: PortId, efficiency: f64) -> Result<BTreeMap<PortId, f64>, EmError> {
    specular(tile, in_port, efficiency)
}

/// Mirror reflection of the wave coming from `in_port`.
///
/// A port is reachable when the line from the mirrored source to the port
/// target crosses the tile square. Of the reachable tile ports only the one
/// best aligned with the mirror direction through the centre continues;
/// every reachable user port also receives a share. `efficiency` is split
/// evenly over the outputs.
pub fn specular(tile: &TileView<'_>, in_port: PortId, efficiency: f64) -> Result<BTreeMap<PortId, f64>, EmError> {
    let src = tile.port(in_port)?.target;
    let frame = tile.frame;
    let mut out = BTreeMap::new();
    if (src - frame.center).dot(frame.normal) <= 0.0 || efficiency <= 0.0 {
        return Ok(out);
    }
    let image = src.mirror(frame.center, frame.normal);
    let mirror_dir = (frame.center - image).normalized();
    let mut best_tile: Option<(f64, PortId)> = None;
    let mut users = BTreeSet::new();
    for p in tile.ports {
        if p.port_id == in_port {
            continue;
        }
        let h_b = (p.target - frame.center).dot(frame.normal);
        if h_b <= 0.0 {
            continue;
        }
        let h_a = (image - frame.center).dot(frame.normal);
        let t = h_a / (h_a - h_b);
        let hit = image + (p.target - image) * t;
        if !frame.contains(hit) {
            continue;
        }
        match p.kind {
            PortKind::UserLink => {
                users.insert(p.port_id);
            }
            PortKind::TileLink => {
                let score = p.direction.dot(mirror_dir);
                if best_tile.is_none_or(|(s, id)| score > s || (score == s && p.port_id < id)) {
                    best_tile = Some((score, p.port_id));
                }
            }
        }
    }
    let count = users.len() + usize::from(best_tile.is_some());
    if count == 0 {
        return Ok(out);
    }
    let share = efficiency / count as f64;
    for u in users {
        out.insert(u, share);
    }
    if let Some((_, id)) = best_tile {
        out.insert(id, share);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn func(id: &str, bias: &[u8], eps: f64) -> EmFunction {
        EmFunction {
            function_id: id.into(),
            template: Template::Steer { in_port: PortId(1), out_port: PortId(3) },
            bias_vector: bias.to_vec(),
            efficiency: eps,
        }
    }

    #[test]
    fn merge_single_is_identity() {
        let f = func("f1", &[1, 2, 3, 0], 0.7);
        let m = merge(std::slice::from_ref(&f)).unwrap();
        assert_eq!(m.merged_bias, f.bias_vector);
        assert_eq!(m.efficiency_of("f1"), 0.7);
    }

    #[test]
    fn merge_identical_keeps_efficiency() {
        let f = func("a", &[1, 2, 3, 0], 0.7);
        let g = EmFunction { function_id: "b".into(), ..f.clone() };
        let m = merge(&[f, g]).unwrap();
        assert_eq!(m.efficiency_of("a"), 0.7);
        assert_eq!(m.efficiency_of("b"), 0.7);
    }

    #[test]
    fn merge_worked_example() {
        // Cell modes: {1,1}=1, {1,3}->tie->1, {2,3}->tie->2, {2,2}=2.
        let f1 = func("f1", &[1, 1, 2, 2], 0.8);
        let f2 = func("f2", &[1, 3, 3, 2], 0.9);
        let m = merge(&[f1, f2]).unwrap();
        assert_eq!(m.merged_bias, vec![1, 1, 2, 2]);
        assert!((m.efficiency_of("f1") - 0.8).abs() < 1e-15);
        assert!((m.efficiency_of("f2") - 0.45).abs() < 1e-15);
    }

    #[test]
    fn merge_errors() {
        assert_eq!(merge(&[]), Err(EmError::EmptyFunctionList));
        let r = merge(&[func("a", &[1, 2], 0.5), func("b", &[1], 0.5)]);
        assert!(matches!(r, Err(EmError::MismatchedCellCount { .. })));
    }

    fn frame() -> TileFrame {
        TileFrame {
            center: Vec3::ZERO,
            normal: Vec3::new(0., 0., 1.),
            axis_u: Vec3::new(1., 0., 0.),
            axis_v: Vec3::new(0., 1., 0.),
            half_side: 0.5,
        }
    }

    fn port(id: u32, target: Vec3, kind: PortKind) -> Port {
        Port { port_id: PortId(id), direction: target.normalized(), target, kind }
    }

    fn ports() -> Vec<Port> {
        vec![
            port(1, Vec3::new(-3., 0., 3.), PortKind::TileLink),
            port(2, Vec3::new(0., -3., 3.), PortKind::TileLink),
            port(3, Vec3::new(3., 0., 3.), PortKind::TileLink),
            port(4, Vec3::new(0., 3., 3.), PortKind::TileLink),
        ]
    }

    #[test]
    fn forward_steer_absorb_and_unintended() {
        let ports = ports();
        let tile = TileView { frame: frame(), ports: &ports, rules: ForwardRules::default() };
        let steer = merge(&[func("s", &[0; 4], 0.8)]).unwrap();
        let out = forward(&tile, &steer, PortId(1)).unwrap();
        assert_eq!(out, BTreeMap::from([(PortId(3), 0.8)]));

        let absorb = merge(&[EmFunction {
            function_id: "abs".into(),
            template: Template::Absorb { in_port: PortId(1) },
            bias_vector: vec![0; 4],
            efficiency: 1.0,
        }])
        .unwrap();
        assert!(forward(&tile, &absorb, PortId(1)).unwrap().is_empty());

        // Port 2 is mirrored onto port 4.
        let out = forward(&tile, &steer, PortId(2)).unwrap();
        assert_eq!(out, BTreeMap::from([(PortId(4), 0.25)]));

        assert_eq!(forward(&tile, &steer, PortId(9)), Err(EmError::UnknownPort(PortId(9))));
    }

    #[test]
    fn codebook_lookup_and_roundtrip() {
        let mut cb = Codebook::new(4);
        cb.insert(func("s", &[0, 1, 2, 3], 0.9)).unwrap();
        assert_eq!(codebook_lookup(&cb, "s").unwrap().efficiency, 0.9);
        assert_eq!(codebook_lookup(&cb, "x"), Err(EmError::UnknownFunction("x".into())));
        let json = serde_json::to_string(&cb).unwrap();
        let back: Codebook = serde_json::from_str(&json).unwrap();
        assert_eq!(codebook_lookup(&back, "s").unwrap(), codebook_lookup(&cb, "s").unwrap());
    }
}

//! The PWE graph: tiles, users and the symmetric links between them.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::em::{
    self, Codebook, EmError, EmFunction, ForwardRules, MergedFunction, Port, PortId, PortKind, Template, TileFrame,
    TileView,
};
use crate::geometry::{
    visibility_with, FresnelRule, GeometryError, Obstacle, TilePlacement, Vec3, VisibilityKind, SPEED_OF_LIGHT,
};

pub type NodeIdx = usize;
pub type LinkIdx = usize;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("duplicate node id `{0}`")]
    DuplicateId(String),
    #[error("coated tile `{0}` has no codebook")]
    MissingCodebook(String),
    #[error("unknown user `{0}`")]
    UnknownUser(String),
    #[error("unknown tile `{0}`")]
    UnknownTile(String),
    #[error("function `{function}` is not supported by tile `{tile}`")]
    UnsupportedFunction { tile: String, function: String },
    #[error("transmitter and receiver are the same user")]
    SameUser,
    #[error("power-delay profile is empty")]
    EmptyProfile,
    #[error(transparent)]
    Em(#[from] EmError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Radiation pattern used for ε_t / ε_r along a link direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Antenna {
    Isotropic {
        #[serde(default = "one")]
        efficiency: f64,
    },
    /// `efficiency · cos^m θ` in the front hemisphere with `m` placing the
    /// -3 dB point at half the beamwidth; zero behind.
    Horn {
        boresight: Vec3,
        beamwidth_deg: f64,
        #[serde(default = "one")]
        efficiency: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl Default for Antenna {
    fn default() -> Self {
        Antenna::Isotropic { efficiency: 1.0 }
    }
}

impl Antenna {
    pub fn gain(&self, direction: Vec3) -> f64 {
        match *self {
            Antenna::Isotropic { efficiency } => efficiency,
            Antenna::Horn { boresight, beamwidth_deg, efficiency } => {
                let c = direction.normalized().dot(boresight.normalized());
                if c <= 0.0 {
                    return 0.0;
                }
                let half = (beamwidth_deg * 0.5).to_radians();
                let m = 0.5f64.ln() / half.cos().ln();
                efficiency * c.powf(m)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserNode {
    pub user_id: String,
    pub position: Vec3,
    pub antenna: Antenna,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

/// Parameters for generating a tile's codebook once its ports are known.
///
/// Steering bias vectors are the quantised phase gradient that turns the
/// arrival direction into the departure direction across an n×n cell grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthCodebook {
    pub cells_per_side: usize,
    pub states: u8,
    pub steer_efficiency: f64,
    pub collimating: bool,
    /// Reflectivity of the deactivated tile.
    pub natural_efficiency: f64,
}

impl Default for SynthCodebook {
    fn default() -> Self {
        SynthCodebook { cells_per_side: 8, states: 4, steer_efficiency: 0.9, collimating: true, natural_efficiency: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CodebookSpec {
    Synth(SynthCodebook),
    Explicit {
        codebook: Codebook,
        collimating: bool,
        natural_efficiency: f64,
    },
}

/// The function set F_n of a tile.
#[derive(Debug, Clone, PartialEq)]
pub enum TileFunctions {
    /// Virtual tile: specular reflection only.
    Virtual { efficiency: f64 },
    Synth { spec: SynthCodebook, wavelength: f64 },
    Explicit { codebook: Codebook, collimating: bool, natural_efficiency: f64 },
}

pub const SPECULAR_ID: &str = "specular";

pub fn steer_id(in_port: PortId, out_port: PortId) -> String {
    format!("steer:{in_port}>{out_port}")
}

pub fn absorb_id(in_port: PortId) -> String {
    format!("absorb:{in_port}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct TileNode {
    pub tile_id: String,
    pub placement: TilePlacement,
    pub functions: TileFunctions,
    pub ports: Vec<Port>,
}

impl TileNode {
    pub fn frame(&self) -> TileFrame {
        TileFrame {
            center: self.placement.center,
            normal: self.placement.normal,
            axis_u: self.placement.axis_u,
            axis_v: self.placement.axis_v,
            half_side: self.placement.side_length * 0.5,
        }
    }

    pub fn is_collimating(&self) -> bool {
        match &self.functions {
            TileFunctions::Virtual { .. } => false,
            TileFunctions::Synth { spec, .. } => spec.collimating,
            TileFunctions::Explicit { collimating, .. } => *collimating,
        }
    }

    pub fn natural_efficiency(&self) -> f64 {
        match &self.functions {
            TileFunctions::Virtual { efficiency } => *efficiency,
            TileFunctions::Synth { spec, .. } => spec.natural_efficiency,
            TileFunctions::Explicit { natural_efficiency, .. } => *natural_efficiency,
        }
    }

    pub fn is_virtual(&self) -> bool {
        matches!(self.functions, TileFunctions::Virtual { .. })
    }

    pub fn port(&self, id: PortId) -> Option<&Port> {
        self.ports.iter().find(|p| p.port_id == id)
    }

    pub fn cell_count(&self) -> usize {
        match &self.functions {
            TileFunctions::Virtual { .. } => 0,
            TileFunctions::Synth { spec, .. } => spec.cells_per_side * spec.cells_per_side,
            TileFunctions::Explicit { codebook, .. } => codebook.cell_count,
        }
    }

    /// Look up a supported function by id.
    pub fn function(&self, function_id: &str) -> Result<EmFunction, GraphError> {
        let unsupported =
            || GraphError::UnsupportedFunction { tile: self.tile_id.clone(), function: function_id.to_string() };
        match &self.functions {
            TileFunctions::Virtual { efficiency } => {
                if function_id == SPECULAR_ID {
                    Ok(EmFunction {
                        function_id: SPECULAR_ID.into(),
                        template: Template::Specular,
                        bias_vector: vec![],
                        efficiency: *efficiency,
                    })
                } else {
                    Err(unsupported())
                }
            }
            TileFunctions::Explicit { codebook, .. } => {
                em::codebook_lookup(codebook, function_id).cloned().map_err(|_| unsupported())
            }
            TileFunctions::Synth { spec, wavelength } => {
                let parse_port = |s: &str| s.parse::<u32>().ok().map(PortId).filter(|p| self.port(*p).is_some());
                if let Some(rest) = function_id.strip_prefix("steer:") {
                    let (a, b) = rest.split_once('>').ok_or_else(unsupported)?;
                    let (a, b) = (parse_port(a).ok_or_else(unsupported)?, parse_port(b).ok_or_else(unsupported)?);
                    if a == b {
                        return Err(unsupported());
                    }
                    Ok(self.synth_steer(spec, *wavelength, a, b))
                } else if let Some(rest) = function_id.strip_prefix("absorb:") {
                    let a = parse_port(rest).ok_or_else(unsupported)?;
                    Ok(EmFunction {
                        function_id: absorb_id(a),
                        template: Template::Absorb { in_port: a },
                        bias_vector: self.absorb_bias(spec, a),
                        efficiency: 1.0,
                    })
                } else {
                    Err(unsupported())
                }
            }
        }
    }

    /// Every function the tile supports for waves entering at `in_port`.
    pub fn functions_for_input(&self, in_port: PortId) -> Vec<EmFunction> {
        match &self.functions {
            TileFunctions::Virtual { .. } => self.function(SPECULAR_ID).into_iter().collect(),
            TileFunctions::Explicit { codebook, .. } => codebook
                .entries
                .values()
                .filter(|f| f.template.in_port().is_none_or(|p| p == in_port))
                .cloned()
                .collect(),
            TileFunctions::Synth { spec, wavelength } => {
                let mut v: Vec<EmFunction> = self
                    .ports
                    .iter()
                    .filter(|p| p.port_id != in_port)
                    .map(|p| self.synth_steer(spec, *wavelength, in_port, p.port_id))
                    .collect();
                if let Ok(a) = self.function(&absorb_id(in_port)) {
                    v.push(a);
                }
                v
            }
        }
    }

    /// The STEER function from `in_port` to `out_port`, if supported.
    pub fn steer(&self, in_port: PortId, out_port: PortId) -> Option<EmFunction> {
        match &self.functions {
            TileFunctions::Virtual { .. } => None,
            TileFunctions::Synth { .. } => self.function(&steer_id(in_port, out_port)).ok(),
            TileFunctions::Explicit { codebook, .. } => codebook
                .entries
                .values()
                .find(|f| f.template == Template::Steer { in_port, out_port })
                .cloned(),
        }
    }

    /// Highest efficiency among STEER functions entering at `in_port`.
    pub fn best_steer_efficiency(&self, in_port: PortId) -> Option<f64> {
        match &self.functions {
            TileFunctions::Virtual { .. } => None,
            TileFunctions::Synth { spec, .. } => {
                let has_in = self.ports.iter().any(|p| p.port_id == in_port);
                (has_in && self.ports.len() > 1).then_some(spec.steer_efficiency)
            }
            TileFunctions::Explicit { codebook, .. } => codebook
                .entries
                .values()
                .filter(|f| matches!(f.template, Template::Steer { in_port: a, .. } if a == in_port))
                .map(|f| f.efficiency)
                .fold(None, |m: Option<f64>, e| Some(m.map_or(e, |m| m.max(e)))),
        }
    }

    pub fn absorb(&self, in_port: PortId) -> Option<EmFunction> {
        match &self.functions {
            TileFunctions::Virtual { .. } => None,
            TileFunctions::Synth { .. } => self.function(&absorb_id(in_port)).ok(),
            TileFunctions::Explicit { codebook, .. } => {
                codebook.entries.values().find(|f| f.template == Template::Absorb { in_port }).cloned()
            }
        }
    }

    fn cell_positions(&self, n: usize) -> impl Iterator<Item = Vec3> + '_ {
        let side = self.placement.side_length;
        let (u, v) = (self.placement.axis_u, self.placement.axis_v);
        (0..n * n).map(move |k| {
            let (i, j) = (k / n, k % n);
            u * (((i as f64 + 0.5) / n as f64 - 0.5) * side) + v * (((j as f64 + 0.5) / n as f64 - 0.5) * side)
        })
    }

    fn synth_steer(&self, spec: &SynthCodebook, wavelength: f64, a: PortId, b: PortId) -> EmFunction {
        let pa = self.port(a).expect("port checked by caller");
        let pb = self.port(b).expect("port checked by caller");
        let k = 2.0 * PI / wavelength;
        let g = pa.direction + pb.direction;
        let states = spec.states.max(2);
        let bias = self
            .cell_positions(spec.cells_per_side)
            .map(|r| {
                // Phase that equalises the path length through each cell.
                let phi = (k * g.dot(r)).rem_euclid(2.0 * PI);
                ((phi / (2.0 * PI) * states as f64).round() as u32 % states as u32) as u8
            })
            .collect();
        EmFunction {
            function_id: steer_id(a, b),
            template: Template::Steer { in_port: a, out_port: b },
            bias_vector: bias,
            efficiency: spec.steer_efficiency,
        }
    }

    fn absorb_bias(&self, spec: &SynthCodebook, a: PortId) -> Vec<u8> {
        // Checkerboard offset by the port id: destructive re-radiation.
        let n = spec.cells_per_side;
        let states = spec.states.max(2);
        (0..n * n).map(|k| ((k / n + k % n + a.0 as usize) % 2) as u8 * (states / 2)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkKind {
    InterTile,
    UserTile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub a: NodeIdx,
    pub b: NodeIdx,
    pub length: f64,
    pub delay: f64,
    pub nlos_factor: f64,
    pub kind: LinkKind,
}

impl Link {
    pub fn other(&self, n: NodeIdx) -> NodeIdx {
        if self.a == n {
            self.b
        } else {
            self.a
        }
    }
}

/// Settings that shape graph construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GraphParams {
    pub frequency_hz: f64,
    pub fresnel: FresnelRule,
    pub forward: ForwardRules,
    /// Reflectivity of uncoated (virtual) tiles.
    pub virtual_efficiency: f64,
}

impl Default for GraphParams {
    fn default() -> Self {
        GraphParams {
            frequency_hz: 60e9,
            fresnel: FresnelRule::default(),
            forward: ForwardRules::default(),
            virtual_efficiency: 1.0,
        }
    }
}

/// Immutable PWE graph. Tiles occupy node indices `0..tiles.len()`, users follow.
#[derive(Debug, Clone, PartialEq)]
pub struct PweGraph {
    pub tiles: Vec<TileNode>,
    pub users: Vec<UserNode>,
    pub links: Vec<Link>,
    pub params: GraphParams,
    pub obstacles: Vec<Obstacle>,
    adjacency: Vec<Vec<(NodeIdx, LinkIdx)>>,
    index: HashMap<String, NodeIdx>,
}

pub fn build_graph(
    obstacles: &[Obstacle],
    placements: &[TilePlacement],
    users: &[UserNode],
    codebooks: &BTreeMap<String, CodebookSpec>,
    params: GraphParams,
) -> Result<PweGraph, GraphError> {
    let mut index = HashMap::new();
    for (i, id) in placements.iter().map(|p| &p.tile_id).chain(users.iter().map(|u| &u.user_id)).enumerate() {
        if index.insert(id.clone(), i).is_some() {
            return Err(GraphError::DuplicateId(id.clone()));
        }
    }
    let wavelength = SPEED_OF_LIGHT / params.frequency_hz;
    let mut tiles = Vec::with_capacity(placements.len());
    for p in placements {
        let functions = if !p.coated {
            TileFunctions::Virtual { efficiency: params.virtual_efficiency }
        } else {
            match codebooks.get(&p.tile_id).or_else(|| codebooks.get(&p.surface_id)).or_else(|| codebooks.get("*")) {
                Some(CodebookSpec::Synth(spec)) => TileFunctions::Synth { spec: *spec, wavelength },
                Some(CodebookSpec::Explicit { codebook, collimating, natural_efficiency }) => TileFunctions::Explicit {
                    codebook: codebook.clone(),
                    collimating: *collimating,
                    natural_efficiency: *natural_efficiency,
                },
                None => return Err(GraphError::MissingCodebook(p.tile_id.clone())),
            }
        };
        tiles.push(TileNode { tile_id: p.tile_id.clone(), placement: p.clone(), functions, ports: vec![] });
    }
    let mut links = Vec::new();
    for i in 0..tiles.len() {
        for j in i + 1..tiles.len() {
            if let Some(l) = tile_link(&tiles[i].placement, &tiles[j].placement, i, j, obstacles, &params)? {
                links.push(l);
            }
        }
    }
    let mut g = PweGraph {
        tiles,
        users: users.to_vec(),
        links,
        params,
        obstacles: obstacles.to_vec(),
        adjacency: vec![],
        index,
    };
    for u in 0..g.users.len() {
        let new_links = g.user_links(g.tiles.len() + u)?;
        g.links.extend(new_links);
    }
    g.rebuild_ports();
    Ok(g)
}

fn tile_link(
    a: &TilePlacement,
    b: &TilePlacement,
    ia: NodeIdx,
    ib: NodeIdx,
    obstacles: &[Obstacle],
    params: &GraphParams,
) -> Result<Option<Link>, GraphError> {
    let coplanar = a.normal.dot(b.normal) > 1.0 - 1e-9 && a.height_of(b.center).abs() < 1e-9;
    if a.surface_id == b.surface_id || coplanar {
        return Ok(None);
    }
    if a.height_of(b.center) <= 1e-9 || b.height_of(a.center) <= 1e-9 {
        return Ok(None);
    }
    let vis = visibility_with(a.center, b.center, obstacles, params.frequency_hz, &params.fresnel)?;
    if vis.kind == VisibilityKind::Blocked {
        return Ok(None);
    }
    let length = a.center.distance(b.center);
    Ok(Some(Link {
        a: ia,
        b: ib,
        length,
        delay: length / SPEED_OF_LIGHT,
        nlos_factor: vis.attenuation_factor,
        kind: LinkKind::InterTile,
    }))
}

impl PweGraph {
    fn user_links(&self, user: NodeIdx) -> Result<Vec<Link>, GraphError> {
        let pos = self.users[user - self.tiles.len()].position;
        Ok(self
            .tiles_in_sight(pos)?
            .into_iter()
            .map(|i| {
                let length = pos.distance(self.tiles[i].placement.center);
                Link { a: i, b: user, length, delay: length / SPEED_OF_LIGHT, nlos_factor: 1.0, kind: LinkKind::UserTile }
            })
            .collect())
    }

    fn rebuild_ports(&mut self) {
        let n = self.node_count();
        let mut adjacency = vec![Vec::new(); n];
        for (li, l) in self.links.iter().enumerate() {
            adjacency[l.a].push((l.b, li));
            adjacency[l.b].push((l.a, li));
        }
        for adj in adjacency.iter_mut() {
            adj.sort_unstable();
        }
        self.adjacency = adjacency;
        for t in 0..self.tiles.len() {
            self.tiles[t].ports = self.ports_of(t);
        }
    }

    /// Copy of the graph with one user moved; only that user's links change.
    pub fn with_user_position(&self, user_id: &str, position: Vec3) -> Result<PweGraph, GraphError> {
        let mut g = self.clone();
        g.move_user(user_id, position)?;
        Ok(g)
    }

    /// Move a user in place, re-linking it and patching the ports of the
    /// tiles it saw before or sees now.
    pub fn move_user(&mut self, user_id: &str, position: Vec3) -> Result<(), GraphError> {
        let node = self.user_node(user_id)?;
        let old = self.users[node - self.tiles.len()].position;
        self.users[node - self.tiles.len()].position = position;
        let new_links = match self.user_links(node) {
            Ok(l) => l,
            Err(e) => {
                self.users[node - self.tiles.len()].position = old;
                return Err(e);
            }
        };
        let mut touched: Vec<NodeIdx> = self.adjacency[node].iter().map(|&(n, _)| n).collect();
        touched.extend(new_links.iter().map(|l| l.other(node)));
        touched.sort_unstable();
        touched.dedup();
        // Link indices after the removed ones shift down.
        let removed: Vec<LinkIdx> = self.adjacency[node].iter().map(|&(_, l)| l).collect();
        let mut sorted_removed = removed.clone();
        sorted_removed.sort_unstable();
        let shift = |li: LinkIdx| li - sorted_removed.partition_point(|&r| r < li);
        self.links.retain(|l| l.a != node && l.b != node);
        for adj in self.adjacency.iter_mut() {
            adj.retain(|&(nb, _)| nb != node);
            for e in adj.iter_mut() {
                e.1 = shift(e.1);
            }
        }
        self.adjacency[node].clear();
        for l in new_links {
            let li = self.links.len();
            self.adjacency[l.a].push((l.b, li));
            self.adjacency[l.b].push((l.a, li));
            self.links.push(l);
        }
        for &n in touched.iter().chain(std::iter::once(&node)) {
            self.adjacency[n].sort_unstable();
        }
        let nt = self.tiles.len();
        for &t in touched.iter().filter(|&&t| t < nt) {
            let ports = self.ports_of(t);
            self.tiles[t].ports = ports;
        }
        Ok(())
    }

    fn ports_of(&self, t: NodeIdx) -> Vec<Port> {
        let c = self.tiles[t].placement.center;
        let nt = self.tiles.len();
        self.adjacency[t]
            .iter()
            .map(|&(nb, _)| {
                let target = self.position(nb);
                Port {
                    port_id: PortId(nb as u32),
                    direction: (target - c).normalized(),
                    target,
                    kind: if nb < nt { PortKind::TileLink } else { PortKind::UserLink },
                }
            })
            .collect()
    }

    /// Tiles a user standing at `position` would see, without moving it.
    pub fn tiles_in_sight(&self, position: Vec3) -> Result<Vec<NodeIdx>, GraphError> {
        let mut out = Vec::new();
        for (i, t) in self.tiles.iter().enumerate() {
            if t.placement.height_of(position) <= 1e-9 {
                continue;
            }
            let vis = visibility_with(position, t.placement.center, &self.obstacles, self.params.frequency_hz, &self.params.fresnel)?;
            if vis.kind == VisibilityKind::Los {
                out.push(i);
            }
        }
        Ok(out)
    }

    pub fn node_count(&self) -> usize {
        self.tiles.len() + self.users.len()
    }

    pub fn is_tile(&self, n: NodeIdx) -> bool {
        n < self.tiles.len()
    }

    pub fn position(&self, n: NodeIdx) -> Vec3 {
        if n < self.tiles.len() {
            self.tiles[n].placement.center
        } else {
            self.users[n - self.tiles.len()].position
        }
    }

    pub fn node_id(&self, n: NodeIdx) -> &str {
        if n < self.tiles.len() {
            &self.tiles[n].tile_id
        } else {
            &self.users[n - self.tiles.len()].user_id
        }
    }

    pub fn node(&self, id: &str) -> Option<NodeIdx> {
        self.index.get(id).copied()
    }

    pub fn user_node(&self, id: &str) -> Result<NodeIdx, GraphError> {
        self.node(id)
            .filter(|&n| !self.is_tile(n))
            .ok_or_else(|| GraphError::UnknownUser(id.to_string()))
    }

    pub fn tile_node(&self, id: &str) -> Result<NodeIdx, GraphError> {
        self.node(id).filter(|&n| self.is_tile(n)).ok_or_else(|| GraphError::UnknownTile(id.to_string()))
    }

    pub fn user(&self, n: NodeIdx) -> &UserNode {
        &self.users[n - self.tiles.len()]
    }

    /// Neighbours of `n` with the connecting link, sorted by neighbour index.
    pub fn neighbors(&self, n: NodeIdx) -> &[(NodeIdx, LinkIdx)] {
        &self.adjacency[n]
    }

    pub fn link_between(&self, a: NodeIdx, b: NodeIdx) -> Option<LinkIdx> {
        let adj = &self.adjacency[a];
        adj.binary_search_by(|&(nb, _)| nb.cmp(&b)).ok().map(|k| adj[k].1)
    }

    pub fn tile_view(&self, t: NodeIdx) -> TileView<'_> {
        let tile = &self.tiles[t];
        TileView { frame: tile.frame(), ports: &tile.ports, rules: self.params.forward }
    }

    /// Power distribution leaving tile `t` for a wave arriving from node `from`.
    pub fn forward_at(
        &self,
        config: &Configuration,
        t: NodeIdx,
        from: NodeIdx,
    ) -> Result<BTreeMap<PortId, f64>, GraphError> {
        let view = self.tile_view(t);
        let in_port = PortId(from as u32);
        let out = match config.assignment.get(&t) {
            Some(m) => em::forward(&view, m, in_port)?,
            None => em::forward_natural(&view, in_port, self.tiles[t].natural_efficiency())?,
        };
        Ok(out)
    }
}

/// Tiles in LOS of a user.
pub fn first_contact_tiles(graph: &PweGraph, user_id: &str) -> Result<Vec<NodeIdx>, GraphError> {
    let u = graph.user_node(user_id)?;
    Ok(graph.neighbors(u).iter().map(|&(n, _)| n).filter(|&n| graph.is_tile(n)).collect())
}

/// Per-tile function assignment; a missing entry means deactivated (∅).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Configuration {
    pub assignment: BTreeMap<NodeIdx, MergedFunction>,
    pub round_index: usize,
}

impl Configuration {
    pub fn empty() -> Self {
        Configuration::default()
    }

    pub fn get(&self, tile: NodeIdx) -> Option<&MergedFunction> {
        self.assignment.get(&tile)
    }

    /// Check every constituent is in the tile's supported set.
    pub fn validate(&self, graph: &PweGraph) -> Result<(), GraphError> {
        for (&t, m) in &self.assignment {
            let tile = graph.tiles.get(t).ok_or_else(|| GraphError::UnknownTile(t.to_string()))?;
            for f in &m.constituents {
                tile.function(&f.function_id)?;
            }
        }
        Ok(())
    }

    /// Build a configuration from per-tile function-id lists.
    pub fn from_function_ids(
        graph: &PweGraph,
        ids: &BTreeMap<NodeIdx, Vec<String>>,
    ) -> Result<Configuration, GraphError> {
        let mut assignment = BTreeMap::new();
        for (&t, fids) in ids {
            if fids.is_empty() {
                continue;
            }
            let tile = graph.tiles.get(t).ok_or_else(|| GraphError::UnknownTile(t.to_string()))?;
            let funcs = fids.iter().map(|f| tile.function(f)).collect::<Result<Vec<_>, _>>()?;
            assignment.insert(t, em::merge(&funcs)?);
        }
        Ok(Configuration { assignment, round_index: 0 })
    }

    /// Set every coated tile to absorb on all of its input ports.
    pub fn absorb_all(graph: &PweGraph, except: &HashSet<NodeIdx>) -> Configuration {
        let mut assignment = BTreeMap::new();
        for (t, tile) in graph.tiles.iter().enumerate() {
            if tile.is_virtual() || except.contains(&t) {
                continue;
            }
            let funcs: Vec<EmFunction> = tile.ports.iter().filter_map(|p| tile.absorb(p.port_id)).collect();
            if let Ok(m) = em::merge(&funcs) {
                assignment.insert(t, m);
            }
        }
        Configuration { assignment, round_index: 0 }
    }
}

//! Scenario files, CSV emission and run manifests.
//!
//! A scenario is one JSON document. Unknown keys are rejected and every
//! physical quantity carries its unit in the key name.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::ChannelParams;
use crate::geometry::{tile_surface, Floorplan, Obstacle, TilePlacement, Vec3};
use crate::graph::{build_graph, Antenna, CodebookSpec, Configuration, GraphParams, PweGraph, SynthCodebook, UserNode};
use crate::optimize::{OptimizerSpec, UserObjective};
use crate::schedule::{ExactLimits, UpdateGraph, UpdateProblem};
use crate::sim::{BroadcastChannel, SimParams, SimSetup, Trajectory, ZCorridor};

/// One validation finding, addressed by a dotted key path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Issue {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("invalid scenario:\n{}", .0.iter().map(|i| format!("  {i}")).collect::<Vec<_>>().join("\n"))]
    Validation(Vec<Issue>),
}

impl ScenarioError {
    pub fn issues(&self) -> &[Issue] {
        match self {
            ScenarioError::Validation(v) => v,
            _ => &[],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FloorplanSpec {
    ZCorridor {
        #[serde(flatten)]
        corridor: ZCorridor,
    },
    Explicit {
        #[serde(flatten)]
        floorplan: Floorplan,
    },
}

impl FloorplanSpec {
    pub fn floorplan(&self) -> Floorplan {
        match self {
            FloorplanSpec::ZCorridor { corridor } => corridor.floorplan(),
            FloorplanSpec::Explicit { floorplan } => floorplan.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TileSpec {
    pub side_length_m: f64,
    pub allow_truncation: bool,
    /// Surfaces left bare; their tiles are virtual specular reflectors.
    pub uncoated_surfaces: Vec<String>,
    /// Codebooks keyed by tile id, surface id or `*`.
    pub codebooks: BTreeMap<String, CodebookSpec>,
}

impl Default for TileSpec {
    fn default() -> Self {
        TileSpec {
            side_length_m: 1.0,
            allow_truncation: false,
            uncoated_surfaces: vec![],
            codebooks: BTreeMap::from([("*".to_string(), CodebookSpec::Synth(SynthCodebook::default()))]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserSpec {
    pub user_id: String,
    /// Position in metres; for a mobile user the first waypoint is used when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position_m: Option<Vec3>,
    #[serde(default)]
    pub antenna: Antenna,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<Trajectory>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl UserSpec {
    pub fn position(&self) -> Option<Vec3> {
        self.position_m.or_else(|| self.trajectory.as_ref().and_then(|t| t.waypoints.first().copied()))
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationSpec {
    #[serde(flatten)]
    pub params: SimParams,
    /// Objective index the simulation serves.
    pub objective: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleSpec {
    /// Node-id pairs to serve per round.
    pub rounds: Vec<Vec<(String, String)>>,
    /// Tiles active before the first round; users are always active.
    pub initially_active: Vec<String>,
    pub exact_limits: ExactLimits,
    pub relax_attempts: usize,
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        ScheduleSpec { rounds: vec![], initially_active: vec![], exact_limits: ExactLimits::default(), relax_attempts: 200 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub floorplan: FloorplanSpec,
    #[serde(default)]
    pub tiles: TileSpec,
    pub users: Vec<UserSpec>,
    #[serde(default)]
    pub channel: ChannelParams,
    #[serde(default)]
    pub graph: GraphParams,
    #[serde(default)]
    pub objectives: Vec<UserObjective>,
    #[serde(default)]
    pub optimizer: OptimizerSpec,
    #[serde(default)]
    pub broadcast: BroadcastChannel,
    #[serde(default)]
    pub simulation: SimulationSpec,
    #[serde(default)]
    pub schedule: ScheduleSpec,
}

/// A validated scenario with its graph built.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub file: ScenarioFile,
    pub graph: PweGraph,
}

fn json_error(e: serde_json::Error) -> ScenarioError {
    ScenarioError::Parse { line: e.line(), column: e.column(), message: e.to_string() }
}

pub fn parse_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ScenarioError::Io { path: path.display().to_string(), message: e.to_string() })?;
    parse_scenario_str(&text)
}

pub fn parse_scenario_str(text: &str) -> Result<Scenario, ScenarioError> {
    let file: ScenarioFile = serde_json::from_str(text).map_err(json_error)?;
    file.build()
}

impl ScenarioFile {
    /// Canonical pretty-printed form with every default spelled out.
    pub fn to_canonical_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("scenario serialises");
        s.push('\n');
        s
    }

    pub fn placements(&self) -> Result<Vec<TilePlacement>, Vec<Issue>> {
        let fp = self.floorplan.floorplan();
        let mut out = Vec::new();
        let mut issues = Vec::new();
        for (i, s) in fp.surfaces.iter().enumerate() {
            let coated = !self.tiles.uncoated_surfaces.contains(&s.id);
            match tile_surface(s, self.tiles.side_length_m, self.tiles.allow_truncation, coated) {
                Ok(t) => out.extend(t),
                Err(e) => issues.push(Issue { path: format!("floorplan.surfaces[{i}]"), message: e.to_string() }),
            }
        }
        if issues.is_empty() {
            Ok(out)
        } else {
            Err(issues)
        }
    }

    /// Every finding at once; an empty list means the scenario is usable.
    pub fn validate(&self) -> Vec<Issue> {
        let mut issues = Vec::new();
        let mut push = |path: &str, message: String| issues.push(Issue { path: path.into(), message });
        match &self.floorplan {
            FloorplanSpec::ZCorridor { corridor } => {
                if let Err(m) = corridor.validate() {
                    push("floorplan", m);
                }
            }
            FloorplanSpec::Explicit { floorplan } => {
                if let Err(e) = floorplan.validate() {
                    push("floorplan", e.to_string());
                }
            }
        }
        let fp = self.floorplan.floorplan();
        if !(self.tiles.side_length_m > 0.0) {
            push("tiles.side_length_m", format!("must be positive, got {}", self.tiles.side_length_m));
        }
        for (i, s) in self.tiles.uncoated_surfaces.iter().enumerate() {
            if !fp.surfaces.iter().any(|x| &x.id == s) {
                push(&format!("tiles.uncoated_surfaces[{i}]"), format!("unknown surface `{s}`"));
            }
        }
        if let Err(m) = self.channel.validate() {
            push("channel", m);
        }
        if !(self.graph.frequency_hz > 0.0) {
            push("graph.frequency_hz", format!("must be positive, got {}", self.graph.frequency_hz));
        }
        if self.graph.frequency_hz != self.channel.frequency_hz {
            push(
                "graph.frequency_hz",
                format!("differs from channel.frequency_hz ({} vs {})", self.graph.frequency_hz, self.channel.frequency_hz),
            );
        }
        let bounds = fp.bounds();
        let inside = |p: Vec3| -> bool {
            let Some((lo, hi)) = bounds else { return true };
            (0..3).all(|a| p.component(a) >= lo.component(a) - 1e-9 && p.component(a) <= hi.component(a) + 1e-9)
                && !fp.obstacles.iter().any(|o: &Obstacle| o.shrunk(1e-9).distance_to(p) == 0.0)
        };
        let mut ids = BTreeSet::new();
        if self.users.is_empty() {
            push("users", "at least one user is required".into());
        }
        for (i, u) in self.users.iter().enumerate() {
            let base = format!("users[{i}]");
            if !ids.insert(u.user_id.as_str()) {
                push(&format!("{base}.user_id"), format!("duplicate id `{}`", u.user_id));
            }
            match u.position() {
                None => push(&format!("{base}.position_m"), "required for a user without trajectory".into()),
                Some(p) if !inside(p) => push(&format!("{base}.position_m"), format!("{:?} lies outside the floorplan", p.to_array())),
                _ => {}
            }
            if let Antenna::Horn { beamwidth_deg, boresight, .. } = u.antenna {
                if !(beamwidth_deg > 0.0 && beamwidth_deg < 180.0) {
                    push(&format!("{base}.antenna.beamwidth_deg"), format!("must be in (0, 180), got {beamwidth_deg}"));
                }
                if !(boresight.norm() > 0.0) {
                    push(&format!("{base}.antenna.boresight"), "must be non-zero".into());
                }
            }
            if let Some(t) = &u.trajectory {
                if !(t.speed_mps > 0.0) {
                    push(&format!("{base}.trajectory.speed_mps"), format!("must be positive, got {}", t.speed_mps));
                }
                if t.waypoints.len() < 2 {
                    push(&format!("{base}.trajectory.waypoints"), "need at least 2 waypoints".into());
                }
                for (j, w) in t.waypoints.iter().enumerate() {
                    if !inside(*w) {
                        push(&format!("{base}.trajectory.waypoints[{j}]"), "lies outside the floorplan".into());
                    }
                }
            }
        }
        for (i, o) in self.objectives.iter().enumerate() {
            let base = format!("objectives[{i}]");
            for (key, id) in [("tx_id", &o.tx_id), ("rx_id", &o.rx_id)] {
                if !ids.contains(id.as_str()) {
                    push(&format!("{base}.{key}"), format!("unknown user `{id}`"));
                }
            }
            if let Err(e) = o.validate() {
                push(&format!("{base}.metrics"), e.to_string());
            }
        }
        if let Err(e) = self.broadcast.validate() {
            push("broadcast", e.to_string());
        }
        let sim = &self.simulation.params;
        if !(sim.dt_s > 0.0) {
            push("simulation.dt_s", format!("must be positive, got {}", sim.dt_s));
        }
        if !self.objectives.is_empty() && self.simulation.objective >= self.objectives.len() {
            push("simulation.objective", format!("index {} out of range", self.simulation.objective));
        }
        issues
    }

    pub fn build(self) -> Result<Scenario, ScenarioError> {
        let mut issues = self.validate();
        let placements = match self.placements() {
            Ok(p) => p,
            Err(mut e) => {
                issues.append(&mut e);
                vec![]
            }
        };
        if !issues.is_empty() {
            return Err(ScenarioError::Validation(issues));
        }
        let users: Vec<UserNode> = self
            .users
            .iter()
            .map(|u| UserNode {
                user_id: u.user_id.clone(),
                position: u.position().expect("validated"),
                antenna: u.antenna,
                label: u.label.clone(),
            })
            .collect();
        let fp = self.floorplan.floorplan();
        let graph = build_graph(&fp.obstacles, &placements, &users, &self.tiles.codebooks, self.graph)
            .map_err(|e| ScenarioError::Validation(vec![Issue { path: "tiles".into(), message: e.to_string() }]))?;
        Ok(Scenario { file: self, graph })
    }
}

impl Scenario {
    pub fn user(&self, id: &str) -> Option<&UserSpec> {
        self.file.users.iter().find(|u| u.user_id == id)
    }

    /// Simulation inputs for the selected objective's receiver.
    pub fn sim_setup(&self, seed: Option<u64>) -> Result<SimSetup, ScenarioError> {
        let invalid = |path: &str, message: &str| {
            ScenarioError::Validation(vec![Issue { path: path.into(), message: message.into() }])
        };
        let objective = self
            .file
            .objectives
            .get(self.file.simulation.objective)
            .ok_or_else(|| invalid("objectives", "simulation needs an objective"))?
            .clone();
        let rx = self.user(&objective.rx_id).expect("validated");
        let trajectory = rx
            .trajectory
            .clone()
            .ok_or_else(|| invalid("users", &format!("receiver `{}` has no trajectory", rx.user_id)))?;
        let mut params = self.file.simulation.params;
        if let Some(s) = seed {
            params.seed = s;
        }
        let mut optimizer = self.file.optimizer.clone();
        if let OptimizerSpec::Explorer { options } = &mut optimizer {
            options.seed = params.seed;
        }
        Ok(SimSetup {
            graph: self.graph.clone(),
            channel: self.file.channel,
            objective,
            optimizer,
            trajectory,
            broadcast: self.file.broadcast,
            params,
        })
    }

    /// Update problem over the PWE graph for the scheduled rounds.
    pub fn update_problem(&self) -> Result<UpdateProblem, ScenarioError> {
        let g = &self.graph;
        let mut issues = Vec::new();
        let mut rounds = Vec::new();
        for (t, round) in self.file.schedule.rounds.iter().enumerate() {
            let mut pairs = Vec::new();
            for (k, (s, d)) in round.iter().enumerate() {
                match (g.node(s), g.node(d)) {
                    (Some(a), Some(b)) => pairs.push((a, b)),
                    _ => issues.push(Issue { path: format!("schedule.rounds[{t}][{k}]"), message: format!("unknown node in ({s}, {d})") }),
                }
            }
            rounds.push(pairs);
        }
        if rounds.is_empty() {
            issues.push(Issue { path: "schedule.rounds".into(), message: "at least one round is required".into() });
        }
        let mut active: Vec<bool> = (0..g.node_count()).map(|n| !g.is_tile(n)).collect();
        for (i, id) in self.file.schedule.initially_active.iter().enumerate() {
            match g.node(id) {
                Some(n) => active[n] = true,
                None => issues.push(Issue { path: format!("schedule.initially_active[{i}]"), message: format!("unknown tile `{id}`") }),
            }
        }
        if !issues.is_empty() {
            return Err(ScenarioError::Validation(issues));
        }
        // Users terminate waves: they only emit as sources and absorb as sinks.
        let sources: BTreeSet<usize> = rounds.iter().flatten().map(|p| p.0).collect();
        let sinks: BTreeSet<usize> = rounds.iter().flatten().map(|p| p.1).collect();
        let mut graph = UpdateGraph::from_pwe(g);
        graph.arcs.retain(|&(u, v)| (g.is_tile(u) || sources.contains(&u)) && (g.is_tile(v) || sinks.contains(&v)));
        Ok(UpdateProblem { graph, initial_active: active, pairs_per_round: rounds })
    }
}

pub const NODES_CSV_HEADER: &str = "node_index,node_id,kind,x,y,z,surface_id,coated";
pub const LINKS_CSV_HEADER: &str = "link_index,a_id,b_id,kind,length_m,delay_ns,nlos_factor";
pub const CONFIG_CSV_HEADER: &str = "tile_id,function";

pub fn nodes_csv(g: &PweGraph) -> String {
    let mut s = format!("{NODES_CSV_HEADER}\n");
    for n in 0..g.node_count() {
        let p = g.position(n);
        if g.is_tile(n) {
            let t = &g.tiles[n];
            let kind = if t.is_virtual() { "virtual_tile" } else { "tile" };
            let _ = writeln!(s, "{n},{},{kind},{},{},{},{},{}", t.tile_id, p.x, p.y, p.z, t.placement.surface_id, t.placement.coated);
        } else {
            let _ = writeln!(s, "{n},{},user,{},{},{},,", g.node_id(n), p.x, p.y, p.z);
        }
    }
    s
}

pub fn links_csv(g: &PweGraph) -> String {
    let mut s = format!("{LINKS_CSV_HEADER}\n");
    for (i, l) in g.links.iter().enumerate() {
        let kind = match l.kind {
            crate::graph::LinkKind::InterTile => "tile_tile",
            crate::graph::LinkKind::UserTile => "user_tile",
        };
        let _ = writeln!(
            s,
            "{i},{},{},{kind},{},{},{}",
            g.node_id(l.a),
            g.node_id(l.b),
            l.length,
            l.delay * 1e9,
            l.nlos_factor
        );
    }
    s
}

/// One row per tile; deactivated tiles read `off`.
pub fn configuration_csv(g: &PweGraph, c: &Configuration) -> String {
    let mut s = format!("{CONFIG_CSV_HEADER}\n");
    for (t, tile) in g.tiles.iter().enumerate() {
        let d = c.get(t).map_or_else(|| "off".to_string(), |m| m.descriptor());
        let _ = writeln!(s, "{},{}", tile.tile_id, d);
    }
    s
}

/// Reproducibility record written next to every output set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub outputs: Vec<String>,
    pub scenario: ScenarioFile,
}

impl Manifest {
    pub fn new(command: &str, seed: u64, outputs: Vec<String>, scenario: &ScenarioFile) -> Self {
        Manifest {
            tool: "pwe".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            seed,
            outputs,
            scenario: scenario.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serialises");
        s.push('\n');
        s
    }
}

/// The factory corridor scenario: Z-shaped corridor fully coated on walls
/// and ceiling, upward horns, receiver on the corridor centre line and the
/// transmitter at the far end.
pub fn factory_scenario() -> ScenarioFile {
    let corridor = ZCorridor::default();
    let height = 1.0;
    let mut route = corridor.centre_line(height);
    route[0].x += 0.25;
    let end = route.pop().unwrap();
    let tx = end + Vec3::new(-0.5, 0.0, 0.0);
    route.push(tx + Vec3::new(-1.0, 0.0, 0.0));
    let horn = Antenna::Horn { boresight: Vec3::new(0.0, 0.0, 1.0), beamwidth_deg: 80.0, efficiency: 1.0 };
    let mut objective = UserObjective::new(
        "tx",
        "rx",
        vec![(crate::optimize::Metric::MinDopplerSpread, 1.0), (crate::optimize::Metric::MaxRxPower, 1.0)],
    );
    objective.constraints.perpendicular =
        Some(crate::optimize::Perpendicular { trajectory: Vec3::new(1.0, 0.0, 0.0), tolerance: 0.1 });
    ScenarioFile {
        name: Some("factory".into()),
        floorplan: FloorplanSpec::ZCorridor { corridor },
        tiles: TileSpec {
            codebooks: BTreeMap::from([(
                "*".to_string(),
                CodebookSpec::Synth(SynthCodebook { collimating: false, ..SynthCodebook::default() }),
            )]),
            side_length_m: 0.5,
            ..TileSpec::default()
        },
        users: vec![
            UserSpec { user_id: "tx".into(), position_m: Some(tx), antenna: horn, trajectory: None, label: None },
            UserSpec {
                user_id: "rx".into(),
                position_m: None,
                antenna: horn,
                trajectory: Some(Trajectory { waypoints: route, speed_mps: 1.0, start_time_s: 0.0 }),
                label: None,
            },
        ],
        channel: ChannelParams::default(),
        graph: GraphParams::default(),
        objectives: vec![objective],
        optimizer: OptimizerSpec::Kpaths {
            options: crate::optimize::PathOptions { k: 2, candidate_slack: 4, absorb_unused: true },
        },
        broadcast: BroadcastChannel::default(),
        simulation: SimulationSpec::default(),
        schedule: ScheduleSpec::default(),
    }
}

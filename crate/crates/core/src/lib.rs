//! Programmable wireless environments as graphs of metasurface tiles.
//!
//! The crate covers the whole pipeline: floorplan geometry and visibility
//! ([`geometry`]), EM functions and the router model ([`em`]), the tile
//! graph ([`graph`]) and channel computation over it ([`channel`]),
//! configuration heuristics ([`optimize`]), consistent update scheduling
//! ([`schedule`]), mobile-receiver simulation ([`sim`]), scenario files and
//! CSV output ([`scenario`]) and the PDP query service ([`service`]).

pub mod channel;
pub mod em;
pub mod geometry;
pub mod graph;
pub mod optimize;
pub mod scenario;
pub mod schedule;
pub mod service;
pub mod sim;

pub use channel::{compute_pdp, doppler_spread, rms_delay_spread, ChannelParams, PathRecord, PowerDelayProfile};
pub use em::{merge, Codebook, EmFunction, MergedFunction, PortId, Template};
pub use geometry::{Floorplan, Obstacle, Surface, TilePlacement, Vec3, Visibility, VisibilityKind};
pub use graph::{build_graph, Configuration, GraphError, PweGraph, UserNode};
pub use optimize::{OptimizeError, OptimizerSpec, UserObjective};
pub use scenario::{factory_scenario, parse_scenario, parse_scenario_str, Scenario, ScenarioError, ScenarioFile};
pub use schedule::{build_model, relax_and_round, solve_exact, validate_consistency, ScheduleError, UpdateSchedule};
pub use sim::{run_both, run_scenario, BroadcastChannel, PweMode, TimeSeries, Trajectory};

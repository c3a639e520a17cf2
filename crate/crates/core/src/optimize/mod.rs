//! Configuration optimizers and the objective framework they report against.

pub mod backprop;
pub mod explorer;
pub mod objective;
pub mod paths;
pub mod routing;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::ChannelParams;
use crate::graph::{Configuration, GraphError, PweGraph};

pub use backprop::{backprop_configure, wall_route, BackpropOptions, BackpropResult, WallMlp};
pub use explorer::{explorer_search, ExplorerOptions, ExplorerResult, ExplorerRoute};
pub use objective::{
    comparator, evaluate, free_tiles, touches, Metric, ObjectiveReport, PathConstraints, Perpendicular, SoftLimits,
    UserObjective, UserReport,
};
pub use paths::{k_shortest_configure, lexicographic_greedy, loss_graph, PathConfiguration, PathOptions, SelectedPath};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimizeError {
    #[error("unknown metric `{0}`")]
    UnknownMetric(String),
    #[error("invalid objective: {0}")]
    InvalidObjective(String),
    #[error("no feasible path from `{tx}` to `{rx}`")]
    NoFeasiblePath { tx: String, rx: String },
    #[error("no wave reached any receiver")]
    NoArrivals,
    #[error("no wall route between the users")]
    EmptyWallRoute,
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Optimizer selection with its parameters, as read from a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerSpec {
    Kpaths {
        #[serde(flatten)]
        options: PathOptions,
    },
    Lexicographic {
        #[serde(default)]
        absorb_unused: bool,
    },
    Explorer {
        #[serde(flatten)]
        options: ExplorerOptions,
    },
    Backprop {
        #[serde(flatten)]
        options: BackpropOptions,
    },
}

impl Default for OptimizerSpec {
    fn default() -> Self {
        OptimizerSpec::Kpaths { options: PathOptions::default() }
    }
}

impl OptimizerSpec {
    pub fn name(&self) -> &'static str {
        match self {
            OptimizerSpec::Kpaths { .. } => "kpaths",
            OptimizerSpec::Lexicographic { .. } => "lexicographic",
            OptimizerSpec::Explorer { .. } => "explorer",
            OptimizerSpec::Backprop { .. } => "backprop",
        }
    }

    /// Default parameters for an optimizer name.
    pub fn from_name(name: &str) -> Option<OptimizerSpec> {
        Some(match name {
            "kpaths" => OptimizerSpec::Kpaths { options: PathOptions::default() },
            "lexicographic" => OptimizerSpec::Lexicographic { absorb_unused: false },
            "explorer" => OptimizerSpec::Explorer { options: ExplorerOptions::default() },
            "backprop" => OptimizerSpec::Backprop { options: BackpropOptions::default() },
            _ => return None,
        })
    }

    /// Run the optimizer. Backprop serves the first objective only.
    pub fn configure(
        &self,
        graph: &PweGraph,
        objectives: &[UserObjective],
        params: &ChannelParams,
    ) -> Result<Configuration, OptimizeError> {
        Ok(self.run(graph, objectives, params)?.configuration)
    }

    /// Like [`OptimizerSpec::configure`], also returning the selected paths
    /// where the optimizer works on explicit paths (kpaths, lexicographic).
    pub fn run(
        &self,
        graph: &PweGraph,
        objectives: &[UserObjective],
        params: &ChannelParams,
    ) -> Result<PathConfiguration, OptimizeError> {
        for o in objectives {
            o.validate()?;
        }
        let bare = |configuration| PathConfiguration { configuration, paths: Vec::new() };
        Ok(match self {
            OptimizerSpec::Kpaths { options } => k_shortest_configure(graph, objectives, params, options)?,
            OptimizerSpec::Lexicographic { absorb_unused } => lexicographic_greedy(graph, objectives, params, *absorb_unused)?,
            OptimizerSpec::Explorer { options } => bare(explorer_search(graph, objectives, params, options)?.configuration),
            OptimizerSpec::Backprop { options } => {
                let o = objectives.first().ok_or_else(|| OptimizeError::InvalidObjective("no objectives".into()))?;
                bare(backprop_configure(graph, o, params, options)?.configuration)
            }
        })
    }
}

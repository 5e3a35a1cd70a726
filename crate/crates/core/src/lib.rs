//! Wi-Fi RSSI indoor positioning for shared human/robot workspaces.
//!
//! The pipeline mirrors a small three-node deployment: two agent nodes (one
//! worn by a human, one mounted on a robot) sample RSSI from three access
//! points, convert it to range with a log-distance path-loss model and report
//! the ranges to a central server. The server trilaterates both agents and
//! flags separations under [`PROXIMITY_THRESHOLD_M`]. Linear classifiers in
//! [`ml`] learn the same proximity label from the noisy estimates.
//!
//! Modules:
//! - [`pathloss`]: RSSI synthesis, inversion and (A, n) calibration.
//! - [`locator`]: closed-form trilateration, least-squares fallback.
//! - [`scenario`]: arena, trajectories and the direct simulation pipeline.
//! - [`netsim`]: wire format, lossy channel and the server state machine.
//! - [`ml`]: logistic regression, hinge SGD and linear SVC.
//! - [`eval`]: positioning statistics and the scenario × model bench table.

pub mod error;
pub mod eval;
pub mod locator;
pub mod ml;
pub mod netsim;
pub mod pathloss;
pub mod rng;
pub mod scenario;

pub use error::{Error, Result};
pub use locator::{AnchorLayout, DistanceVector, Position};
pub use pathloss::{NoiseConfig, PathLossParams, RssiSample};
pub use scenario::{GroundTruthFrame, ScenarioSpec};

/// Separation (meters) strictly below which human and robot are "close".
pub const PROXIMITY_THRESHOLD_M: f64 = 0.5;

/// Proximity label for a separation. Exactly 0.5 m is safe.
#[inline]
pub fn proximity_label(separation_m: f64) -> u8 {
    u8::from(separation_m < PROXIMITY_THRESHOLD_M)
}

/// The two tracked agents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[derive(serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Agent {
    Human,
    Robot,
}

impl Agent {
    pub fn node_id(self) -> u8 {
        match self {
            Agent::Human => 1,
            Agent::Robot => 2,
        }
    }

    pub fn from_node_id(id: u8) -> Option<Self> {
        match id {
            1 => Some(Agent::Human),
            2 => Some(Agent::Robot),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Agent::Human => "human",
            Agent::Robot => "robot",
        }
    }
}

impl std::fmt::Display for Agent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

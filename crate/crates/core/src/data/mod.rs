//! Trajectories, fixed-length window samples, and the preprocessing pipeline.
//!
//! Coordinates are ego-relative meters (`x` forward, `y` lateral with
//! negative values to the left of the ego-vehicle, `z` up); `d` is the
//! heading angle relative to the road centerline in radians, kept in
//! `[−π, π)`.

mod io;
mod ops;
mod prepared;
mod resample;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

pub use io::{load_trajectories, save_trajectories, LabelMap};
pub use ops::{filter_rare_classes, filter_short, histogram, split, window, ClassMap};
pub use prepared::{prepare, PrepConfig, PreparedDataset, StageCount};
pub use resample::{class_weights, ros, rus, Resample};

/// Channels per trajectory point: x, y, z, d.
pub const FEATURES: usize = 4;
/// Points per window sample.
pub const WINDOW: usize = 5;
/// Shortest trajectory kept by [`filter_short`] by default.
pub const MIN_TRAJECTORY_LEN: usize = 7;
/// Classes with fewer windows are dropped by default.
pub const MIN_CLASS_COUNT: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    Vehicle,
    Pedestrian,
    Rider,
}

impl AgentKind {
    pub const ALL: [AgentKind; 3] = [AgentKind::Vehicle, AgentKind::Pedestrian, AgentKind::Rider];

    pub fn as_str(self) -> &'static str {
        match self {
            AgentKind::Vehicle => "vehicle",
            AgentKind::Pedestrian => "pedestrian",
            AgentKind::Rider => "rider",
        }
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AgentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "vehicle" => Ok(AgentKind::Vehicle),
            "pedestrian" => Ok(AgentKind::Pedestrian),
            "rider" => Ok(AgentKind::Rider),
            other => Err(Error::Config(format!(
                "unknown agent kind {other:?} (expected vehicle, pedestrian or rider)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajectoryPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub d: f64,
    pub label: usize,
    pub frame: u64,
}

impl TrajectoryPoint {
    pub fn state(&self) -> [f64; FEATURES] {
        [self.x, self.y, self.z, self.d]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub agent_id: String,
    pub kind: AgentKind,
    pub points: Vec<TrajectoryPoint>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// One training/evaluation unit: consecutive states labeled by the last point.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowSample {
    /// Rows are times `t−4 … t`; columns x, y, z, d.
    pub states: Vec<[f64; FEATURES]>,
    pub label: usize,
    pub agent_id: String,
    pub end_frame: u64,
}

impl WindowSample {
    pub fn source(&self) -> (&str, u64) {
        (&self.agent_id, self.end_frame)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<WindowSample>,
    pub test: Vec<WindowSample>,
    pub class_names: Vec<String>,
    pub seed: u64,
}

impl DatasetSplit {
    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }
}

/// Wraps an angle into `[−π, π)`. Values already in range are returned unchanged.
pub fn wrap_angle(d: f64) -> f64 {
    use std::f64::consts::PI;
    if (-PI..PI).contains(&d) {
        return d;
    }
    let r = (d + PI).rem_euclid(2.0 * PI) - PI;
    if r >= PI {
        r - 2.0 * PI
    } else {
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn wrap_angle_range() {
        assert_eq!(wrap_angle(0.3), 0.3);
        assert_eq!(wrap_angle(PI), -PI);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        for i in -100..100 {
            let w = wrap_angle(i as f64 * 0.37);
            assert!((-PI..PI).contains(&w));
        }
    }
}

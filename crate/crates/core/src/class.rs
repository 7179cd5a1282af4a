use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActorClass {
    Vehicle,
    Pedestrian,
    Bicyclist,
}

impl ActorClass {
    pub const ALL: [ActorClass; 3] = [ActorClass::Vehicle, ActorClass::Pedestrian, ActorClass::Bicyclist];

    pub fn name(self) -> &'static str {
        match self {
            ActorClass::Vehicle => "vehicle",
            ActorClass::Pedestrian => "pedestrian",
            ActorClass::Bicyclist => "bicyclist",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// IoU needed for a detection of this class to count as a true positive.
    pub fn iou_threshold(self) -> f64 {
        match self {
            ActorClass::Vehicle => 0.7,
            ActorClass::Pedestrian => 0.1,
            ActorClass::Bicyclist => 0.3,
        }
    }

    /// Number of trajectory modes predicted for this class.
    pub fn num_modes(self) -> usize {
        match self {
            ActorClass::Vehicle => 3,
            _ => 1,
        }
    }
}

impl fmt::Display for ActorClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ActorClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Input(format!("unknown actor class `{s}`")))
    }
}

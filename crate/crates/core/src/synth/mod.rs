//! Deterministic synthetic scenarios: actor tracks with designed maneuvers,
//! simulated lidar sweeps, simple maps and label noise with known diversities.

mod io;
mod noise;
pub mod rng;
mod scenario;
mod spec;
mod sweep;

pub use io::{
    load_sweeps, read_pts_records, read_scenario, scenario_from_json, scenario_to_json, write_pts_record,
    write_scenario_files, PTS_MAGIC,
};
pub use noise::{apply_label_noise, inject_outliers, perturb_labels};
pub use rng::StreamRng;
pub use scenario::{generate, ActorTrack, Maneuver, Scenario, SCENARIO_VERSION};
pub use spec::{
    apportion, nominal_extent, ClassRatios, ManeuverMix, OutlierSpec, ScenarioSpec, SensorSpec, SpeedRanges, TURN_MAX, TURN_MIN,
};
pub use sweep::{simulate_all_sweeps, simulate_sweep, SweepParams};

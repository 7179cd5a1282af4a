pub mod class;
pub mod cli;
pub mod error;
pub mod geometry;
pub mod losses;
pub mod metrics;
pub mod raster;
pub mod synth;
pub mod trainer;

pub use class::ActorClass;
pub use error::{Error, Result};

//! Occlusion-boundary toolkit: exact ground truth from triangle-mesh scenes,
//! scribble-driven refinement, and boundary evaluation (ODS/OIS/AP).

pub mod dataset;
pub mod error;
pub mod geometry;
pub mod interaction;
pub mod metrics;
pub mod obgen;
pub mod predictors;
pub mod raster;
pub mod simulate;
pub mod synthetic;

pub use error::{Error, Result};

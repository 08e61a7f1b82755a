//! Open-vocabulary 3D multi-object tracking by detection.
//!
//! The tracker links class-agnostic 3D box proposals into identities. Class
//! labels come afterwards: every 3D box is projected into the camera images
//! and takes the label of the best-overlapping 2D open-vocabulary detection.
//! A per-track scoring pass then weights those labels by apparent distance and
//! predicted confidence, picks one class per track, and drops tracks that never
//! matched a 2D detection.
//!
//! Module map:
//! - [`geometry`]: rotated boxes, BEV/3D/2D IoU, pinhole projection
//! - [`assignment`]: Hungarian solver and class-agnostic ground-truth ID assignment
//! - [`tracker`]: association graph, affinity and confidence models, track lifecycle
//! - [`ovlabel`]: 3D to 2D label transfer
//! - [`consistency`]: depth-weighted per-track class selection
//! - [`metrics`]: AMOTA/AMOTP evaluation and base/novel splits
//! - [`simulator`]: deterministic synthetic scenes
//! - [`io`], [`config`], [`pipeline`]: file formats and end-to-end commands

pub mod assignment;
pub mod config;
pub mod consistency;
mod error;
pub mod geometry;
pub mod io;
pub mod learn;
pub mod metrics;
pub mod ovlabel;
pub mod pipeline;
pub mod simulator;
pub mod tracker;

pub use error::{Error, Result};

/// The seven tracking classes shared by the simulator, splits and evaluation.
pub const CLASSES: [&str; 7] = [
    "bicycle",
    "bus",
    "car",
    "motorcycle",
    "pedestrian",
    "trailer",
    "truck",
];

pub fn is_known_class(name: &str) -> bool {
    CLASSES.contains(&name)
}

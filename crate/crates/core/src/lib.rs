//! Deterministic numerics for sparse-input full-body pose estimation with
//! state-space-duality scans, kinematic-tree scan orders, SO(3) losses and
//! motion metrics.

pub mod bench;
pub mod commands;
pub mod error;
pub mod infer;
pub mod io;
pub mod kinematics;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod pose;
pub mod rotations;
pub mod ssd;
pub mod synth;
pub mod train;
pub mod verify;

pub use error::{Error, Result};

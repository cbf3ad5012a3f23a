//! Desk-scale engine for geometry-aided self-supervised monocular depth
//! optimization: coarse-pose ingestion and refinement, photometric
//! reprojection losses, iterative self-distillation and evaluation, applied
//! to a directly optimized disparity pyramid on synthetic scenes with known
//! ground truth.

pub mod cli;
pub mod colmap;
pub mod config;
pub mod depth;
pub mod error;
pub mod export;
pub mod geometry;
pub mod image;
pub mod isd;
pub mod metrics;
pub mod optim;
pub mod photometric;
pub mod pose;
pub mod synth;

pub use error::{Error, Result};

//! Anomalous-diffusion trajectory simulation, residual 1-D CNN
//! classification, and Grad-CAM based analysis.

pub mod autodiff;
pub mod error;
pub mod experiments;
pub mod gradcam;
pub mod network;
pub mod stats;
pub mod trajgen;

pub use error::{Error, Result};

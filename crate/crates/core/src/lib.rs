//! Observation-guided diffusion sampling for SE(3) manipulation actions.
//!
//! The sampler wraps any noise-prediction model: each reverse DDPM step is
//! followed by a correction along the Chamfer gradient between the posed
//! gripper cloud and the scene, optionally normalized to the radius of the
//! step's Gaussian shell, and sampling can start from a registration-based
//! proposal instead of pure noise.

pub mod diffusion;
pub mod error;
pub mod guidance;
pub mod harness;
pub mod pointcloud;
pub mod registration;
pub mod rng;
pub mod taskbench;
pub mod se3;

pub use error::{Error, Result};

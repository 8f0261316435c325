//! Noise schedules, forward diffusion, DDPM/DDIM reverse steps and the
//! denoiser interface.

pub mod dataset;
mod normalize;
mod oracle;
mod sampler;
mod schedule;
pub mod toy;
pub mod weights;

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::pointcloud::PointCloud;
use crate::se3::{ActionVector, ACTION_DIM};

pub use normalize::{ActionNormalizer, MIN_HALF_RANGE};
pub use oracle::GaussianOracle;
pub use sampler::{ddim_step, ddpm_step, forward_diffuse, forward_diffuse_sampled, sample_ddim, sample_ddpm};
pub use schedule::{make_schedule, NoiseSchedule, ScheduleKind, ScheduleSpec, VarianceKind};
pub use toy::{train_toy_denoiser, ToyDenoiser, TrainConfig, TrainReport};

/// What the policy sees at one keypose.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    /// Gripper points in the gripper frame.
    pub gripper: Arc<PointCloud>,
    /// Goal-region scene points in the world frame.
    pub scene: Arc<PointCloud>,
    /// Most recent encoded poses, oldest first.
    pub history: Vec<[f64; ACTION_DIM]>,
    pub task_id: u32,
}

impl Observation {
    pub fn new(gripper: Arc<PointCloud>, scene: Arc<PointCloud>, history: Vec<[f64; ACTION_DIM]>, task_id: u32) -> Result<Self> {
        if history.is_empty() {
            return Err(Error::InvalidConfig("observation history needs at least one pose".into()));
        }
        if gripper.is_empty() || scene.is_empty() {
            return Err(Error::EmptyCloud);
        }
        Ok(Self {
            gripper,
            scene,
            history,
            task_id,
        })
    }
}

/// Noise-prediction model `ε_θ(observation, x_t, t)`.
///
/// `t` is a step of the schedule the model was trained on, so samplers on a
/// respaced schedule pass [`NoiseSchedule::model_t`]. `x` is in the
/// model's coordinates, see [`Denoiser::normalizer`].
pub trait Denoiser: Send + Sync {
    fn predict(&self, obs: &Observation, x: &ActionVector, t: usize) -> Result<Vec<f64>>;

    /// Map from encoded actions to the coordinates the model diffuses in.
    fn normalizer(&self) -> ActionNormalizer {
        ActionNormalizer::identity()
    }
}

impl<D: Denoiser + ?Sized> Denoiser for &D {
    fn predict(&self, obs: &Observation, x: &ActionVector, t: usize) -> Result<Vec<f64>> {
        (**self).predict(obs, x, t)
    }

    fn normalizer(&self) -> ActionNormalizer {
        (**self).normalizer()
    }
}

impl<D: Denoiser + ?Sized> Denoiser for Box<D> {
    fn predict(&self, obs: &Observation, x: &ActionVector, t: usize) -> Result<Vec<f64>> {
        (**self).predict(obs, x, t)
    }

    fn normalizer(&self) -> ActionNormalizer {
        (**self).normalizer()
    }
}

impl<D: Denoiser + ?Sized> Denoiser for Arc<D> {
    fn predict(&self, obs: &Observation, x: &ActionVector, t: usize) -> Result<Vec<f64>> {
        (**self).predict(obs, x, t)
    }

    fn normalizer(&self) -> ActionNormalizer {
        (**self).normalizer()
    }
}

pub(crate) fn check_prediction(x: &ActionVector, eps: &[f64]) -> Result<()> {
    if eps.len() != x.len() {
        return Err(Error::Denoiser(format!("prediction has length {}, expected {}", eps.len(), x.len())));
    }
    if eps.iter().any(|e| !e.is_finite()) {
        return Err(Error::Denoiser("prediction is not finite".into()));
    }
    Ok(())
}

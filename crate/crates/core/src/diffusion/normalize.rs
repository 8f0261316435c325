//! Per-slot affine map between encoded actions and the coordinates a model
//! diffuses in: `action = offset + scale·z`, the same for every block.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::se3::{ActionVector, ACTION_DIM};

/// Floor on the half-range of a fitted slot, in encoding units.
pub const MIN_HALF_RANGE: f64 = 0.01;

/// Slots fitted to `[-1, 1]`: translation and width. Rotation columns are
/// already unit-scale and pass through.
const FITTED: std::ops::Range<usize> = 6..ACTION_DIM;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionNormalizer {
    pub offset: [f64; ACTION_DIM],
    pub scale: [f64; ACTION_DIM],
}

impl Default for ActionNormalizer {
    fn default() -> Self {
        Self::identity()
    }
}

impl ActionNormalizer {
    pub fn identity() -> Self {
        Self {
            offset: [0.0; ACTION_DIM],
            scale: [1.0; ACTION_DIM],
        }
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::identity()
    }

    /// Map the min/max of the translation and width slots over all blocks of
    /// `actions` to `[-1, 1]`.
    pub fn fit<'a>(actions: impl IntoIterator<Item = &'a ActionVector>) -> Result<Self> {
        let mut lo = [f64::INFINITY; ACTION_DIM];
        let mut hi = [f64::NEG_INFINITY; ACTION_DIM];
        for a in actions {
            for block in a.blocks() {
                for i in FITTED {
                    lo[i] = lo[i].min(block[i]);
                    hi[i] = hi[i].max(block[i]);
                }
            }
        }
        if !lo[FITTED.start].is_finite() {
            return Err(Error::InvalidConfig("cannot fit a normalizer to no actions".into()));
        }
        let mut n = Self::identity();
        for i in FITTED {
            n.offset[i] = 0.5 * (lo[i] + hi[i]);
            n.scale[i] = (0.5 * (hi[i] - lo[i])).max(MIN_HALF_RANGE);
        }
        n.validate()?;
        Ok(n)
    }

    pub fn validate(&self) -> Result<()> {
        if self.offset.iter().any(|o| !o.is_finite()) || self.scale.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidConfig("normalizer needs finite offsets and positive scales".into()));
        }
        Ok(())
    }

    /// Encoded action to model coordinates.
    pub fn to_model(&self, action: &ActionVector) -> Result<ActionVector> {
        action.with_values(
            action
                .as_slice()
                .iter()
                .enumerate()
                .map(|(k, v)| (v - self.offset[k % ACTION_DIM]) / self.scale[k % ACTION_DIM])
                .collect(),
        )
    }

    /// Model coordinates to an encoded action.
    pub fn to_action(&self, z: &ActionVector) -> Result<ActionVector> {
        z.with_values(
            z.as_slice()
                .iter()
                .enumerate()
                .map(|(k, v)| self.offset[k % ACTION_DIM] + self.scale[k % ACTION_DIM] * v)
                .collect(),
        )
    }

    /// Turn a gradient with respect to the encoded action into one with
    /// respect to model coordinates, in place.
    pub fn pull_back(&self, grad: &mut [f64]) {
        for (k, g) in grad.iter_mut().enumerate() {
            *g *= self.scale[k % ACTION_DIM];
        }
    }
}

//! Symmetric squared-distance Chamfer loss and its gradient with respect to
//! an encoded action.
//!
//! `L(A, B) = mean_a min_b |a-b|² + mean_b min_a |b-a|²`. The gradient holds
//! nearest-neighbour correspondences fixed at the current pose, which makes it
//! exact wherever those assignments are locally constant.

use nalgebra::{Matrix3, Vector3};

use super::{NearestIndex, PointCloud};
use crate::error::{Error, Result};
use crate::se3::{self, ActionVector, Pose, ACTION_DIM};

/// Chamfer distance between two non-empty clouds.
pub fn chamfer(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let ia = NearestIndex::build(a)?;
    let ib = NearestIndex::build(b)?;
    Ok(one_sided(a, &ib) + one_sided(b, &ia))
}

fn one_sided(from: &PointCloud, to: &NearestIndex) -> f64 {
    from.points().iter().map(|p| to.nearest(p).1).sum::<f64>() / from.len() as f64
}

/// A scene cloud with its prebuilt index, reused across guidance evaluations.
#[derive(Debug, Clone)]
pub struct ChamferTarget {
    scene: PointCloud,
    index: NearestIndex,
}

impl ChamferTarget {
    pub fn new(scene: PointCloud) -> Result<Self> {
        let index = NearestIndex::build(&scene)?;
        Ok(Self { scene, index })
    }

    pub fn scene(&self) -> &PointCloud {
        &self.scene
    }

    pub fn index(&self) -> &NearestIndex {
        &self.index
    }

    /// Chamfer distance between `gripper` posed at `pose` and the scene.
    pub fn loss(&self, pose: &Pose, gripper: &PointCloud) -> Result<f64> {
        let moved = se3::apply_transform(pose, gripper);
        let moved_index = NearestIndex::build(&moved)?;
        Ok(one_sided(&moved, &self.index) + one_sided(&self.scene, &moved_index))
    }

    /// Nearest-neighbour assignments in both directions at `pose`.
    pub fn correspondences(&self, pose: &Pose, gripper: &PointCloud) -> Result<Correspondences> {
        let moved = se3::apply_transform(pose, gripper);
        let moved_index = NearestIndex::build(&moved)?;
        Ok(Correspondences {
            gripper_to_scene: moved.points().iter().map(|p| self.index.nearest(p).0).collect(),
            scene_to_gripper: self.scene.points().iter().map(|q| moved_index.nearest(q).0).collect(),
        })
    }
}

/// Fixed nearest-neighbour assignments used by the gradient.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Correspondences {
    pub gripper_to_scene: Vec<usize>,
    pub scene_to_gripper: Vec<usize>,
}

/// Gradient of one action block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockGradient {
    pub grad: [f64; ACTION_DIM],
    pub loss: f64,
    pub degenerate: bool,
}

/// Gradient of a whole action vector, block by block.
#[derive(Debug, Clone, PartialEq)]
pub struct ChamferGradient {
    pub grad: Vec<f64>,
    /// Chamfer value per block at the decoded pose.
    pub losses: Vec<f64>,
    /// True if any block decoded degenerately; those blocks get zero gradient.
    pub degenerate: bool,
}

impl ChamferGradient {
    pub fn norm(&self) -> f64 {
        self.grad.iter().map(|g| g * g).sum::<f64>().sqrt()
    }

    pub fn mean_loss(&self) -> f64 {
        self.losses.iter().sum::<f64>() / self.losses.len().max(1) as f64
    }
}

/// Gradient of `chamfer(apply(decode(block), gripper), scene)` w.r.t. `block`.
pub fn chamfer_grad_block(block: &[f64], gripper: &PointCloud, target: &ChamferTarget) -> Result<BlockGradient> {
    if block.len() != ACTION_DIM {
        return Err(Error::LengthMismatch {
            expected: ACTION_DIM,
            got: block.len(),
        });
    }
    let decoded = se3::decode(block);
    let pose = decoded.action.pose;
    let moved = se3::apply_transform(&pose, gripper);
    let moved_index = NearestIndex::build(&moved)?;
    let scene = target.scene();

    let mut g_rot = Matrix3::zeros();
    let mut g_trans = Vector3::zeros();
    let mut loss = 0.0;

    let ng = gripper.len() as f64;
    for (y, g) in moved.points().iter().zip(gripper.points()) {
        let (j, d2) = target.index().nearest(y);
        let r = y - scene.points()[j];
        loss += d2 / ng;
        let w = 2.0 / ng;
        g_trans += r * w;
        g_rot += (r * w) * g.transpose();
    }
    let ns = scene.len() as f64;
    for s in scene.points() {
        let (i, d2) = moved_index.nearest(s);
        let r = moved.points()[i] - s;
        loss += d2 / ns;
        let w = 2.0 / ns;
        g_trans += r * w;
        g_rot += (r * w) * gripper.points()[i].transpose();
    }

    if decoded.degenerate {
        return Ok(BlockGradient {
            grad: [0.0; ACTION_DIM],
            loss,
            degenerate: true,
        });
    }
    let grad = se3::decode_vjp(block, &g_rot, &g_trans).expect("non-degenerate block");
    Ok(BlockGradient {
        grad,
        loss,
        degenerate: false,
    })
}

/// Gradient of the per-block Chamfer loss for every block of `action`.
pub fn chamfer_grad(action: &ActionVector, gripper: &PointCloud, target: &ChamferTarget) -> Result<ChamferGradient> {
    let mut grad = Vec::with_capacity(action.len());
    let mut losses = Vec::with_capacity(action.n_actions());
    let mut degenerate = false;
    for block in action.blocks() {
        let b = chamfer_grad_block(block, gripper, target)?;
        grad.extend_from_slice(&b.grad);
        losses.push(b.loss);
        degenerate |= b.degenerate;
    }
    Ok(ChamferGradient { grad, losses, degenerate })
}

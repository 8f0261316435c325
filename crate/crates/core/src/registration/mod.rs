//! Global registration by feature matching and graduated non-convexity, with
//! point-to-point ICP refinement.

pub mod fpfh;
mod matching;
pub mod normals;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pointcloud::{NearestIndex, PointCloud};
use crate::se3::Pose;

pub use fpfh::{compute_fpfh, FpfhFeatures, Histogram, FPFH_BINS};
pub use matching::{match_features, CorrespondenceSet, MatchConfig};
pub use normals::{estimate_normals, estimate_normals_toward, NormalEstimate};

/// Where estimated normals are made to point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NormalOrientation {
    Origin,
    #[default]
    Centroid,
}

const MIN_POINTS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FgrConfig {
    /// Radii are these multiples of the surface sampling spacing
    /// ([`PointCloud::surface_spacing`]).
    pub normal_radius_factor: f64,
    pub feature_radius_factor: f64,
    pub inlier_radius_factor: f64,
    pub tuple_ratio: f64,
    pub max_tuples: usize,
    pub max_iterations: usize,
    /// The robust scale is halved every this many iterations.
    pub anneal_every: usize,
    pub normal_orientation: NormalOrientation,
    pub seed: u64,
}

impl Default for FgrConfig {
    fn default() -> Self {
        Self {
            normal_radius_factor: 2.5,
            feature_radius_factor: 5.0,
            inlier_radius_factor: 2.5,
            tuple_ratio: 0.9,
            max_tuples: 1000,
            max_iterations: 64,
            anneal_every: 4,
            normal_orientation: NormalOrientation::Centroid,
            seed: 0,
        }
    }
}

impl FgrConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = |x: f64| x.is_finite() && x > 0.0;
        if !(pos(self.normal_radius_factor) && pos(self.feature_radius_factor) && pos(self.inlier_radius_factor)) {
            return Err(Error::InvalidConfig("FGR radius factors must be positive".into()));
        }
        if !(self.tuple_ratio > 0.0 && self.tuple_ratio < 1.0) {
            return Err(Error::InvalidConfig(format!("tuple ratio {} must lie in (0, 1)", self.tuple_ratio)));
        }
        if self.max_iterations == 0 || self.anneal_every == 0 {
            return Err(Error::InvalidConfig("FGR iteration counts must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistrationResult {
    /// Maps source points onto the target.
    pub pose: Pose,
    /// Fraction of source points within the inlier radius of the target.
    pub fitness: f64,
    /// RMSE over those inlier points.
    pub inlier_rmse: f64,
    pub iterations: usize,
    pub correspondences: usize,
    /// Robust scale at each iteration; constant within an annealing stage.
    pub mu_trace: Vec<f64>,
}

/// Weighted least-squares rotation and translation mapping `src` onto `dst`.
///
/// Returns `None` when the total weight is zero.
pub fn weighted_kabsch(src: &[Vector3<f64>], dst: &[Vector3<f64>], weights: &[f64]) -> Option<Pose> {
    let wsum: f64 = weights.iter().sum();
    if !(wsum > 0.0) {
        return None;
    }
    let cs = src.iter().zip(weights).map(|(p, w)| p * *w).sum::<Vector3<f64>>() / wsum;
    let cd = dst.iter().zip(weights).map(|(p, w)| p * *w).sum::<Vector3<f64>>() / wsum;
    let mut h = Matrix3::zeros();
    for ((p, q), w) in src.iter().zip(dst).zip(weights) {
        h += (q - cd) * (p - cs).transpose() * *w;
    }
    let svd = h.svd(true, true);
    let u = svd.u?;
    let vt = svd.v_t?;
    let mut d = Matrix3::identity();
    if (u * vt).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    let r = u * d * vt;
    Some(Pose::new(r, cd - r * cs))
}

fn radius_scale(source: &PointCloud, target: &PointCloud) -> Result<f64> {
    let s = 0.5 * (source.surface_spacing() + target.surface_spacing());
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::InvalidCloud("clouds need at least two distinct points".into()));
    }
    Ok(s)
}

fn with_normals(cloud: &PointCloud, radius: f64, orientation: NormalOrientation) -> PointCloud {
    let view = match orientation {
        NormalOrientation::Origin => Vector3::zeros(),
        NormalOrientation::Centroid => cloud.centroid(),
    };
    estimate_normals_toward(cloud, radius, &view).cloud
}

/// Fitness and inlier RMSE of `source` under `pose` against `target`.
pub fn evaluate_alignment(source: &PointCloud, target: &NearestIndex, pose: &Pose, inlier_radius: f64) -> (f64, f64) {
    let r2 = inlier_radius * inlier_radius;
    let mut n = 0usize;
    let mut se = 0.0;
    for p in source.points() {
        let d2 = target.nearest(&pose.transform_point(p)).1;
        if d2 <= r2 {
            n += 1;
            se += d2;
        }
    }
    let fitness = n as f64 / source.len() as f64;
    let rmse = if n > 0 { (se / n as f64).sqrt() } else { 0.0 };
    (fitness, rmse)
}

/// Fast global registration of `source` onto `target`.
pub fn fgr_register(source: &PointCloud, target: &PointCloud, cfg: &FgrConfig) -> Result<RegistrationResult> {
    cfg.validate()?;
    if source.len() < MIN_POINTS || target.len() < MIN_POINTS {
        return Err(Error::InvalidCloud(format!(
            "registration needs at least {MIN_POINTS} points per cloud, got {} and {}",
            source.len(),
            target.len()
        )));
    }
    let spacing = radius_scale(source, target)?;
    let src = with_normals(source, cfg.normal_radius_factor * spacing, cfg.normal_orientation);
    let dst = with_normals(target, cfg.normal_radius_factor * spacing, cfg.normal_orientation);
    let fs = compute_fpfh(&src, cfg.feature_radius_factor * spacing)?;
    let fd = compute_fpfh(&dst, cfg.feature_radius_factor * spacing)?;
    let mcfg = MatchConfig {
        tuple_ratio: cfg.tuple_ratio,
        max_tuples: cfg.max_tuples,
        seed: cfg.seed,
    };
    let corr = match_features(&fs, &fd, source, target, &mcfg)?;
    let inlier_radius = cfg.inlier_radius_factor * spacing;
    fgr_optimize(source, target, &corr, inlier_radius, cfg)
}

/// Robust pose estimation over fixed correspondences.
///
/// Geman-McClure line processes with the scale annealed from the squared
/// target diameter down to a quarter of the squared inlier radius.
pub fn fgr_optimize(
    source: &PointCloud,
    target: &PointCloud,
    corr: &CorrespondenceSet,
    inlier_radius: f64,
    cfg: &FgrConfig,
) -> Result<RegistrationResult> {
    let target_index = NearestIndex::build(target)?;
    if corr.pairs.is_empty() {
        return Ok(RegistrationResult {
            pose: Pose::identity(),
            fitness: 0.0,
            inlier_rmse: 0.0,
            iterations: 0,
            correspondences: 0,
            mu_trace: Vec::new(),
        });
    }
    let p: Vec<Vector3<f64>> = corr.pairs.iter().map(|&(i, _)| source.points()[i]).collect();
    let q: Vec<Vector3<f64>> = corr.pairs.iter().map(|&(_, j)| target.points()[j]).collect();
    let diameter = target.diameter();
    let mu_floor = 0.25 * inlier_radius * inlier_radius;
    let mut mu = (diameter * diameter).max(mu_floor);
    let mut pose = Pose::identity();
    let mut trace = Vec::new();
    let mut weights = vec![1.0; p.len()];
    let mut iterations = 0;
    for it in 0..cfg.max_iterations {
        if it > 0 && it % cfg.anneal_every == 0 {
            mu *= 0.5;
        }
        if mu < mu_floor {
            break;
        }
        trace.push(mu);
        for (k, w) in weights.iter_mut().enumerate() {
            let r2 = (pose.transform_point(&p[k]) - q[k]).norm_squared();
            let l = mu / (mu + r2);
            *w = l * l;
        }
        iterations = it + 1;
        match weighted_kabsch(&p, &q, &weights) {
            Some(next) => pose = next,
            None => break,
        }
    }
    let (fitness, inlier_rmse) = evaluate_alignment(source, &target_index, &pose, inlier_radius);
    Ok(RegistrationResult {
        pose,
        fitness,
        inlier_rmse,
        iterations,
        correspondences: corr.pairs.len(),
        mu_trace: trace,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcpResult {
    pub pose: Pose,
    /// RMSE over all source points after each accepted iteration, starting
    /// with the initial pose.
    pub rmse_trace: Vec<f64>,
    pub iterations: usize,
}

impl IcpResult {
    pub fn rmse(&self) -> f64 {
        *self.rmse_trace.last().expect("trace holds the initial RMSE")
    }
}

fn nn_rmse(source: &PointCloud, target: &NearestIndex, pose: &Pose) -> (f64, Vec<usize>) {
    let mut se = 0.0;
    let mut idx = Vec::with_capacity(source.len());
    for p in source.points() {
        let (j, d2) = target.nearest(&pose.transform_point(p));
        se += d2;
        idx.push(j);
    }
    ((se / source.len() as f64).sqrt(), idx)
}

/// Point-to-point ICP from `init`. Stops when the pose moves less than `tol`
/// or the RMSE would increase.
pub fn icp_refine(source: &PointCloud, target: &PointCloud, init: &Pose, max_iterations: usize, tol: f64) -> Result<IcpResult> {
    let index = NearestIndex::build(target)?;
    let (mut rmse, mut nn) = nn_rmse(source, &index, init);
    let mut pose = *init;
    let mut trace = vec![rmse];
    let mut iterations = 0;
    let ones = vec![1.0; source.len()];
    for _ in 0..max_iterations {
        let dst: Vec<Vector3<f64>> = nn.iter().map(|&j| target.points()[j]).collect();
        let Some(next) = weighted_kabsch(source.points(), &dst, &ones) else {
            break;
        };
        iterations += 1;
        let (next_rmse, next_nn) = nn_rmse(source, &index, &next);
        if next_rmse > rmse {
            break;
        }
        let moved = pose.translation_distance_to(&next) + pose.rotation_angle_to(&next);
        pose = next;
        rmse = next_rmse;
        nn = next_nn;
        trace.push(rmse);
        if moved < tol {
            break;
        }
    }
    Ok(IcpResult {
        pose,
        rmse_trace: trace,
        iterations,
    })
}

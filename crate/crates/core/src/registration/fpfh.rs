//! Fast Point Feature Histograms: 3 × 11 angle bins, two-pass aggregation.

use std::f64::consts::PI;

use nalgebra::Vector3;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::pointcloud::{NearestIndex, PointCloud};

pub const FPFH_BINS: usize = 33;
const SUB_BINS: usize = 11;

pub type Histogram = [f64; FPFH_BINS];

#[derive(Debug, Clone)]
pub struct FpfhFeatures {
    pub histograms: Vec<Histogram>,
    /// No neighbours within the radius; histogram is all zeros.
    pub isolated: Vec<bool>,
}

impl FpfhFeatures {
    pub fn len(&self) -> usize {
        self.histograms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.histograms.is_empty()
    }
}

/// Pair features `(theta, alpha, phi)` of a source/target point pair, after
/// choosing the source as the point whose normal makes the smaller angle
/// with the connecting line.
fn pair_features(p1: &Vector3<f64>, n1: &Vector3<f64>, p2: &Vector3<f64>, n2: &Vector3<f64>) -> Option<(f64, f64, f64)> {
    let mut dp = p2 - p1;
    let dist = dp.norm();
    if dist == 0.0 {
        return None;
    }
    let a1 = n1.dot(&dp) / dist;
    let a2 = n2.dot(&dp) / dist;
    let (ns, nt, phi) = if a1.abs().acos() > a2.abs().acos() {
        dp = -dp;
        (n2, n1, -a2)
    } else {
        (n1, n2, a1)
    };
    let v = dp.cross(ns);
    let vn = v.norm();
    if vn == 0.0 {
        return None;
    }
    let v = v / vn;
    let w = ns.cross(&v);
    let alpha = v.dot(nt);
    let theta = w.dot(nt).atan2(ns.dot(nt));
    Some((theta, alpha, phi))
}

fn bin(x: f64, lo: f64, hi: f64) -> usize {
    let b = ((x - lo) / (hi - lo) * SUB_BINS as f64).floor();
    (b.max(0.0) as usize).min(SUB_BINS - 1)
}

/// FPFH descriptors for a cloud with normals.
pub fn compute_fpfh(cloud: &PointCloud, radius: f64) -> Result<FpfhFeatures> {
    let normals = cloud
        .normals()
        .ok_or_else(|| Error::InvalidCloud("FPFH requires normals".into()))?;
    if !(radius > 0.0) {
        return Err(Error::InvalidConfig(format!("FPFH radius {radius} must be positive")));
    }
    let pts = cloud.points();
    let index = NearestIndex::build(cloud)?;
    let neighbours: Vec<Vec<(usize, f64)>> = pts
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            index
                .within_radius(p, radius)
                .into_iter()
                .filter(|&(j, d2)| j != i && d2 > 0.0)
                .collect()
        })
        .collect();

    // pass 1: simplified histograms
    let spfh: Vec<Histogram> = (0..pts.len())
        .into_par_iter()
        .map(|i| {
            let mut h = [0.0; FPFH_BINS];
            let mut count = 0usize;
            for &(j, _) in &neighbours[i] {
                if let Some((theta, alpha, phi)) = pair_features(&pts[i], &normals[i], &pts[j], &normals[j]) {
                    h[bin(theta, -PI, PI)] += 1.0;
                    h[SUB_BINS + bin(alpha, -1.0, 1.0)] += 1.0;
                    h[2 * SUB_BINS + bin(phi, -1.0, 1.0)] += 1.0;
                    count += 1;
                }
            }
            if count > 0 {
                let inv = 1.0 / count as f64;
                h.iter_mut().for_each(|x| *x *= inv);
            }
            h
        })
        .collect();

    // pass 2: distance-weighted neighbour aggregation
    let results: Vec<(Histogram, bool)> = (0..pts.len())
        .into_par_iter()
        .map(|i| {
            let nb = &neighbours[i];
            if nb.is_empty() {
                return ([0.0; FPFH_BINS], true);
            }
            let mut h = spfh[i];
            let k = nb.len() as f64;
            for &(j, d2) in nb {
                let w = 1.0 / (k * d2.sqrt());
                for (a, b) in h.iter_mut().zip(spfh[j].iter()) {
                    *a += w * b;
                }
            }
            let s: f64 = h.iter().sum();
            if s > 0.0 {
                h.iter_mut().for_each(|x| *x /= s);
                (h, false)
            } else {
                ([0.0; FPFH_BINS], true)
            }
        })
        .collect();
    let (histograms, isolated) = results.into_iter().unzip();
    Ok(FpfhFeatures { histograms, isolated })
}

pub fn l1_distance(a: &Histogram, b: &Histogram) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registration::normals::estimate_normals_toward;
    use crate::rng;
    use crate::se3::{apply_transform, Pose};
    use rand::Rng as _;

    fn bumpy_blob(r: &mut rng::Rng, n: usize) -> PointCloud {
        let pts = (0..n)
            .map(|_| {
                let d = Vector3::new(rng::normal(r), rng::normal(r), rng::normal(r)).normalize();
                let rad = 1.0 + 0.25 * (3.0 * d.x).sin() * (2.0 * d.y).cos() + 0.15 * (4.0 * d.z).sin();
                d * rad
            })
            .collect();
        PointCloud::new(pts).unwrap()
    }

    #[test]
    fn histograms_are_normalized() {
        let mut r = rng::seeded(51);
        let cloud = estimate_normals_toward(&bumpy_blob(&mut r, 800), 0.25, &Vector3::zeros()).cloud;
        let f = compute_fpfh(&cloud, 0.4).unwrap();
        for (h, iso) in f.histograms.iter().zip(&f.isolated) {
            assert!(h.iter().all(|&x| x >= 0.0));
            let s: f64 = h.iter().sum();
            if *iso {
                assert_eq!(s, 0.0);
            } else {
                assert!((s - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn rigid_invariance() {
        let mut r = rng::seeded(52);
        let cloud = estimate_normals_toward(&bumpy_blob(&mut r, 600), 0.25, &Vector3::zeros()).cloud;
        let g = Pose::from_axis_angle(Vector3::new(0.2, 1.0, -0.4), 0.9, Vector3::new(3.0, -1.0, 0.5));
        let moved = apply_transform(&g, &cloud);
        let fa = compute_fpfh(&cloud, 0.4).unwrap();
        let fb = compute_fpfh(&moved, 0.4).unwrap();
        let worst = fa
            .histograms
            .iter()
            .zip(&fb.histograms)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0f64, f64::max);
        assert!(worst < 1e-6, "{worst}");
    }

    #[test]
    fn isolated_point_is_flagged() {
        let mut pts: Vec<_> = (0..20).map(|i| Vector3::new(i as f64 * 0.01, 0.0, (i % 3) as f64 * 0.005)).collect();
        pts.push(Vector3::new(10.0, 10.0, 10.0));
        let n = pts.len();
        let cloud = PointCloud::with_normals(pts, vec![Vector3::z(); n]).unwrap();
        let f = compute_fpfh(&cloud, 0.05).unwrap();
        assert!(f.isolated[n - 1]);
        assert_eq!(f.histograms[n - 1], [0.0; FPFH_BINS]);
    }

    #[test]
    fn requires_normals_and_positive_radius() {
        let c = PointCloud::new(vec![Vector3::zeros()]).unwrap();
        assert!(compute_fpfh(&c, 1.0).is_err());
        let c = PointCloud::with_normals(vec![Vector3::zeros()], vec![Vector3::z()]).unwrap();
        assert!(compute_fpfh(&c, 0.0).is_err());
    }

    /// Plane patches and sphere patches should separate in feature space.
    #[test]
    fn plane_and_sphere_patches_separate() {
        let mut r = rng::seeded(53);
        let plane: Vec<_> = (0..600).map(|_| Vector3::new(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0), 0.0)).collect();
        let sphere: Vec<_> = (0..600)
            .map(|_| Vector3::new(rng::normal(&mut r), rng::normal(&mut r), rng::normal(&mut r)).normalize() * 0.6)
            .collect();
        let fp = compute_fpfh(&estimate_normals_toward(&PointCloud::new(plane).unwrap(), 0.2, &Vector3::new(0.0, 0.0, 5.0)).cloud, 0.35).unwrap();
        let fs = compute_fpfh(&estimate_normals_toward(&PointCloud::new(sphere).unwrap(), 0.2, &Vector3::zeros()).cloud, 0.35).unwrap();
        let mut intra = 0.0;
        let mut inter = 0.0;
        let mut n = 0.0;
        for _ in 0..500 {
            let a = r.gen_range(0..600);
            let b = r.gen_range(0..600);
            intra += 0.5 * (l1_distance(&fp.histograms[a], &fp.histograms[b]) + l1_distance(&fs.histograms[a], &fs.histograms[b]));
            inter += l1_distance(&fp.histograms[a], &fs.histograms[b]);
            n += 1.0;
        }
        assert!(inter / n > intra / n, "inter {} intra {}", inter / n, intra / n);
    }
}

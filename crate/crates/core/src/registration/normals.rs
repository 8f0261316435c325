use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rayon::prelude::*;

use crate::pointcloud::{NearestIndex, PointCloud};

/// Normals plus a per-point flag for points with too few neighbours.
#[derive(Debug, Clone)]
pub struct NormalEstimate {
    pub cloud: PointCloud,
    pub flagged: Vec<bool>,
}

/// PCA normals oriented toward the origin.
pub fn estimate_normals(cloud: &PointCloud, radius: f64) -> NormalEstimate {
    estimate_normals_toward(cloud, radius, &Vector3::zeros())
}

/// PCA normals from neighbours within `radius`, flipped to face `viewpoint`.
///
/// Points with fewer than 3 neighbours (themselves included) get `+z` and are
/// flagged.
pub fn estimate_normals_toward(cloud: &PointCloud, radius: f64, viewpoint: &Vector3<f64>) -> NormalEstimate {
    let index = NearestIndex::build(cloud).expect("point clouds are non-empty");
    let pts = cloud.points();
    let results: Vec<(Vector3<f64>, bool)> = pts
        .par_iter()
        .map(|p| {
            let nbrs = index.within_radius(p, radius);
            if nbrs.len() < 3 {
                return (Vector3::z(), true);
            }
            let mean = nbrs.iter().map(|&(i, _)| pts[i]).sum::<Vector3<f64>>() / nbrs.len() as f64;
            let mut cov = Matrix3::zeros();
            for &(i, _) in &nbrs {
                let d = pts[i] - mean;
                cov += d * d.transpose();
            }
            let eig = SymmetricEigen::new(cov);
            let k = eig.eigenvalues.imin();
            let mut n: Vector3<f64> = eig.eigenvectors.column(k).into();
            let nn = n.norm();
            if !(nn > 0.0) {
                return (Vector3::z(), true);
            }
            n /= nn;
            if n.dot(&(viewpoint - p)) < 0.0 {
                n = -n;
            }
            (n, false)
        })
        .collect();
    let (normals, flagged): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let mut out = cloud.without_normals();
    out.set_normals(normals).expect("unit normals");
    NormalEstimate { cloud: out, flagged }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng as _;

    #[test]
    fn planar_points_get_consistent_vertical_normals() {
        let mut r = rng::seeded(41);
        let pts: Vec<_> = (0..300).map(|_| Vector3::new(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0), 0.0)).collect();
        let cloud = PointCloud::new(pts).unwrap();
        let est = estimate_normals_toward(&cloud, 0.3, &Vector3::new(0.0, 0.0, 5.0));
        assert!(est.flagged.iter().all(|f| !f));
        for n in est.cloud.normals().unwrap() {
            assert!((n - Vector3::z()).norm() < 1e-9);
        }
    }

    #[test]
    fn sphere_normals_are_radial() {
        let mut r = rng::seeded(42);
        let pts: Vec<_> = (0..2000)
            .map(|_| Vector3::new(rng::normal(&mut r), rng::normal(&mut r), rng::normal(&mut r)).normalize())
            .collect();
        let cloud = PointCloud::new(pts).unwrap();
        let est = estimate_normals(&cloud, 0.3);
        let cos10 = 10f64.to_radians().cos();
        let good = est
            .cloud
            .normals()
            .unwrap()
            .iter()
            .zip(cloud.points())
            .filter(|(n, p)| n.dot(p).abs() >= cos10)
            .count();
        assert!(good as f64 >= 0.95 * cloud.len() as f64, "{good}");
        // oriented toward the origin, i.e. inward
        assert!(est.cloud.normals().unwrap().iter().zip(cloud.points()).all(|(n, p)| n.dot(p) <= 0.0));
    }

    #[test]
    fn sparse_points_are_flagged() {
        let cloud = PointCloud::new(vec![Vector3::zeros(), Vector3::new(1.0, 0.0, 0.0)]).unwrap();
        let est = estimate_normals(&cloud, 10.0);
        assert_eq!(est.flagged, vec![true, true]);
        assert_eq!(est.cloud.normals().unwrap()[0], Vector3::z());
    }
}

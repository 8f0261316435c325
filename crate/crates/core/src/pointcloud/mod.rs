//! Point clouds, nearest-neighbour search and the Chamfer guidance signal.

mod chamfer;
mod kdtree;
pub mod ply;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

pub use chamfer::{chamfer, chamfer_grad, chamfer_grad_block, BlockGradient, ChamferGradient, ChamferTarget, Correspondences};
pub use kdtree::KdTree;
pub use ply::{encode_ply, read_ply, write_ply, PlyFormat};

const NORMAL_TOL: f64 = 1e-6;

/// Points in meters with optional unit normals.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<Vector3<f64>>,
    normals: Option<Vec<Vector3<f64>>>,
}

impl PointCloud {
    pub fn new(points: Vec<Vector3<f64>>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyCloud);
        }
        if points.iter().any(|p| !p.iter().all(|x| x.is_finite())) {
            return Err(Error::InvalidCloud("non-finite coordinate".into()));
        }
        Ok(Self { points, normals: None })
    }

    pub fn with_normals(points: Vec<Vector3<f64>>, normals: Vec<Vector3<f64>>) -> Result<Self> {
        let mut cloud = Self::new(points)?;
        cloud.set_normals(normals)?;
        Ok(cloud)
    }

    pub fn set_normals(&mut self, normals: Vec<Vector3<f64>>) -> Result<()> {
        if normals.len() != self.points.len() {
            return Err(Error::LengthMismatch {
                expected: self.points.len(),
                got: normals.len(),
            });
        }
        if let Some(i) = normals.iter().position(|n| (n.norm() - 1.0).abs() > NORMAL_TOL) {
            return Err(Error::InvalidCloud(format!("normal {i} is not unit length")));
        }
        self.normals = Some(normals);
        Ok(())
    }

    pub(crate) fn from_parts_unchecked(points: Vec<Vector3<f64>>, normals: Option<Vec<Vector3<f64>>>) -> Self {
        Self { points, normals }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vector3<f64>] {
        &self.points
    }

    pub fn normals(&self) -> Option<&[Vector3<f64>]> {
        self.normals.as_deref()
    }

    pub fn without_normals(&self) -> Self {
        Self {
            points: self.points.clone(),
            normals: None,
        }
    }

    pub fn as_arrays(&self) -> Vec<[f64; 3]> {
        self.points.iter().map(|p| [p.x, p.y, p.z]).collect()
    }

    pub fn centroid(&self) -> Vector3<f64> {
        self.points.iter().sum::<Vector3<f64>>() / self.points.len() as f64
    }

    /// Population covariance of the points.
    pub fn covariance(&self) -> Matrix3<f64> {
        let c = self.centroid();
        let mut cov = Matrix3::zeros();
        for p in &self.points {
            let d = p - c;
            cov += d * d.transpose();
        }
        cov / self.points.len() as f64
    }

    /// Largest pairwise distance.
    pub fn diameter(&self) -> f64 {
        let mut best = 0.0f64;
        for (i, p) in self.points.iter().enumerate() {
            for q in &self.points[i + 1..] {
                best = best.max((p - q).norm_squared());
            }
        }
        best.sqrt()
    }

    /// Mean distance from each point to its nearest other point.
    pub fn mean_spacing(&self) -> f64 {
        if self.points.len() < 2 {
            return 0.0;
        }
        let tree = KdTree::build(&self.as_arrays()).expect("non-empty");
        let total: f64 = self
            .points
            .iter()
            .enumerate()
            .filter_map(|(i, p)| tree.nearest_excluding(&[p.x, p.y, p.z], i))
            .map(|(_, d2)| d2.sqrt())
            .sum();
        total / self.points.len() as f64
    }

    /// Surface sampling spacing `sqrt(area per point)`, estimated from the
    /// disc holding each point's 8 nearest neighbours.
    ///
    /// Unlike [`mean_spacing`](Self::mean_spacing) this does not shrink for
    /// random (clumpy) sampling, where nearest neighbours sit at roughly half
    /// the typical spacing.
    pub fn surface_spacing(&self) -> f64 {
        const K: usize = 8;
        if self.points.len() < 2 {
            return 0.0;
        }
        let k = K.min(self.points.len() - 1);
        let tree = KdTree::build(&self.as_arrays()).expect("non-empty");
        let scale = (std::f64::consts::PI / k as f64).sqrt();
        let total: f64 = self
            .points
            .iter()
            .map(|p| {
                // first hit is the point itself (or a duplicate at distance 0)
                let nn = tree.k_nearest(&[p.x, p.y, p.z], k + 1);
                nn.last().map_or(0.0, |&(_, d2)| d2.sqrt()) * scale
            })
            .sum();
        total / self.points.len() as f64
    }

    /// Concatenate two clouds. Normals are kept only if both have them.
    pub fn merged(&self, other: &PointCloud) -> PointCloud {
        let mut points = self.points.clone();
        points.extend_from_slice(&other.points);
        let normals = match (&self.normals, &other.normals) {
            (Some(a), Some(b)) => Some(a.iter().chain(b).copied().collect()),
            _ => None,
        };
        Self { points, normals }
    }

    /// Keep the points at `indices`, in order.
    pub fn select(&self, indices: &[usize]) -> Result<PointCloud> {
        if indices.is_empty() {
            return Err(Error::EmptyCloud);
        }
        Ok(Self {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            normals: self.normals.as_ref().map(|ns| indices.iter().map(|&i| ns[i]).collect()),
        })
    }
}

/// Exact nearest-neighbour index over a point cloud.
#[derive(Debug, Clone)]
pub struct NearestIndex {
    tree: KdTree<3>,
}

impl NearestIndex {
    pub fn build(cloud: &PointCloud) -> Result<Self> {
        KdTree::build(&cloud.as_arrays())
            .map(|tree| Self { tree })
            .ok_or(Error::EmptyCloud)
    }

    pub fn with_leaf_size(cloud: &PointCloud, leaf_size: usize) -> Result<Self> {
        KdTree::with_leaf_size(&cloud.as_arrays(), leaf_size)
            .map(|tree| Self { tree })
            .ok_or(Error::EmptyCloud)
    }

    /// `(index, squared distance)` of the nearest point; ties go to the lowest index.
    pub fn nearest(&self, p: &Vector3<f64>) -> (usize, f64) {
        self.tree.nearest(&[p.x, p.y, p.z])
    }

    /// Neighbours within `radius`, sorted by index.
    pub fn within_radius(&self, p: &Vector3<f64>, radius: f64) -> Vec<(usize, f64)> {
        self.tree.within_radius(&[p.x, p.y, p.z], radius)
    }

    pub fn leaf_size(&self) -> usize {
        self.tree.leaf_size()
    }

    pub fn len(&self) -> usize {
        self.tree.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tree.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_empty_and_non_finite() {
        assert!(matches!(PointCloud::new(vec![]), Err(Error::EmptyCloud)));
        assert!(PointCloud::new(vec![Vector3::new(f64::NAN, 0.0, 0.0)]).is_err());
        assert!(PointCloud::new(vec![Vector3::new(0.0, f64::INFINITY, 0.0)]).is_err());
        assert!(NearestIndex::build(&PointCloud { points: vec![], normals: None }).is_err());
    }

    #[test]
    fn rejects_non_unit_normals() {
        let pts = vec![Vector3::zeros()];
        assert!(PointCloud::with_normals(pts.clone(), vec![Vector3::new(0.0, 0.0, 2.0)]).is_err());
        assert!(PointCloud::with_normals(pts.clone(), vec![]).is_err());
        assert!(PointCloud::with_normals(pts, vec![Vector3::z()]).is_ok());
    }

    #[test]
    fn statistics() {
        let c = PointCloud::new(vec![Vector3::zeros(), Vector3::new(2.0, 0.0, 0.0), Vector3::new(1.0, 0.0, 0.0)]).unwrap();
        assert_eq!(c.centroid(), Vector3::new(1.0, 0.0, 0.0));
        assert_eq!(c.diameter(), 2.0);
        assert!((c.mean_spacing() - 1.0).abs() < 1e-12);
        assert!((c.covariance()[(0, 0)] - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn surface_spacing_of_a_grid() {
        let pts: Vec<_> = (0..40)
            .flat_map(|i| (0..40).map(move |j| Vector3::new(i as f64 * 0.01, j as f64 * 0.01, 0.0)))
            .collect();
        let s = PointCloud::new(pts).unwrap().surface_spacing();
        assert!((s - 0.01).abs() < 0.0015, "{s}");
    }
}

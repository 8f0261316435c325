//! Parallel-jaw gripper surface model.
//!
//! Canonical frame: origin between the fingertips' midpoints, fingers along
//! −z, jaws opening along ±y. A notch cut into the +y fingertip and a sensor
//! nub on the palm break the model's mirror and 180° symmetries.

use nalgebra::Vector3;
use rand::Rng as _;

use crate::pointcloud::PointCloud;
use crate::rng::Rng;

pub const GRIPPER_POINTS: usize = 512;
const FINGER_THICKNESS: f64 = 0.01;
const PALM_HALF_WIDTH: f64 = 0.045;

#[derive(Debug, Clone, Copy)]
struct Rect {
    origin: Vector3<f64>,
    a: Vector3<f64>,
    b: Vector3<f64>,
}

impl Rect {
    fn area(&self) -> f64 {
        self.a.cross(&self.b).norm()
    }
}

/// Faces of an axis-aligned box; `skip` lists faces left open as
/// `(axis, upper)` pairs.
fn box_faces(lo: Vector3<f64>, hi: Vector3<f64>, skip: &[(usize, bool)], out: &mut Vec<Rect>) {
    let ext = hi - lo;
    for axis in 0..3 {
        let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
        let mut a = Vector3::zeros();
        a[u] = ext[u];
        let mut b = Vector3::zeros();
        b[v] = ext[v];
        for upper in [false, true] {
            if skip.contains(&(axis, upper)) {
                continue;
            }
            let mut origin = lo;
            if upper {
                origin[axis] = hi[axis];
            }
            out.push(Rect { origin, a, b });
        }
    }
}

fn in_notch(p: &Vector3<f64>, width: f64) -> bool {
    let y0 = width / 2.0;
    p.x > 0.0 && p.z < -0.018 && p.y >= y0 - 1e-12 && p.y <= y0 + FINGER_THICKNESS + 1e-12
}

fn faces(width: f64) -> Vec<Rect> {
    let mut f = Vec::new();
    let y0 = width / 2.0;
    box_faces(
        Vector3::new(-0.01, -PALM_HALF_WIDTH, 0.02),
        Vector3::new(0.01, PALM_HALF_WIDTH, 0.04),
        &[],
        &mut f,
    );
    box_faces(
        Vector3::new(-0.01, y0, -0.03),
        Vector3::new(0.01, y0 + FINGER_THICKNESS, 0.02),
        &[(2, true)],
        &mut f,
    );
    box_faces(
        Vector3::new(-0.01, -y0 - FINGER_THICKNESS, -0.03),
        Vector3::new(0.01, -y0, 0.02),
        &[(2, true)],
        &mut f,
    );
    box_faces(
        Vector3::new(0.01, 0.015, 0.022),
        Vector3::new(0.025, 0.04, 0.038),
        &[(0, false)],
        &mut f,
    );
    f
}

/// Largest jaw opening the palm supports.
pub fn max_width() -> f64 {
    2.0 * (PALM_HALF_WIDTH - FINGER_THICKNESS)
}

/// `n` area-uniform surface samples of the gripper at jaw opening `width`.
pub fn gripper_cloud(width: f64, n: usize, rng: &mut Rng) -> PointCloud {
    let width = width.clamp(0.0, max_width());
    let rects = faces(width);
    let total: f64 = rects.iter().map(Rect::area).sum();
    let mut pts = Vec::with_capacity(n);
    while pts.len() < n {
        let mut pick = rng.gen::<f64>() * total;
        let mut rect = rects[rects.len() - 1];
        for r in &rects {
            if pick < r.area() {
                rect = *r;
                break;
            }
            pick -= r.area();
        }
        let p = rect.origin + rect.a * rng.gen::<f64>() + rect.b * rng.gen::<f64>();
        if !in_notch(&p, width) {
            pts.push(p);
        }
    }
    PointCloud::new(pts).expect("finite samples")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::se3::{apply_transform, Pose};

    #[test]
    fn sampling_is_seeded_and_sized() {
        let a = gripper_cloud(0.04, GRIPPER_POINTS, &mut rng::seeded(1));
        let b = gripper_cloud(0.04, GRIPPER_POINTS, &mut rng::seeded(1));
        assert_eq!(a.len(), GRIPPER_POINTS);
        assert_eq!(a.points(), b.points());
        assert!(a.points().iter().all(|p| !in_notch(p, 0.04)));
    }

    #[test]
    fn half_turn_is_distinguishable() {
        let c = gripper_cloud(0.04, 2048, &mut rng::seeded(2));
        let flipped = apply_transform(&Pose::from_axis_angle(Vector3::z(), std::f64::consts::PI, Vector3::zeros()), &c);
        let ch = crate::pointcloud::chamfer(&c, &flipped).unwrap();
        let resampled = gripper_cloud(0.04, 2048, &mut rng::seeded(3));
        let floor = crate::pointcloud::chamfer(&c, &resampled).unwrap();
        assert!(ch > 3.0 * floor, "flip {ch} vs resampling {floor}");
    }
}

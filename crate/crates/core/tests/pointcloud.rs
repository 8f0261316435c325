use adp_core::pointcloud::{chamfer_grad_block, ChamferTarget, PointCloud};
use adp_core::rng::{self, Rng};
use adp_core::se3::{decode, ACTION_DIM};
use nalgebra::Vector3;
use proptest::prelude::*;

fn cloud(r: &mut Rng, n: usize, scale: f64) -> PointCloud {
    PointCloud::new((0..n).map(|_| Vector3::new(rng::normal(r), rng::normal(r), rng::normal(r)) * scale).collect()).unwrap()
}

fn block(r: &mut Rng) -> Vec<f64> {
    let mut b: Vec<f64> = (0..ACTION_DIM).map(|_| rng::normal(r) * 0.05).collect();
    b[0] += 1.0;
    b[4] += 1.0;
    b[9] = 0.04;
    b
}

/// Max relative error of the analytic gradient against central differences,
/// or `None` if a nearest-neighbour assignment flips inside the stencil.
fn fd_error(b: &[f64], gripper: &PointCloud, target: &ChamferTarget, h: f64) -> Option<f64> {
    let g = chamfer_grad_block(b, gripper, target).unwrap();
    let base = target.correspondences(&decode(b).action.pose, gripper).unwrap();
    let gmax = g.grad.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut worst = 0.0f64;
    for k in 0..ACTION_DIM {
        let mut p = b.to_vec();
        let mut m = b.to_vec();
        p[k] += h;
        m[k] -= h;
        let (pp, mp) = (decode(&p).action.pose, decode(&m).action.pose);
        if target.correspondences(&pp, gripper).unwrap() != base || target.correspondences(&mp, gripper).unwrap() != base {
            return None;
        }
        let fd = (target.loss(&pp, gripper).unwrap() - target.loss(&mp, gripper).unwrap()) / (2.0 * h);
        let denom = fd.abs().max(g.grad[k].abs()).max(1e-6 * gmax).max(1e-300);
        worst = worst.max((g.grad[k] - fd).abs() / denom);
    }
    Some(worst)
}

#[test]
fn chamfer_gradient_matches_central_differences() {
    let mut r = rng::seeded(1);
    let mut checked = 0;
    while checked < 30 {
        let gripper = cloud(&mut r, 40, 0.05);
        let target = ChamferTarget::new(cloud(&mut r, 40, 0.06)).unwrap();
        let b = block(&mut r);
        if let Some(e) = fd_error(&b, &gripper, &target, 1e-6) {
            assert!(e < 1e-4, "relative error {e}");
            checked += 1;
        }
    }
}

#[test]
fn width_does_not_move_the_loss() {
    let mut r = rng::seeded(2);
    let gripper = cloud(&mut r, 30, 0.05);
    let target = ChamferTarget::new(cloud(&mut r, 30, 0.05)).unwrap();
    let g = chamfer_grad_block(&block(&mut r), &gripper, &target).unwrap();
    assert_eq!(g.grad[9], 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn gradient_is_finite_and_loss_nonnegative(seed in 0u64..100_000) {
        let mut r = rng::seeded(seed);
        let gripper = cloud(&mut r, 20, 0.05);
        let target = ChamferTarget::new(cloud(&mut r, 20, 0.05)).unwrap();
        let b: Vec<f64> = (0..ACTION_DIM).map(|_| rng::normal(&mut r)).collect();
        let g = chamfer_grad_block(&b, &gripper, &target).unwrap();
        prop_assert!(g.loss >= 0.0);
        prop_assert!(g.grad.iter().all(|v| v.is_finite()));
    }
}

//! Synthetic manipulation tasks with exact ground truth.
//!
//! Each instance places a docking fixture shaped to receive the gripper at a
//! goal pose. The fixture cloud is the scene the policy observes and the
//! guidance term aligns against; the gripper reaches it through a short
//! sequence of keyposes.

mod gripper;
mod rollout;

use std::sync::{Arc, OnceLock};

use nalgebra::{Matrix3, Vector3};
use rand::{Rng as _, RngCore};
use serde::{Deserialize, Serialize};

use crate::diffusion::dataset::{episode_name, DatasetManifest, EpisodeRecord, StepRecord, DATASET_VERSION};
use crate::error::{Error, Result};
use crate::pointcloud::{chamfer, PointCloud};
use crate::rng::{self, Rng};
use crate::se3::{apply_transform, encode, rotation_angle, rotation_exp, rotation_log, Action, Pose, ACTION_DIM};

pub use gripper::{gripper_cloud, max_width, GRIPPER_POINTS};
pub use rollout::{rollout, EpisodeOutcome, RolloutConfig};

/// Jaw opening of the canonical gripper cloud.
pub const DEFAULT_WIDTH: f64 = 0.04;
const GRIPPER_SEED: u64 = 0x6772_6970;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskFamily {
    /// Match the pose of a floating fixture.
    Reach,
    /// Line up over a socket with the jaws at the peg's width.
    AlignPeg,
    /// Planar move to a fixture on the table.
    SweepPush,
}

impl TaskFamily {
    pub const ALL: [TaskFamily; 3] = [TaskFamily::Reach, TaskFamily::AlignPeg, TaskFamily::SweepPush];

    pub fn id(self) -> u32 {
        match self {
            TaskFamily::Reach => 0,
            TaskFamily::AlignPeg => 1,
            TaskFamily::SweepPush => 2,
        }
    }

    pub fn params(self) -> FamilyParams {
        let base = FamilyParams {
            translation_lo: [-0.15, -0.15, 0.05],
            translation_hi: [0.15, 0.15, 0.25],
            max_yaw_deg: 60.0,
            width_range: (DEFAULT_WIDTH, DEFAULT_WIDTH),
            start_distance: (0.16, 0.38),
            start_yaw_offset_deg: 90.0,
            planar: false,
            success_radius: 0.01,
            success_angle_deg: 10.0,
            width_tolerance: None,
            step_translation: 0.05,
            step_rotation_deg: 15.0,
            jitter_per_level: 0.001,
            clutter_per_level: 24,
            fixture_points: GRIPPER_POINTS,
        };
        match self {
            TaskFamily::Reach => base,
            TaskFamily::AlignPeg => FamilyParams {
                translation_lo: [-0.1, -0.1, 0.04],
                translation_hi: [0.1, 0.1, 0.08],
                max_yaw_deg: 30.0,
                width_range: (0.02, 0.06),
                width_tolerance: Some(0.005),
                ..base
            },
            TaskFamily::SweepPush => FamilyParams {
                translation_lo: [-0.2, -0.2, 0.03],
                translation_hi: [0.2, 0.2, 0.03],
                planar: true,
                ..base
            },
        }
    }
}

impl std::fmt::Display for TaskFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TaskFamily::Reach => "reach",
            TaskFamily::AlignPeg => "align_peg",
            TaskFamily::SweepPush => "sweep_push",
        })
    }
}

impl std::str::FromStr for TaskFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reach" => Ok(TaskFamily::Reach),
            "align_peg" | "align-peg" => Ok(TaskFamily::AlignPeg),
            "sweep_push" | "sweep-push" => Ok(TaskFamily::SweepPush),
            other => Err(Error::InvalidConfig(format!("unknown task family {other:?}"))),
        }
    }
}

/// Generator and success parameters of a family. Lengths in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FamilyParams {
    pub translation_lo: [f64; 3],
    pub translation_hi: [f64; 3],
    /// Goal rotations are yaw about +z within `±max_yaw_deg`.
    pub max_yaw_deg: f64,
    pub width_range: (f64, f64),
    /// Start sits this far from the goal.
    pub start_distance: (f64, f64),
    pub start_yaw_offset_deg: f64,
    /// Start offset stays in the goal's horizontal plane.
    pub planar: bool,
    pub success_radius: f64,
    pub success_angle_deg: f64,
    pub width_tolerance: Option<f64>,
    /// Expert per-keypose caps.
    pub step_translation: f64,
    pub step_rotation_deg: f64,
    pub jitter_per_level: f64,
    pub clutter_per_level: usize,
    pub fixture_points: usize,
}

#[derive(Debug, Clone)]
pub struct TaskInstance {
    pub family: TaskFamily,
    pub difficulty: u32,
    pub seed: u64,
    pub params: FamilyParams,
    /// Fixture cloud (plus clutter and jitter above difficulty 0).
    pub scene: Arc<PointCloud>,
    /// Gripper surface in its canonical frame.
    pub gripper: Arc<PointCloud>,
    pub goal_pose: Pose,
    pub goal_width: f64,
    pub start_pose: Pose,
    pub start_width: f64,
    pub success_radius: f64,
    pub success_angle_deg: f64,
    pub width_tolerance: Option<f64>,
}

impl TaskInstance {
    pub fn goal(&self) -> Action {
        Action {
            pose: self.goal_pose,
            width: self.goal_width,
        }
    }

    pub fn start(&self) -> Action {
        Action {
            pose: self.start_pose,
            width: self.start_width,
        }
    }
}

/// The canonical gripper cloud shared by every instance.
pub fn canonical_gripper() -> Arc<PointCloud> {
    static CLOUD: OnceLock<Arc<PointCloud>> = OnceLock::new();
    CLOUD
        .get_or_init(|| Arc::new(gripper_cloud(DEFAULT_WIDTH, GRIPPER_POINTS, &mut rng::stream(GRIPPER_SEED, 0))))
        .clone()
}

fn yaw(angle: f64) -> Matrix3<f64> {
    rotation_exp(&(Vector3::z() * angle))
}

pub fn generate_instance(family: TaskFamily, difficulty: u32, seed: u64) -> TaskInstance {
    generate_instance_with(family, family.params(), difficulty, seed)
}

pub fn generate_instance_with(family: TaskFamily, params: FamilyParams, difficulty: u32, seed: u64) -> TaskInstance {
    let mut r = rng::substream(seed, &[0x7461_736b, family.id() as u64, difficulty as u64]);
    let p = &params;
    let t = Vector3::from_fn(|i, _| {
        let (lo, hi) = (p.translation_lo[i], p.translation_hi[i]);
        if hi > lo {
            r.gen_range(lo..hi)
        } else {
            lo
        }
    });
    let max_yaw = p.max_yaw_deg.to_radians();
    let goal_pose = Pose::new(yaw(r.gen_range(-max_yaw..=max_yaw)), t);
    let goal_width = if p.width_range.1 > p.width_range.0 {
        r.gen_range(p.width_range.0..p.width_range.1)
    } else {
        p.width_range.0
    };

    let dir = loop {
        let v = Vector3::new(rng::normal(&mut r), rng::normal(&mut r), if p.planar { 0.0 } else { rng::normal(&mut r) });
        if v.norm() > 1e-6 {
            break v.normalize();
        }
    };
    let dist = r.gen_range(p.start_distance.0..=p.start_distance.1);
    let off = p.start_yaw_offset_deg.to_radians();
    let start_pose = Pose::new(goal_pose.rotation * yaw(r.gen_range(-off..=off)), t + dir * dist);

    let mut scene = apply_transform(&goal_pose, &gripper_cloud(goal_width, p.fixture_points, &mut r)).points().to_vec();
    if difficulty > 0 {
        let sd = p.jitter_per_level * difficulty as f64;
        for q in &mut scene {
            *q += Vector3::new(rng::normal(&mut r), rng::normal(&mut r), rng::normal(&mut r)) * sd;
        }
        let centre = goal_pose.transform_point(&Vector3::new(0.06, 0.0, 0.0));
        for _ in 0..p.clutter_per_level * difficulty as usize {
            scene.push(centre + Vector3::new(rng::normal(&mut r), rng::normal(&mut r), rng::normal(&mut r)) * 0.01);
        }
    }
    TaskInstance {
        family,
        difficulty,
        seed,
        params,
        scene: Arc::new(PointCloud::new(scene).expect("finite samples")),
        gripper: canonical_gripper(),
        goal_pose,
        goal_width,
        start_pose,
        start_width: DEFAULT_WIDTH,
        success_radius: p.success_radius,
        success_angle_deg: p.success_angle_deg,
        width_tolerance: p.width_tolerance,
    }
}

/// Next expert keypose: a `1/k` geodesic step toward the goal, where `k` is
/// the fewest steps that respect both caps.
pub fn expert_action(instance: &TaskInstance, current: &Action) -> Action {
    let goal = instance.goal();
    let rel = current.pose.rotation.transpose() * goal.pose.rotation;
    let angle = rotation_angle(&rel);
    let dist = (goal.pose.translation - current.pose.translation).norm();
    let p = &instance.params;
    let k = ((dist / p.step_translation - 1e-9).ceil())
        .max((angle.to_degrees() / p.step_rotation_deg - 1e-9).ceil())
        .max(1.0);
    if k <= 1.0 {
        return goal;
    }
    interpolate(current, &goal, 1.0 / k)
}

/// Geodesic interpolation: rotation by axis-angle slerp, translation and
/// width linearly.
pub fn interpolate(from: &Action, to: &Action, f: f64) -> Action {
    let w = rotation_log(&(from.pose.rotation.transpose() * to.pose.rotation));
    Action {
        pose: Pose::new(
            from.pose.rotation * rotation_exp(&(w * f)),
            from.pose.translation + (to.pose.translation - from.pose.translation) * f,
        ),
        width: from.width + (to.width - from.width) * f,
    }
}

/// Expert keyposes from the start, ending exactly at the goal.
pub fn expert_trajectory(instance: &TaskInstance) -> Vec<Action> {
    let mut cur = instance.start();
    let mut out = Vec::new();
    while out.len() < 64 {
        cur = expert_action(instance, &cur);
        out.push(cur);
        if cur == instance.goal() {
            break;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub success: bool,
    pub pos_err: f64,
    pub rot_err_deg: f64,
    pub width_err: f64,
    pub chamfer_final: f64,
}

/// Success iff position and rotation errors are strictly inside the
/// thresholds, plus the width tolerance where the family has one.
pub fn evaluate(instance: &TaskInstance, action: &Action) -> Evaluation {
    let pos_err = action.pose.translation_distance_to(&instance.goal_pose);
    let rot_err_deg = action.pose.rotation_angle_to(&instance.goal_pose).to_degrees();
    let width_err = (action.width - instance.goal_width).abs();
    let chamfer_final = chamfer(&apply_transform(&action.pose, &instance.gripper), &instance.scene).unwrap_or(f64::INFINITY);
    let width_ok = instance.width_tolerance.is_none_or(|tol| width_err < tol);
    Evaluation {
        success: pos_err < instance.success_radius && rot_err_deg < instance.success_angle_deg && width_ok,
        pos_err,
        rot_err_deg,
        width_err,
        chamfer_final,
    }
}

/// Mean Chamfer value over six poses on the success boundary: the goal
/// shifted by the success radius along each goal-frame axis, and rotated by
/// the success angle about each axis.
pub fn chamfer_threshold(instance: &TaskInstance) -> f64 {
    let g = &instance.goal_pose;
    let value = |p: Pose| chamfer(&apply_transform(&p, &instance.gripper), &instance.scene).unwrap_or(f64::INFINITY);
    let axes = [Vector3::x(), Vector3::y(), Vector3::z()];
    let shifted: f64 = axes
        .iter()
        .map(|a| value(Pose::new(g.rotation, g.translation + g.rotation * a * instance.success_radius)))
        .sum();
    let turned: f64 = axes
        .iter()
        .map(|a| value(Pose::new(g.rotation * rotation_exp(&(a * instance.success_angle_deg.to_radians())), g.translation)))
        .sum();
    (shifted + turned) / 6.0
}

/// Seed of the `i`-th instance drawn from `root`.
pub fn instance_seed(root: u64, i: u64) -> u64 {
    rng::substream(root, &[0x696e_7374, i]).next_u64()
}

/// Observation history for the pose sequence so far, most recent last.
pub fn history_of(visited: &[Action], history_len: usize) -> Vec<[f64; ACTION_DIM]> {
    let n = visited.len();
    (0..history_len)
        .map(|k| {
            let idx = (n + k).saturating_sub(history_len);
            encode(&visited[idx.min(n - 1)]).expect("valid keypose")
        })
        .collect()
}

/// Expert demonstrations on `count` instances. Each keypose step records the
/// pose history and the next `n_actions` keyposes, padded with the goal.
pub fn make_dataset(
    family: TaskFamily,
    difficulty: u32,
    count: usize,
    seed: u64,
    n_actions: usize,
    history_len: usize,
) -> Result<(DatasetManifest, Vec<EpisodeRecord>)> {
    if count == 0 || n_actions == 0 || history_len == 0 {
        return Err(Error::InvalidConfig("count, n_actions and history_len must be positive".into()));
    }
    let episodes: Vec<EpisodeRecord> = (0..count)
        .map(|i| {
            let inst = generate_instance(family, difficulty, instance_seed(seed, i as u64));
            demo_episode(&inst, n_actions, history_len)
        })
        .collect();
    let manifest = DatasetManifest {
        format_version: DATASET_VERSION,
        family: family.to_string(),
        seed,
        n_actions,
        history_len,
        episodes: (0..count).map(episode_name).collect(),
        generator: serde_json::json!({
            "difficulty": difficulty,
            "params": family.params(),
        }),
    };
    Ok((manifest, episodes))
}

fn demo_episode(inst: &TaskInstance, n_actions: usize, history_len: usize) -> EpisodeRecord {
    let traj = expert_trajectory(inst);
    let mut visited = vec![inst.start()];
    let mut steps = Vec::with_capacity(traj.len());
    for k in 0..traj.len() {
        let mut action = Vec::with_capacity(n_actions * ACTION_DIM);
        for j in 0..n_actions {
            let a = traj.get(k + j).copied().unwrap_or(inst.goal());
            action.extend_from_slice(&encode(&a).expect("valid keypose"));
        }
        steps.push(StepRecord {
            history: history_of(&visited, history_len),
            action,
        });
        visited.push(traj[k]);
    }
    EpisodeRecord {
        gripper: inst.gripper.clone(),
        scene: inst.scene.clone(),
        task_id: inst.family.id(),
        seed: inst.seed,
        goal: encode(&inst.goal()).expect("valid goal"),
        steps,
    }
}

/// Random pose near the goal, used to probe evaluation thresholds.
pub fn perturbed_goal(instance: &TaskInstance, max_offset: f64, max_angle_deg: f64, r: &mut Rng) -> Action {
    let dir = Vector3::new(rng::normal(r), rng::normal(r), rng::normal(r)).normalize();
    let axis = Vector3::new(rng::normal(r), rng::normal(r), rng::normal(r)).normalize();
    let pose = Pose::new(
        instance.goal_pose.rotation * rotation_exp(&(axis * r.gen_range(0.0..max_angle_deg).to_radians())),
        instance.goal_pose.translation + dir * r.gen_range(0.0..max_offset),
    );
    Action {
        pose,
        width: instance.goal_width,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn instances_are_reproducible() {
        for f in TaskFamily::ALL {
            let a = generate_instance(f, 1, 9);
            let b = generate_instance(f, 1, 9);
            assert_eq!(a.scene.points(), b.scene.points());
            assert_eq!(a.goal_pose, b.goal_pose);
            assert_eq!(a.start_pose, b.start_pose);
            assert_ne!(generate_instance(f, 1, 10).goal_pose, a.goal_pose);
        }
    }

    #[test]
    fn difficulty_zero_is_clean() {
        let inst = generate_instance(TaskFamily::Reach, 0, 4);
        assert_eq!(inst.scene.len(), GRIPPER_POINTS);
        let back = apply_transform(&inst.goal_pose.inverse(), &inst.scene);
        let spread = back.points().iter().map(|p| p.x.abs()).fold(0.0f64, f64::max);
        assert!(spread <= 0.025 + 1e-9);
        let hard = generate_instance(TaskFamily::Reach, 2, 4);
        assert_eq!(hard.scene.len(), GRIPPER_POINTS + 48);
    }

    #[test]
    fn expert_fixed_point_and_halving() {
        let inst = generate_instance(TaskFamily::Reach, 0, 5);
        assert_eq!(expert_action(&inst, &inst.goal()), inst.goal());
        let start = inst.start();
        let mid = interpolate(&start, &inst.goal(), 0.5);
        let before = start.pose.rotation_angle_to(&inst.goal_pose);
        let after = mid.pose.rotation_angle_to(&inst.goal_pose);
        assert!((after - before / 2.0).abs() < 1e-9);
    }

    #[test]
    fn expert_episode_lengths() {
        for f in TaskFamily::ALL {
            for s in 0..50 {
                let inst = generate_instance(f, 0, s);
                let traj = expert_trajectory(&inst);
                assert!((4..=8).contains(&traj.len()), "{f} seed {s}: {}", traj.len());
                assert_eq!(*traj.last().unwrap(), inst.goal());
                assert!(evaluate(&inst, traj.last().unwrap()).success);
                let mut prev = inst.start();
                for a in &traj {
                    assert!(a.pose.translation_distance_to(&prev.pose) <= inst.params.step_translation + 1e-9);
                    assert!(a.pose.rotation_angle_to(&prev.pose).to_degrees() <= inst.params.step_rotation_deg + 1e-6);
                    prev = *a;
                }
            }
        }
    }

    #[test]
    fn evaluate_boundary_is_strict() {
        let inst = generate_instance(TaskFamily::Reach, 0, 6);
        let e = evaluate(&inst, &inst.goal());
        assert!(e.success);
        assert_eq!(e.pos_err, 0.0);
        assert!(e.rot_err_deg < 1e-6);
        let mut off = inst.goal();
        off.pose.translation.x += inst.success_radius;
        let e = evaluate(&inst, &off);
        assert!((e.pos_err - inst.success_radius).abs() < 1e-15);
        assert_eq!(e.success, e.pos_err < inst.success_radius);
        off.pose.translation.x += 1e-9;
        assert!(!evaluate(&inst, &off).success);
    }

    #[test]
    fn width_tolerance_applies_to_align_peg() {
        let inst = generate_instance(TaskFamily::AlignPeg, 0, 7);
        let mut a = inst.goal();
        a.width += 0.006;
        assert!(!evaluate(&inst, &a).success);
        let reach = generate_instance(TaskFamily::Reach, 0, 7);
        let mut b = reach.goal();
        b.width += 0.006;
        assert!(evaluate(&reach, &b).success);
    }

    #[test]
    fn dataset_shapes() {
        let (m, eps) = make_dataset(TaskFamily::Reach, 0, 3, 1, 4, 2).unwrap();
        assert_eq!(m.episodes.len(), 3);
        for e in &eps {
            assert!((4..=8).contains(&e.steps.len()));
            for s in &e.steps {
                assert_eq!(s.action.len(), 40);
                assert_eq!(s.history.len(), 2);
            }
            assert_eq!(&e.steps.last().unwrap().action[30..40], &e.goal[..]);
        }
        assert!(make_dataset(TaskFamily::Reach, 0, 0, 1, 4, 2).is_err());
    }
}

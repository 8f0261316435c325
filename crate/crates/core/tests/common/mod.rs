#![allow(dead_code)]

use std::sync::OnceLock;

use adp_core::diffusion::dataset::to_demos;
use adp_core::diffusion::{train_toy_denoiser, NoiseSchedule, Observation, ScheduleSpec, ToyDenoiser, TrainConfig};
use adp_core::se3::encode;
use adp_core::taskbench::{generate_instance, make_dataset, TaskFamily, TaskInstance};

pub fn schedule() -> NoiseSchedule {
    ScheduleSpec::default().build().unwrap()
}

/// Briefly trained model: shapes and plumbing only, not accuracy.
pub fn toy_model() -> &'static ToyDenoiser {
    static MODEL: OnceLock<ToyDenoiser> = OnceLock::new();
    MODEL.get_or_init(|| {
        let (_, eps) = make_dataset(TaskFamily::Reach, 0, 40, 11, 4, 2).unwrap();
        let demos = to_demos(&eps, 4).unwrap();
        let cfg = TrainConfig {
            steps: 300,
            batch_size: 32,
            ..Default::default()
        };
        train_toy_denoiser(&demos, &schedule(), &cfg).unwrap().0
    })
}

pub fn start_obs(inst: &TaskInstance) -> Observation {
    Observation::new(inst.gripper.clone(), inst.scene.clone(), vec![encode(&inst.start()).unwrap()], inst.family.id()).unwrap()
}

pub fn reach_obs(seed: u64) -> (TaskInstance, Observation) {
    let inst = generate_instance(TaskFamily::Reach, 0, seed);
    let obs = start_obs(&inst);
    (inst, obs)
}

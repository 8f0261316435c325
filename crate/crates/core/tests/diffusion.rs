mod common;

use adp_core::diffusion::dataset::to_demos;
use adp_core::diffusion::{forward_diffuse, sample_ddpm, train_toy_denoiser, Denoiser, GaussianOracle, ScheduleSpec, TrainConfig, VarianceKind};
use adp_core::rng;
use adp_core::se3::{ActionVector, ACTION_DIM};
use adp_core::taskbench::{make_dataset, TaskFamily};
use common::{reach_obs, toy_model};
use proptest::prelude::*;

#[test]
fn oracle_sampling_recovers_moments() {
    let s = ScheduleSpec {
        clip_sample: None,
        variance: VarianceKind::Large,
        ..Default::default()
    }
    .build()
    .unwrap();
    let mean: Vec<f64> = (0..ACTION_DIM).map(|i| 0.1 * i as f64 - 0.3).collect();
    let var: Vec<f64> = (0..ACTION_DIM).map(|i| 0.5 + 0.05 * i as f64).collect();
    let o = GaussianOracle::new(mean.clone(), var.clone(), &s).unwrap();
    let (_, obs) = reach_obs(1);
    let n = 10_000;
    let mut sum = vec![0.0; ACTION_DIM];
    let mut sq = vec![0.0; ACTION_DIM];
    let mut r = rng::seeded(4);
    for _ in 0..n {
        let x = sample_ddpm(&o, &obs, &s, 1, &mut r).unwrap();
        for (k, v) in x.as_slice().iter().enumerate() {
            sum[k] += v;
            sq[k] += v * v;
        }
    }
    for k in 0..ACTION_DIM {
        let m = sum[k] / n as f64;
        let v = sq[k] / n as f64 - m * m;
        assert!((m - mean[k]).abs() < 0.03, "mean {k}: {m} vs {}", mean[k]);
        assert!((v / var[k] - 1.0).abs() < 0.06, "var {k}: {v} vs {}", var[k]);
    }
}

#[test]
fn respaced_schedules_keep_endpoints() {
    let s = ScheduleSpec::default().build().unwrap();
    for tp in [1, 10, 20, 25, 50, 100] {
        let r = s.respace(tp).unwrap();
        assert_eq!(r.steps(), tp);
        assert_eq!(r.model_t(tp), s.steps());
        assert!((r.alpha_bar(tp) - s.alpha_bar(s.steps())).abs() < 1e-15);
    }
    assert!(s.respace(0).is_err());
    assert!(s.respace(101).is_err());
}

#[test]
fn trained_model_diffuses_in_unit_range_coordinates() {
    let n = toy_model().normalizer();
    assert!(!n.is_identity());
    let (_, eps) = make_dataset(TaskFamily::Reach, 0, 40, 11, 4, 2).unwrap();
    for (_, a) in to_demos(&eps, 4).unwrap() {
        let z = n.to_model(&a).unwrap();
        for (k, v) in z.as_slice().iter().enumerate() {
            if k % ACTION_DIM >= 6 {
                assert!(v.abs() <= 1.0 + 1e-9, "slot {k}: {v}");
            } else {
                assert_eq!(*v, a.as_slice()[k]);
            }
        }
    }
}

#[test]
fn overfit_single_demo_is_reproduced() {
    let (_, eps) = make_dataset(TaskFamily::Reach, 0, 1, 21, 2, 2).unwrap();
    let (obs, target) = to_demos(&eps, 2).unwrap().swap_remove(0);
    let demos = vec![(obs.clone(), target.clone()); 128];
    let s = ScheduleSpec::default().build().unwrap();
    let cfg = TrainConfig {
        steps: 3000,
        batch_size: 32,
        ..Default::default()
    };
    let (model, _) = train_toy_denoiser(&demos, &s, &cfg).unwrap();
    let p = TaskFamily::Reach.params();
    let diam = (0..3).map(|k| (p.translation_hi[k] - p.translation_lo[k]).powi(2)).sum::<f64>().sqrt();
    let mut r = rng::seeded(5);
    let runs = 50;
    let close = (0..runs)
        .filter(|_| {
            let x = sample_ddpm(&model, &obs, &s, 2, &mut r).unwrap();
            let ok = x.blocks().zip(target.blocks()).all(|(a, b)| (6..9).map(|k| (a[k] - b[k]).powi(2)).sum::<f64>().sqrt() <= 0.05 * diam);
            ok
        })
        .count();
    assert!(close * 10 >= runs * 9, "{close}/{runs} within 5% of the workspace diameter");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn forward_diffusion_is_affine(seed in 0u64..10_000, t in 1usize..=100) {
        let s = ScheduleSpec::default().build().unwrap();
        let mut r = rng::seeded(seed);
        let x0 = ActionVector::new(rng::normal_vec(&mut r, 2 * ACTION_DIM), 2).unwrap();
        let eps = rng::normal_vec(&mut r, 2 * ACTION_DIM);
        let xt = forward_diffuse(&x0, t, &s, &eps).unwrap();
        let ab = s.alpha_bar(t);
        for ((a, b), e) in xt.as_slice().iter().zip(x0.as_slice()).zip(&eps) {
            prop_assert!((a - (ab.sqrt() * b + (1.0 - ab).sqrt() * e)).abs() < 1e-12);
        }
    }
}

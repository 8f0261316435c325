use serde::{Deserialize, Serialize};

use super::{prepare, registration_proposal, GuidanceConfig, InitMode};
use crate::diffusion::{forward_diffuse, NoiseSchedule, Observation};
use crate::error::{Error, Result};
use crate::registration::fgr_register;
use crate::rng::{self, Rng};
use crate::se3::ActionVector;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundTrial {
    /// `‖a^M − a⁰‖`: initial state against ground truth.
    pub delta1: f64,
    /// `‖â^M − a⁰‖`: forward-diffused ground truth against ground truth.
    pub delta2: f64,
    /// `‖a^M − â^M‖`.
    pub gap: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBoundReport {
    pub start_step: usize,
    pub fitness: f64,
    pub trials: Vec<BoundTrial>,
}

impl ErrorBoundReport {
    pub fn all_hold(&self) -> bool {
        self.trials.iter().all(|t| t.holds)
    }

    pub fn delta1_median(&self) -> f64 {
        median(self.trials.iter().map(|t| t.delta1).collect())
    }

    pub fn delta2_median(&self) -> f64 {
        median(self.trials.iter().map(|t| t.delta2).collect())
    }
}

pub(crate) fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Compare the registration-based start state with the forward-diffused
/// ground truth at step `M`, both driven by the same noise draw per trial.
///
/// With [`InitMode::FgrDirect`] the start state is the clean proposal and
/// only `â^M` is noisy.
pub fn error_bound_report(
    obs: &Observation,
    schedule: &NoiseSchedule,
    cfg: &GuidanceConfig,
    ground_truth: &ActionVector,
    trials: usize,
    rng: &mut Rng,
) -> Result<ErrorBoundReport> {
    if cfg.init_mode == InitMode::RandomNoise {
        return Err(Error::InvalidConfig("error bound needs a registration-based init mode".into()));
    }
    cfg.validate(schedule)?;
    let prepared = prepare(obs, cfg)?;
    let reg = prepared.registration.as_ref().expect("registration init prepares FGR");
    let m = cfg.resolved_start_step(schedule);
    let clean = registration_proposal(reg, cfg.default_width, ground_truth.n_actions())?;
    let mut out = Vec::with_capacity(trials);
    for _ in 0..trials {
        let eps = rng::normal_vec(rng, ground_truth.len());
        let a_m = match cfg.init_mode {
            InitMode::FgrDirect => clean.clone(),
            _ => forward_diffuse(&clean, m, schedule, &eps)?,
        };
        let a_hat = forward_diffuse(ground_truth, m, schedule, &eps)?;
        let delta1 = a_m.distance(ground_truth);
        let delta2 = a_hat.distance(ground_truth);
        let gap = a_m.distance(&a_hat);
        out.push(BoundTrial {
            delta1,
            delta2,
            gap,
            holds: gap <= delta1 + delta2 + 1e-9,
        });
    }
    Ok(ErrorBoundReport {
        start_step: m,
        fitness: reg.fitness,
        trials: out,
    })
}

/// Median clean-proposal error `‖encode(FGR pose) − a⁰‖` over `cases` for
/// each iteration budget.
pub fn delta1_sweep(cases: &[(Observation, ActionVector)], budgets: &[usize], cfg: &GuidanceConfig) -> Result<Vec<(usize, f64)>> {
    budgets
        .iter()
        .map(|&iters| {
            let mut fgr = cfg.fgr.clone();
            fgr.max_iterations = iters;
            let errs: Result<Vec<f64>> = cases
                .iter()
                .map(|(obs, truth)| {
                    let reg = fgr_register(&obs.gripper, &obs.scene, &fgr)?;
                    Ok(registration_proposal(&reg, cfg.default_width, truth.n_actions())?.distance(truth))
                })
                .collect();
            Ok((iters, median(errs?)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(vec![]).is_nan());
    }
}

use super::{check_prediction, Denoiser, NoiseSchedule, Observation};
use crate::error::{Error, Result};
use crate::rng::{self, Rng};
use crate::se3::{ActionVector, ACTION_DIM};

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::LengthMismatch { expected, got });
    }
    Ok(())
}

/// `√ᾱ_t·x0 + √(1−ᾱ_t)·ε`.
pub fn forward_diffuse(x0: &ActionVector, t: usize, schedule: &NoiseSchedule, noise: &[f64]) -> Result<ActionVector> {
    schedule.check_step(t)?;
    check_len(x0.len(), noise.len())?;
    let ab = schedule.alpha_bar(t);
    let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
    x0.with_values(x0.as_slice().iter().zip(noise).map(|(x, e)| a * x + b * e).collect())
}

/// Forward diffusion with fresh standard normal noise; returns the noise too.
pub fn forward_diffuse_sampled(x0: &ActionVector, t: usize, schedule: &NoiseSchedule, rng: &mut Rng) -> Result<(ActionVector, Vec<f64>)> {
    schedule.check_step(t)?;
    let eps = rng::normal_vec(rng, x0.len());
    Ok((forward_diffuse(x0, t, schedule, &eps)?, eps))
}

/// One ancestral DDPM reverse step from `t` to `t − 1`. Draws noise only
/// for `t > 1`.
///
/// With a clipping schedule the posterior mean is formed from the clamped
/// noise-free estimate instead of directly from `eps_hat`.
pub fn ddpm_step(x_t: &ActionVector, eps_hat: &[f64], t: usize, schedule: &NoiseSchedule, rng: &mut Rng) -> Result<ActionVector> {
    schedule.check_step(t)?;
    check_len(x_t.len(), eps_hat.len())?;
    let mut out: Vec<f64> = match schedule.clip_sample() {
        None => {
            let inv_sqrt_alpha = 1.0 / schedule.alpha(t).sqrt();
            let coef = schedule.beta(t) / (1.0 - schedule.alpha_bar(t)).sqrt();
            x_t.as_slice()
                .iter()
                .zip(eps_hat)
                .map(|(x, e)| inv_sqrt_alpha * (x - coef * e))
                .collect()
        }
        Some(c) => {
            let ab = schedule.alpha_bar(t);
            let ab_prev = schedule.alpha_bar(t - 1);
            let c0 = ab_prev.sqrt() * schedule.beta(t) / (1.0 - ab);
            let ct = schedule.alpha(t).sqrt() * (1.0 - ab_prev) / (1.0 - ab);
            x_t.as_slice()
                .iter()
                .zip(eps_hat)
                .map(|(x, e)| {
                    let x0 = ((x - (1.0 - ab).sqrt() * e) / ab.sqrt()).clamp(-c, c);
                    c0 * x0 + ct * x
                })
                .collect()
        }
    };
    if t > 1 {
        let sigma = schedule.sigma(t);
        for v in &mut out {
            *v += sigma * rng::normal(rng);
        }
    }
    x_t.with_values(out)
}

/// DDIM step from `t` to `t_prev < t` (`t_prev = 0` lands on data) with
/// stochasticity `eta ∈ [0, 1]`. Draws noise only when the step's σ > 0.
pub fn ddim_step(
    x_t: &ActionVector,
    eps_hat: &[f64],
    t: usize,
    t_prev: usize,
    schedule: &NoiseSchedule,
    eta: f64,
    rng: &mut Rng,
) -> Result<ActionVector> {
    schedule.check_step(t)?;
    check_len(x_t.len(), eps_hat.len())?;
    if t_prev >= t {
        return Err(Error::InvalidSchedule(format!("DDIM needs t_prev < t, got {t_prev} >= {t}")));
    }
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::InvalidConfig(format!("DDIM eta {eta} outside [0, 1]")));
    }
    let ab = schedule.alpha_bar(t);
    let ab_prev = schedule.alpha_bar(t_prev);
    let sigma = eta * ((1.0 - ab_prev) / (1.0 - ab) * (1.0 - ab / ab_prev)).max(0.0).sqrt();
    let dir = (1.0 - ab_prev - sigma * sigma).max(0.0).sqrt();
    let mut out: Vec<f64> = x_t
        .as_slice()
        .iter()
        .zip(eps_hat)
        .map(|(x, e)| {
            let mut x0 = (x - (1.0 - ab).sqrt() * e) / ab.sqrt();
            if let Some(c) = schedule.clip_sample() {
                x0 = x0.clamp(-c, c);
            }
            ab_prev.sqrt() * x0 + dir * e
        })
        .collect();
    if sigma > 0.0 {
        for v in &mut out {
            *v += sigma * rng::normal(rng);
        }
    }
    x_t.with_values(out)
}

fn initial_noise(n_actions: usize, rng: &mut Rng) -> Result<ActionVector> {
    ActionVector::new(rng::normal_vec(rng, n_actions * ACTION_DIM), n_actions)
}

/// Full ancestral sampling over every step of `schedule`. The result is an
/// encoded action, mapped back through the denoiser's normalizer.
pub fn sample_ddpm<D: Denoiser + ?Sized>(
    denoiser: &D,
    obs: &Observation,
    schedule: &NoiseSchedule,
    n_actions: usize,
    rng: &mut Rng,
) -> Result<ActionVector> {
    let mut x = initial_noise(n_actions, rng)?;
    for t in (1..=schedule.steps()).rev() {
        let eps = denoiser.predict(obs, &x, schedule.model_t(t))?;
        check_prediction(&x, &eps)?;
        x = ddpm_step(&x, &eps, t, schedule, rng)?;
    }
    denoiser.normalizer().to_action(&x)
}

/// DDIM sampling over every step of `schedule`; respace to skip steps.
pub fn sample_ddim<D: Denoiser + ?Sized>(
    denoiser: &D,
    obs: &Observation,
    schedule: &NoiseSchedule,
    n_actions: usize,
    eta: f64,
    rng: &mut Rng,
) -> Result<ActionVector> {
    let mut x = initial_noise(n_actions, rng)?;
    for t in (1..=schedule.steps()).rev() {
        let eps = denoiser.predict(obs, &x, schedule.model_t(t))?;
        check_prediction(&x, &eps)?;
        x = ddim_step(&x, &eps, t, t - 1, schedule, eta, rng)?;
    }
    denoiser.normalizer().to_action(&x)
}

//! Observation-guided reverse diffusion.
//!
//! Each DDPM step `x̃ = DDPM(x_t, ε̂, t)` is followed by a correction along
//! the Chamfer gradient between the posed gripper cloud and the scene. The
//! gradient is taken at `x̃` itself or at its noise-free estimate, and the
//! step is either `η`-scaled or fixed to the radius `√d·σ_t` of the step's
//! Gaussian shell. Sampling may start from a registration-based proposal at
//! an intermediate step `M` instead of pure noise at `T`.
//!
//! The reverse loop runs in the denoiser's coordinates
//! ([`Denoiser::normalizer`]). Proposals enter and samples leave through that
//! map, and gradients are pulled back through it.

mod bound;
mod trace;

use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diffusion::{check_prediction, ddpm_step, forward_diffuse, ActionNormalizer, Denoiser, NoiseSchedule, Observation};
use crate::error::{Error, Result};
use crate::pointcloud::{chamfer_grad, ChamferGradient, ChamferTarget};
use crate::registration::{fgr_register, FgrConfig, RegistrationResult};
use crate::rng::{self, Rng};
use crate::se3::{encode, Action, ActionVector, ACTION_DIM};

pub use bound::{delta1_sweep, error_bound_report, BoundTrial, ErrorBoundReport};
pub use trace::{read_trace_jsonl, total_variation, trace_to_jsonl, write_trace_jsonl, SampleTrace, StepRecord};

/// Below this gradient norm no spherical correction is taken.
pub const ZERO_GRAD: f64 = 1e-10;
/// Smallest `ᾱ_t` for which the noise-free estimate is attempted.
pub const MIN_ALPHA_BAR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuidanceMode {
    Vanilla,
    /// Gradient at the noisy DDPM output, `η`-scaled.
    GuidedNoisy,
    /// Gradient at the noise-free estimate, `η`-scaled.
    GuidedTweedie,
    /// Gradient at the noise-free estimate, step of norm `√d·σ_t`.
    GuidedSpherical,
}

impl GuidanceMode {
    pub fn is_guided(self) -> bool {
        self != GuidanceMode::Vanilla
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    RandomNoise,
    /// The registered pose itself becomes the state at step `M`.
    FgrDirect,
    /// The registered pose is forward-diffused to step `M`.
    FgrForwardDiffused,
}

impl InitMode {
    pub fn uses_registration(self) -> bool {
        self != InitMode::RandomNoise
    }
}

/// Guidance strength for the `η`-scaled modes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Eta {
    Fixed(f64),
    /// `η_t = scale·σ_t·√d / mean_grad_norm`, putting the `η` modes on the
    /// scale of the spherical one.
    Calibrated { scale: f64, mean_grad_norm: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GuidanceConfig {
    pub mode: GuidanceMode,
    pub eta: Eta,
    /// Start step for registration-based init; `None` means `⌈0.2·T⌉`.
    pub start_step: Option<usize>,
    pub init_mode: InitMode,
    pub batch_size: usize,
    /// Registration below this fitness falls back to random noise.
    pub fgr_fitness_floor: f64,
    /// Gripper width put into registration proposals.
    pub default_width: f64,
    /// Record per-step Chamfer values and noise-free estimates.
    pub record_chamfer: bool,
    pub fgr: FgrConfig,
}

impl Default for GuidanceConfig {
    fn default() -> Self {
        Self {
            mode: GuidanceMode::GuidedSpherical,
            eta: Eta::Fixed(0.0),
            start_step: None,
            init_mode: InitMode::FgrForwardDiffused,
            batch_size: 1,
            fgr_fitness_floor: 0.5,
            default_width: 0.04,
            record_chamfer: false,
            fgr: FgrConfig::default(),
        }
    }
}

impl GuidanceConfig {
    pub fn vanilla() -> Self {
        Self {
            mode: GuidanceMode::Vanilla,
            init_mode: InitMode::RandomNoise,
            ..Default::default()
        }
    }

    pub fn validate(&self, schedule: &NoiseSchedule) -> Result<()> {
        if let Some(m) = self.start_step {
            if m == 0 || m > schedule.steps() {
                return Err(Error::InvalidConfig(format!("start step {m} outside 1..={}", schedule.steps())));
            }
        }
        match self.eta {
            Eta::Fixed(e) if !(e >= 0.0 && e.is_finite()) => {
                return Err(Error::InvalidConfig(format!("eta {e} must be finite and non-negative")));
            }
            Eta::Calibrated { scale, mean_grad_norm } if !(scale >= 0.0 && mean_grad_norm > 0.0 && mean_grad_norm.is_finite()) => {
                return Err(Error::InvalidConfig("calibrated eta needs scale >= 0 and a positive gradient norm".into()));
            }
            _ => {}
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch size must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.fgr_fitness_floor) {
            return Err(Error::InvalidConfig(format!("fitness floor {} outside [0, 1]", self.fgr_fitness_floor)));
        }
        if !(self.default_width >= 0.0) {
            return Err(Error::InvalidConfig("default width must be non-negative".into()));
        }
        self.fgr.validate()
    }

    /// `⌈0.2·T⌉` unless set explicitly.
    pub fn resolved_start_step(&self, schedule: &NoiseSchedule) -> usize {
        self.start_step
            .unwrap_or_else(|| ((0.2 * schedule.steps() as f64).ceil() as usize).max(1))
            .min(schedule.steps())
    }

    /// Effective dimension `action_dim × batch × n_actions`.
    pub fn effective_dim(&self, n_actions: usize) -> usize {
        ACTION_DIM * self.batch_size * n_actions
    }

    /// SHA-256 of the canonical JSON form, first 16 hex digits.
    pub fn config_hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("plain data");
        hex::encode(&Sha256::digest(&json)[..8])
    }

    fn eta_at(&self, t: usize, schedule: &NoiseSchedule, d: usize) -> f64 {
        match self.eta {
            Eta::Fixed(e) => e,
            Eta::Calibrated { scale, mean_grad_norm } => scale * schedule.sigma(t) * (d as f64).sqrt() / mean_grad_norm,
        }
    }
}

/// `x̂⁰ = (x̃ − √(1−ᾱ_t)·ε̂)/√ᾱ_t`.
pub fn tweedie_x0(x_tilde: &ActionVector, eps_hat: &[f64], t: usize, schedule: &NoiseSchedule) -> Result<ActionVector> {
    schedule.check_step(t)?;
    if eps_hat.len() != x_tilde.len() {
        return Err(Error::LengthMismatch {
            expected: x_tilde.len(),
            got: eps_hat.len(),
        });
    }
    let ab = schedule.alpha_bar(t);
    if ab < MIN_ALPHA_BAR {
        return Err(Error::AlphaBarUnderflow { t, alpha_bar: ab });
    }
    let (s, n) = (ab.sqrt(), (1.0 - ab).sqrt());
    x_tilde.with_values(x_tilde.as_slice().iter().zip(eps_hat).map(|(x, e)| (x - n * e) / s).collect())
}

/// Chamfer gradient of every action block against the scene, with respect
/// to the model coordinates `x_source`.
pub fn guidance_gradient(
    x_source: &ActionVector,
    obs: &Observation,
    target: &ChamferTarget,
    normalizer: &ActionNormalizer,
) -> Result<ChamferGradient> {
    let mut g = chamfer_grad(&normalizer.to_action(x_source)?, &obs.gripper, target)?;
    normalizer.pull_back(&mut g.grad);
    Ok(g)
}

/// Result of [`correction_step`].
#[derive(Debug, Clone, PartialEq)]
pub struct Correction {
    pub x: ActionVector,
    /// `x_out − x_tilde`.
    pub delta: Vec<f64>,
    pub norm: f64,
    pub skipped: bool,
}

/// Apply the mode's correction to the DDPM output `x_tilde`.
///
/// `eta` is the strength for the `η` modes and is ignored otherwise.
pub fn correction_step(
    x_tilde: &ActionVector,
    g: &[f64],
    t: usize,
    schedule: &NoiseSchedule,
    mode: GuidanceMode,
    eta: f64,
    d: usize,
) -> Result<Correction> {
    schedule.check_step(t)?;
    if g.len() != x_tilde.len() {
        return Err(Error::LengthMismatch {
            expected: x_tilde.len(),
            got: g.len(),
        });
    }
    let gnorm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    let scale = match mode {
        GuidanceMode::Vanilla => 0.0,
        GuidanceMode::GuidedNoisy | GuidanceMode::GuidedTweedie => eta,
        GuidanceMode::GuidedSpherical => {
            if gnorm < ZERO_GRAD {
                0.0
            } else {
                (d as f64).sqrt() * schedule.sigma(t) / gnorm
            }
        }
    };
    if scale == 0.0 || !gnorm.is_finite() || gnorm == 0.0 {
        return Ok(Correction {
            x: x_tilde.clone(),
            delta: vec![0.0; g.len()],
            norm: 0.0,
            skipped: true,
        });
    }
    let delta: Vec<f64> = g.iter().map(|v| -scale * v).collect();
    let x = x_tilde.with_values(x_tilde.as_slice().iter().zip(&delta).map(|(a, b)| a + b).collect())?;
    let norm = delta.iter().map(|v| v * v).sum::<f64>().sqrt();
    Ok(Correction {
        x,
        delta,
        norm,
        skipped: false,
    })
}

/// Precomputed per-scene state reused across samples of one episode.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub target: Arc<ChamferTarget>,
    pub registration: Option<Arc<RegistrationResult>>,
}

/// Build the scene index and, if the init mode needs it, register the
/// gripper cloud onto the scene.
pub fn prepare(obs: &Observation, cfg: &GuidanceConfig) -> Result<Prepared> {
    let target = Arc::new(ChamferTarget::new((*obs.scene).clone())?);
    let registration = if cfg.init_mode.uses_registration() {
        Some(Arc::new(fgr_register(&obs.gripper, &obs.scene, &cfg.fgr)?))
    } else {
        None
    };
    Ok(Prepared { target, registration })
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitialProposal {
    pub x: ActionVector,
    pub start_step: usize,
    /// Registration was requested but rejected for low fitness.
    pub fallback: bool,
    pub fitness: Option<f64>,
    /// Clean registration proposal in model coordinates, when one was used.
    pub proposal: Option<ActionVector>,
    /// Noise used to forward-diffuse the proposal.
    pub noise: Option<Vec<f64>>,
}

fn random_start(n_actions: usize, schedule: &NoiseSchedule, rng: &mut Rng) -> Result<(ActionVector, usize)> {
    Ok((ActionVector::new(rng::normal_vec(rng, n_actions * ACTION_DIM), n_actions)?, schedule.steps()))
}

/// Encoded registration proposal replicated over `n_actions` blocks.
pub fn registration_proposal(reg: &RegistrationResult, width: f64, n_actions: usize) -> Result<ActionVector> {
    let block = encode(&Action::new(reg.pose, width)?)?;
    ActionVector::new(block.iter().copied().cycle().take(n_actions * ACTION_DIM).collect(), n_actions)
}

/// Initial state (model coordinates) and start step for the configured
/// init mode.
pub fn propose_initial_action(
    prepared: &Prepared,
    normalizer: &ActionNormalizer,
    n_actions: usize,
    schedule: &NoiseSchedule,
    cfg: &GuidanceConfig,
    rng: &mut Rng,
) -> Result<InitialProposal> {
    let reg = match (cfg.init_mode, &prepared.registration) {
        (InitMode::RandomNoise, _) => None,
        (_, Some(r)) => Some(r),
        (_, None) => return Err(Error::InvalidConfig("registration init requested but not prepared".into())),
    };
    let Some(reg) = reg else {
        let (x, start_step) = random_start(n_actions, schedule, rng)?;
        return Ok(InitialProposal {
            x,
            start_step,
            fallback: false,
            fitness: None,
            proposal: None,
            noise: None,
        });
    };
    if reg.fitness < cfg.fgr_fitness_floor || reg.correspondences == 0 {
        let (x, start_step) = random_start(n_actions, schedule, rng)?;
        return Ok(InitialProposal {
            x,
            start_step,
            fallback: true,
            fitness: Some(reg.fitness),
            proposal: None,
            noise: None,
        });
    }
    let m = cfg.resolved_start_step(schedule);
    let clean = normalizer.to_model(&registration_proposal(reg, cfg.default_width, n_actions)?)?;
    let (x, noise) = match cfg.init_mode {
        InitMode::FgrDirect => (clean.clone(), None),
        _ => {
            let eps = rng::normal_vec(rng, clean.len());
            (forward_diffuse(&clean, m, schedule, &eps)?, Some(eps))
        }
    };
    Ok(InitialProposal {
        x,
        start_step: m,
        fallback: false,
        fitness: Some(reg.fitness),
        proposal: Some(clean),
        noise,
    })
}

/// A failed sample with the trace recorded up to the failure.
#[derive(Debug)]
pub struct SampleFailure {
    pub error: Error,
    pub trace: SampleTrace,
}

impl std::fmt::Display for SampleFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "sampling failed after {} steps: {}", self.trace.steps.len(), self.error)
    }
}

impl std::error::Error for SampleFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

impl From<SampleFailure> for Error {
    fn from(f: SampleFailure) -> Self {
        f.error
    }
}

/// Guided sampling with scene state from [`prepare`].
pub fn adp_sample_prepared<D: Denoiser + ?Sized>(
    denoiser: &D,
    obs: &Observation,
    prepared: &Prepared,
    schedule: &NoiseSchedule,
    n_actions: usize,
    cfg: &GuidanceConfig,
    rng: &mut Rng,
) -> std::result::Result<(ActionVector, SampleTrace), SampleFailure> {
    let clock = Instant::now();
    let mut trace = SampleTrace::new(cfg.mode, cfg.init_mode);
    let fail = |error: Error, mut trace: SampleTrace| {
        trace.wall_time_s = clock.elapsed().as_secs_f64();
        SampleFailure { error, trace }
    };
    if let Err(e) = cfg.validate(schedule) {
        return Err(fail(e, trace));
    }
    let normalizer = denoiser.normalizer();
    let init = match propose_initial_action(prepared, &normalizer, n_actions, schedule, cfg, rng) {
        Ok(i) => i,
        Err(e) => return Err(fail(e, trace)),
    };
    trace.start_step = init.start_step;
    trace.fallback = init.fallback;
    trace.fgr_fitness = init.fitness;
    trace.initial = init.x.as_slice().to_vec();
    trace.proposal = init.proposal.map(ActionVector::into_vec);
    trace.init_noise = init.noise;
    let d = cfg.effective_dim(n_actions);
    let mut x = init.x;
    for t in (1..=init.start_step).rev() {
        match guided_step(obs, prepared, denoiser, &normalizer, &x, t, schedule, cfg, d, rng) {
            Ok((next, rec)) => {
                trace.steps.push(rec);
                x = next;
            }
            Err(e) => return Err(fail(e, trace)),
        }
    }
    trace.final_x = x.as_slice().to_vec();
    let out = match normalizer.to_action(&x) {
        Ok(a) => a,
        Err(e) => return Err(fail(e, trace)),
    };
    trace.wall_time_s = clock.elapsed().as_secs_f64();
    Ok((out, trace))
}

#[allow(clippy::too_many_arguments)]
fn guided_step<D: Denoiser + ?Sized>(
    obs: &Observation,
    prepared: &Prepared,
    denoiser: &D,
    normalizer: &ActionNormalizer,
    x: &ActionVector,
    t: usize,
    schedule: &NoiseSchedule,
    cfg: &GuidanceConfig,
    d: usize,
    rng: &mut Rng,
) -> Result<(ActionVector, StepRecord)> {
    let eps = denoiser.predict(obs, x, schedule.model_t(t))?;
    check_prediction(x, &eps)?;
    let x_tilde = ddpm_step(x, &eps, t, schedule, rng)?;
    let eta = cfg.eta_at(t, schedule, d);
    let active = match cfg.mode {
        GuidanceMode::Vanilla => false,
        GuidanceMode::GuidedNoisy | GuidanceMode::GuidedTweedie => eta > 0.0,
        GuidanceMode::GuidedSpherical => schedule.sigma(t) > 0.0,
    };
    let need_x0 = (active && cfg.mode != GuidanceMode::GuidedNoisy) || cfg.record_chamfer;
    let x0_hat = if need_x0 { Some(tweedie_x0(&x_tilde, &eps, t, schedule)?) } else { None };
    let mut rec = StepRecord {
        t,
        model_t: schedule.model_t(t),
        x_t: x.as_slice().to_vec(),
        eps_hat: eps,
        x_tilde: x_tilde.as_slice().to_vec(),
        x0_hat: x0_hat.as_ref().map(|v| v.as_slice().to_vec()),
        correction: Vec::new(),
        correction_norm: 0.0,
        grad_norm: None,
        skipped: true,
        degenerate: false,
        chamfer: None,
        x_next: Vec::new(),
    };
    let next = if active {
        let source = match cfg.mode {
            GuidanceMode::GuidedNoisy => &x_tilde,
            _ => x0_hat.as_ref().expect("computed for Tweedie modes"),
        };
        let g = guidance_gradient(source, obs, &prepared.target, normalizer)?;
        let c = correction_step(&x_tilde, &g.grad, t, schedule, cfg.mode, eta, d)?;
        rec.grad_norm = Some(g.norm());
        rec.degenerate = g.degenerate;
        rec.chamfer = Some(g.mean_loss());
        rec.correction_norm = c.norm;
        rec.skipped = c.skipped;
        rec.correction = c.delta;
        c.x
    } else {
        rec.correction = vec![0.0; x.len()];
        x_tilde
    };
    if cfg.record_chamfer && rec.chamfer.is_none() {
        let x0 = x0_hat.as_ref().expect("computed when recording");
        let losses: Result<Vec<f64>> = normalizer
            .to_action(x0)?
            .decode_all()
            .iter()
            .map(|dcd| prepared.target.loss(&dcd.action.pose, &obs.gripper))
            .collect();
        let losses = losses?;
        rec.chamfer = Some(losses.iter().sum::<f64>() / losses.len() as f64);
    }
    rec.x_next = next.as_slice().to_vec();
    Ok((next, rec))
}

/// Guided sampling: registration (if configured), then the reverse loop.
pub fn adp_sample<D: Denoiser + ?Sized>(
    denoiser: &D,
    obs: &Observation,
    schedule: &NoiseSchedule,
    n_actions: usize,
    cfg: &GuidanceConfig,
    rng: &mut Rng,
) -> std::result::Result<(ActionVector, SampleTrace), SampleFailure> {
    let prepared = prepare(obs, cfg).map_err(|error| SampleFailure {
        error,
        trace: SampleTrace::new(cfg.mode, cfg.init_mode),
    })?;
    adp_sample_prepared(denoiser, obs, &prepared, schedule, n_actions, cfg, rng)
}

/// Mean guidance-gradient norm over unguided warm-up rollouts, measured at
/// the point the mode would take its gradient.
pub fn calibrate_grad_norm<D: Denoiser + ?Sized>(
    denoiser: &D,
    warmup: &[Observation],
    schedule: &NoiseSchedule,
    n_actions: usize,
    mode: GuidanceMode,
    seed: u64,
) -> Result<f64> {
    let normalizer = denoiser.normalizer();
    let mut total = 0.0;
    let mut count = 0usize;
    for (i, obs) in warmup.iter().enumerate() {
        let target = ChamferTarget::new((*obs.scene).clone())?;
        let mut r = rng::substream(seed, &[0x6574_61, i as u64]);
        let mut x = ActionVector::new(rng::normal_vec(&mut r, n_actions * ACTION_DIM), n_actions)?;
        for t in (1..=schedule.steps()).rev() {
            let eps = denoiser.predict(obs, &x, schedule.model_t(t))?;
            check_prediction(&x, &eps)?;
            let x_tilde = ddpm_step(&x, &eps, t, schedule, &mut r)?;
            if schedule.sigma(t) > 0.0 {
                let source = match mode {
                    GuidanceMode::GuidedNoisy => x_tilde.clone(),
                    _ => tweedie_x0(&x_tilde, &eps, t, schedule)?,
                };
                let g = guidance_gradient(&source, obs, &target, &normalizer)?;
                if g.norm().is_finite() {
                    total += g.norm();
                    count += 1;
                }
            }
            x = x_tilde;
        }
    }
    if count == 0 || !(total > 0.0) {
        return Err(Error::InvalidConfig("warm-up produced no usable gradients".into()));
    }
    Ok(total / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::ScheduleSpec;

    #[test]
    fn tweedie_limits_and_underflow() {
        let s = crate::diffusion::make_schedule(3, crate::diffusion::ScheduleKind::Linear, 1e-9, 1e-9).unwrap();
        let x = ActionVector::new((0..10).map(|i| i as f64).collect(), 1).unwrap();
        let out = tweedie_x0(&x, &[5.0; 10], 1, &s).unwrap();
        assert!(out.distance(&x) < 1e-3);
        let lin = crate::diffusion::make_schedule(400, crate::diffusion::ScheduleKind::Linear, 0.5, 0.5).unwrap();
        assert!(matches!(tweedie_x0(&x, &[0.0; 10], 400, &lin), Err(Error::AlphaBarUnderflow { .. })));
    }

    #[test]
    fn spherical_correction_has_fixed_norm() {
        let s = ScheduleSpec::default().build().unwrap();
        let mut r = rng::seeded(3);
        let x = ActionVector::new(rng::normal_vec(&mut r, 40), 4).unwrap();
        for t in [2, 10, 50, 100] {
            let g = rng::normal_vec(&mut r, 40);
            let c = correction_step(&x, &g, t, &s, GuidanceMode::GuidedSpherical, 0.0, 40).unwrap();
            assert!(!c.skipped);
            assert!((c.norm - 40f64.sqrt() * s.sigma(t)).abs() < 1e-9);
            assert!((c.x.distance(&x) - 40f64.sqrt() * s.sigma(t)).abs() < 1e-9);
        }
        let c = correction_step(&x, &[0.0; 40], 50, &s, GuidanceMode::GuidedSpherical, 0.0, 40).unwrap();
        assert!(c.skipped);
        assert_eq!(c.x, x);
        let c = correction_step(&x, &[1.0; 40], 1, &s, GuidanceMode::GuidedSpherical, 0.0, 40).unwrap();
        assert!(c.skipped, "sigma_1 = 0 means no correction");
    }

    #[test]
    fn eta_correction_is_linear() {
        let s = ScheduleSpec::default().build().unwrap();
        let x = ActionVector::zeros(1);
        let g: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let c = correction_step(&x, &g, 5, &s, GuidanceMode::GuidedTweedie, 0.5, 10).unwrap();
        for (o, gi) in c.x.as_slice().iter().zip(&g) {
            assert_eq!(*o, -0.5 * gi);
        }
        let z = correction_step(&x, &[0.0; 10], 5, &s, GuidanceMode::GuidedNoisy, 0.5, 10).unwrap();
        assert_eq!(z.x, x);
    }

    #[test]
    fn config_checks_and_hash() {
        let s = ScheduleSpec::default().build().unwrap();
        let c = GuidanceConfig::default();
        c.validate(&s).unwrap();
        assert_eq!(c.resolved_start_step(&s), 20);
        assert_eq!(c.resolved_start_step(&s.respace(50).unwrap()), 10);
        assert_eq!(c.effective_dim(4), 40);
        let bad = GuidanceConfig {
            start_step: Some(101),
            ..Default::default()
        };
        assert!(bad.validate(&s).is_err());
        assert_eq!(c.config_hash(), GuidanceConfig::default().config_hash());
        assert_ne!(c.config_hash(), GuidanceConfig::vanilla().config_hash());
        assert_eq!(c.config_hash().len(), 16);
    }
}

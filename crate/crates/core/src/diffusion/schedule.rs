use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    Linear,
    Cosine,
}

impl std::fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ScheduleKind::Linear => "linear",
            ScheduleKind::Cosine => "cosine",
        })
    }
}

impl std::str::FromStr for ScheduleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Self::Linear),
            "cosine" => Ok(Self::Cosine),
            other => Err(Error::InvalidConfig(format!("unknown schedule kind {other:?}"))),
        }
    }
}

/// Reverse-step noise variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceKind {
    /// Posterior variance `β̃_t = β_t (1 − ᾱ_{t−1}) / (1 − ᾱ_t)`.
    #[default]
    Small,
    /// `β_t`.
    Large,
}

/// Serializable description from which a schedule is rebuilt.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSpec {
    pub steps: usize,
    pub kind: ScheduleKind,
    pub beta_min: f64,
    pub beta_max: f64,
    /// Clamp the reverse steps' noise-free estimate to `±clip`.
    #[serde(default)]
    pub clip_sample: Option<f64>,
    #[serde(default)]
    pub variance: VarianceKind,
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        Self {
            steps: 100,
            kind: ScheduleKind::Cosine,
            beta_min: 1e-5,
            beta_max: 0.999,
            clip_sample: Some(1.0),
            variance: VarianceKind::Small,
        }
    }
}

impl ScheduleSpec {
    pub fn build(&self) -> Result<NoiseSchedule> {
        Ok(make_schedule(self.steps, self.kind, self.beta_min, self.beta_max)?
            .with_clip(self.clip_sample)?
            .with_variance(self.variance))
    }
}

/// Per-step coefficients, indexed by step `t ∈ 1..=T`.
///
/// A respaced schedule keeps the cumulative products of its parent at a
/// subset of steps; [`model_t`](Self::model_t) maps each of its steps back to
/// the parent step a denoiser was trained on.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    spec: ScheduleSpec,
    betas: Vec<f64>,
    alphas: Vec<f64>,
    alpha_bars: Vec<f64>,
    sigmas: Vec<f64>,
    model_steps: Vec<usize>,
}

const COSINE_OFFSET: f64 = 0.008;

/// Linear or cosine β schedule over `steps` steps.
///
/// Linear spaces β evenly over `[beta_min, beta_max]`. Cosine derives β from
/// a squared-cosine ᾱ curve and clips each β into `[beta_min, beta_max]`.
pub fn make_schedule(steps: usize, kind: ScheduleKind, beta_min: f64, beta_max: f64) -> Result<NoiseSchedule> {
    if steps == 0 {
        return Err(Error::InvalidSchedule("at least one step is required".into()));
    }
    if !(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0) {
        return Err(Error::InvalidSchedule(format!(
            "need 0 < beta_min <= beta_max < 1, got [{beta_min}, {beta_max}]"
        )));
    }
    let betas: Vec<f64> = match kind {
        ScheduleKind::Linear => (0..steps)
            .map(|i| {
                if steps == 1 {
                    beta_min
                } else {
                    beta_min + (beta_max - beta_min) * i as f64 / (steps - 1) as f64
                }
            })
            .collect(),
        ScheduleKind::Cosine => {
            let f = |t: f64| (((t / steps as f64) + COSINE_OFFSET) / (1.0 + COSINE_OFFSET) * std::f64::consts::FRAC_PI_2).cos().powi(2);
            (1..=steps)
                .map(|t| (1.0 - f(t as f64) / f(t as f64 - 1.0)).clamp(beta_min, beta_max))
                .collect()
        }
    };
    let spec = ScheduleSpec {
        steps,
        kind,
        beta_min,
        beta_max,
        clip_sample: None,
        variance: VarianceKind::Small,
    };
    Ok(NoiseSchedule::from_betas(spec, betas, (1..=steps).collect()))
}

fn sigmas_for(variance: VarianceKind, betas: &[f64], alpha_bars: &[f64]) -> Vec<f64> {
    (0..betas.len())
        .map(|i| match variance {
            VarianceKind::Small => {
                let prev = if i == 0 { 1.0 } else { alpha_bars[i - 1] };
                ((1.0 - prev) / (1.0 - alpha_bars[i]) * betas[i]).max(0.0).sqrt()
            }
            VarianceKind::Large => betas[i].sqrt(),
        })
        .collect()
}

impl NoiseSchedule {
    fn from_betas(spec: ScheduleSpec, betas: Vec<f64>, model_steps: Vec<usize>) -> Self {
        let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
        let mut alpha_bars = Vec::with_capacity(betas.len());
        let mut acc = 1.0;
        for a in &alphas {
            acc *= a;
            alpha_bars.push(acc);
        }
        let sigmas = sigmas_for(spec.variance, &betas, &alpha_bars);
        Self {
            spec,
            betas,
            alphas,
            alpha_bars,
            sigmas,
            model_steps,
        }
    }

    pub fn with_variance(mut self, variance: VarianceKind) -> Self {
        self.spec.variance = variance;
        self.sigmas = sigmas_for(variance, &self.betas, &self.alpha_bars);
        self
    }

    pub fn variance(&self) -> VarianceKind {
        self.spec.variance
    }

    /// Clamp reverse-step estimates of `x0` to `±clip`; `None` disables.
    pub fn with_clip(mut self, clip: Option<f64>) -> Result<Self> {
        if let Some(c) = clip {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::InvalidSchedule(format!("clip {c} must be positive")));
            }
        }
        self.spec.clip_sample = clip;
        Ok(self)
    }

    pub fn clip_sample(&self) -> Option<f64> {
        self.spec.clip_sample
    }

    /// The schedule this one was built (or respaced) from.
    pub fn spec(&self) -> &ScheduleSpec {
        &self.spec
    }

    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    pub fn check_step(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.steps() {
            return Err(Error::TimestepOutOfRange { t, max: self.steps() });
        }
        Ok(())
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alphas[t - 1]
    }

    /// `ᾱ_t`, with `ᾱ_0 = 1`.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.alpha_bars[t - 1]
        }
    }

    /// Posterior standard deviation of the reverse step; zero at `t = 1`.
    pub fn sigma(&self, t: usize) -> f64 {
        self.sigmas[t - 1]
    }

    /// Step index of the parent schedule, the one the denoiser sees.
    pub fn model_t(&self, t: usize) -> usize {
        self.model_steps[t - 1]
    }

    /// Steps of the parent schedule the denoiser was trained over.
    pub fn model_steps_total(&self) -> usize {
        self.spec.steps
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bars
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    /// Respaced schedule over `steps` evenly spread parent steps, always
    /// including the first and last.
    pub fn respace(&self, steps: usize) -> Result<NoiseSchedule> {
        let total = self.steps();
        if steps == 0 || steps > total {
            return Err(Error::InvalidSchedule(format!("cannot respace {total} steps to {steps}")));
        }
        if steps == total {
            return Ok(self.clone());
        }
        let picks: Vec<usize> = if steps == 1 {
            vec![total]
        } else {
            (0..steps)
                .map(|i| 1 + ((i * (total - 1)) as f64 / (steps - 1) as f64).round() as usize)
                .collect()
        };
        let mut betas = Vec::with_capacity(steps);
        let mut prev = 1.0;
        for &t in &picks {
            let ab = self.alpha_bar(t);
            betas.push(1.0 - ab / prev);
            prev = ab;
        }
        let model_steps = picks.iter().map(|&t| self.model_t(t)).collect();
        Ok(NoiseSchedule::from_betas(self.spec, betas, model_steps))
    }
}

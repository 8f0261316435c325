use super::{Denoiser, NoiseSchedule, Observation};
use crate::error::{Error, Result};
use crate::se3::ActionVector;

/// Bayes-optimal noise predictor for data `x0 ~ N(mean, diag(var))`.
///
/// Ignores the observation. Zero variances give the point-mass limit.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianOracle {
    mean: Vec<f64>,
    var: Vec<f64>,
    alpha_bars: Vec<f64>,
}

impl GaussianOracle {
    /// `schedule` must be the one the sampler's `model_t` refers to.
    pub fn new(mean: Vec<f64>, var: Vec<f64>, schedule: &NoiseSchedule) -> Result<Self> {
        if mean.len() != var.len() {
            return Err(Error::LengthMismatch {
                expected: mean.len(),
                got: var.len(),
            });
        }
        if var.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidConfig("oracle mean must be finite and variances non-negative".into()));
        }
        let alpha_bars = (1..=schedule.steps()).map(|t| schedule.alpha_bar(t)).collect();
        Ok(Self { mean, var, alpha_bars })
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn var(&self) -> &[f64] {
        &self.var
    }

    fn alpha_bar(&self, t: usize) -> Result<f64> {
        if t == 0 || t > self.alpha_bars.len() {
            return Err(Error::TimestepOutOfRange {
                t,
                max: self.alpha_bars.len(),
            });
        }
        Ok(self.alpha_bars[t - 1])
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.mean.len() {
            return Err(Error::LengthMismatch {
                expected: self.mean.len(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// `E[x0 | x_t]`.
    pub fn posterior_mean(&self, x: &[f64], t: usize) -> Result<Vec<f64>> {
        self.check(x)?;
        let ab = self.alpha_bar(t)?;
        let s = ab.sqrt();
        Ok(x
            .iter()
            .zip(self.mean.iter().zip(&self.var))
            .map(|(xi, (m, c))| m + c * s / (ab * c + 1.0 - ab) * (xi - s * m))
            .collect())
    }

    /// `log p(x_t)` of the diffused marginal, up to its normalizing constant.
    pub fn log_density(&self, x: &[f64], t: usize) -> Result<f64> {
        self.check(x)?;
        let ab = self.alpha_bar(t)?;
        let s = ab.sqrt();
        Ok(x
            .iter()
            .zip(self.mean.iter().zip(&self.var))
            .map(|(xi, (m, c))| -0.5 * (xi - s * m).powi(2) / (ab * c + 1.0 - ab))
            .sum())
    }

    /// `∇ log p(x_t)`.
    pub fn score(&self, x: &[f64], t: usize) -> Result<Vec<f64>> {
        self.check(x)?;
        let ab = self.alpha_bar(t)?;
        let s = ab.sqrt();
        Ok(x
            .iter()
            .zip(self.mean.iter().zip(&self.var))
            .map(|(xi, (m, c))| -(xi - s * m) / (ab * c + 1.0 - ab))
            .collect())
    }
}

impl Denoiser for GaussianOracle {
    fn predict(&self, _obs: &Observation, x: &ActionVector, t: usize) -> Result<Vec<f64>> {
        let post = self.posterior_mean(x.as_slice(), t)?;
        let ab = self.alpha_bar(t)?;
        let (s, n) = (ab.sqrt(), (1.0 - ab).sqrt());
        Ok(x.as_slice().iter().zip(&post).map(|(xi, p)| (xi - s * p) / n).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::ScheduleSpec;
    use crate::pointcloud::PointCloud;
    use crate::rng;
    use nalgebra::Vector3;
    use std::sync::Arc;

    fn obs() -> Observation {
        let c = Arc::new(PointCloud::new(vec![Vector3::zeros()]).unwrap());
        Observation::new(c.clone(), c, vec![[0.0; 10]], 0).unwrap()
    }

    #[test]
    fn point_mass_limit() {
        let s = ScheduleSpec::default().build().unwrap();
        let m: Vec<f64> = (0..10).map(|i| 0.1 * i as f64).collect();
        let o = GaussianOracle::new(m.clone(), vec![0.0; 10], &s).unwrap();
        let mut r = rng::seeded(5);
        let x = ActionVector::new(rng::normal_vec(&mut r, 10), 1).unwrap();
        for t in [1, 40, 100] {
            let ab = s.alpha_bar(t);
            let eps = o.predict(&obs(), &x, t).unwrap();
            for i in 0..10 {
                let want = (x.as_slice()[i] - ab.sqrt() * m[i]) / (1.0 - ab).sqrt();
                assert!((eps[i] - want).abs() < 1e-9 * want.abs().max(1.0));
            }
        }
    }

    #[test]
    fn prediction_matches_finite_difference_score() {
        let s = ScheduleSpec::default().build().unwrap();
        let mut r = rng::seeded(6);
        let m = rng::normal_vec(&mut r, 10);
        let v: Vec<f64> = (0..10).map(|i| 0.05 + 0.1 * i as f64).collect();
        let o = GaussianOracle::new(m, v, &s).unwrap();
        for t in [2, 30, 77, 100] {
            let x = rng::normal_vec(&mut r, 10);
            let eps = o.predict(&obs(), &ActionVector::new(x.clone(), 1).unwrap(), t).unwrap();
            let h = 1e-5;
            for i in 0..10 {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[i] += h;
                xm[i] -= h;
                let fd = (o.log_density(&xp, t).unwrap() - o.log_density(&xm, t).unwrap()) / (2.0 * h);
                let want = -(1.0 - s.alpha_bar(t)).sqrt() * fd;
                assert!((eps[i] - want).abs() < 1e-6, "t={t} i={i}: {} vs {want}", eps[i]);
            }
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let s = ScheduleSpec::default().build().unwrap();
        assert!(GaussianOracle::new(vec![0.0; 3], vec![1.0; 2], &s).is_err());
        assert!(GaussianOracle::new(vec![0.0; 2], vec![-1.0; 2], &s).is_err());
        let o = GaussianOracle::new(vec![0.0; 10], vec![1.0; 10], &s).unwrap();
        assert!(o.predict(&obs(), &ActionVector::zeros(1), 0).is_err());
        assert!(o.predict(&obs(), &ActionVector::zeros(2), 5).is_err());
    }
}

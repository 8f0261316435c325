//! A small fully connected noise predictor trained on demonstrations.
//!
//! Input: noisy action vector, sinusoidal step embedding, and standardized
//! observation features (scene centroid, scene second moments, recent poses).
//! Two SiLU hidden layers; linear output of the action length.
//!
//! Actions are first mapped through an [`ActionNormalizer`] fitted to the
//! demonstrations, and diffusion runs in those coordinates. On top of that
//! the network works in per-dimension standardized coordinates with
//! skip/output preconditioning: it predicts the clean action, which
//! [`Denoiser::predict`](super::Denoiser::predict) converts to noise. Raw
//! translations are centimetre-scale against unit noise, and a plain noise
//! head cannot resolve them.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::weights::{read_container, write_container, Tensor};
use super::{ActionNormalizer, NoiseSchedule, Observation, ScheduleSpec};
use crate::error::{Error, Result};
use crate::rng;
use crate::se3::{ActionVector, ACTION_DIM};

const FORMAT_KIND: &str = "toy-denoiser";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Final learning rate as a fraction of the initial one (cosine decay).
    pub final_lr_fraction: f64,
    pub hidden: usize,
    pub embed_dim: usize,
    pub history_len: usize,
    pub seed: u64,
    /// Record the loss every this many steps.
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 20_000,
            batch_size: 128,
            learning_rate: 1e-3,
            final_lr_fraction: 0.05,
            hidden: 128,
            embed_dim: 16,
            history_len: 2,
            seed: 0,
            log_every: 500,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 || self.batch_size == 0 || self.hidden == 0 || self.history_len == 0 || self.log_every == 0 {
            return Err(Error::InvalidConfig("training sizes and counts must be positive".into()));
        }
        if self.embed_dim == 0 || self.embed_dim % 2 != 0 {
            return Err(Error::InvalidConfig(format!("embedding size {} must be even and positive", self.embed_dim)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) || !(0.0..=1.0).contains(&self.final_lr_fraction) {
            return Err(Error::InvalidConfig("learning rate settings out of range".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Loss on a fixed evaluation batch before and after training.
    pub initial_loss: f64,
    pub final_loss: f64,
    /// `(step, minibatch loss)` every `log_every` steps.
    pub trace: Vec<(usize, f64)>,
}

/// Shapes and standardization constants stored alongside the weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyMeta {
    pub n_actions: usize,
    pub history_len: usize,
    pub embed_dim: usize,
    pub hidden: usize,
    pub schedule: ScheduleSpec,
    pub normalizer: ActionNormalizer,
    pub feature_mean: Vec<f64>,
    pub feature_std: Vec<f64>,
    pub action_mean: Vec<f64>,
    /// Floored at [`MIN_ACTION_STD`].
    pub action_std: Vec<f64>,
    pub seed: u64,
}

/// Standardization floor for action dimensions that barely vary.
pub const MIN_ACTION_STD: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct ToyDenoiser {
    meta: ToyMeta,
    alpha_bars: Vec<f64>,
    w: [DMatrix<f64>; 3],
    b: [DVector<f64>; 3],
}

/// `(c_in, c_skip, c_out)` for a standardized dimension at noise level
/// `sigma = √((1−ᾱ)/ᾱ)/std`.
#[inline]
fn precondition(alpha_bar: f64, std: f64) -> (f64, f64, f64) {
    let sig = ((1.0 - alpha_bar) / alpha_bar).sqrt() / std;
    let n = sig * sig + 1.0;
    (1.0 / n.sqrt(), 1.0 / n, sig / n.sqrt())
}

/// Hand-crafted observation features: scene centroid (3), scene covariance
/// upper triangle (6), and the last `history_len` poses (oldest padded).
pub fn observation_features(obs: &Observation, history_len: usize) -> Vec<f64> {
    let c = obs.scene.centroid();
    let cov = obs.scene.covariance();
    let mut f = vec![c.x, c.y, c.z, cov[(0, 0)], cov[(0, 1)], cov[(0, 2)], cov[(1, 1)], cov[(1, 2)], cov[(2, 2)]];
    let h = &obs.history;
    for k in 0..history_len {
        // most recent pose last
        let idx = (h.len() + k).saturating_sub(history_len);
        f.extend_from_slice(&h[idx.min(h.len() - 1)]);
    }
    f
}

fn embed(t: usize, dim: usize, out: &mut [f64]) {
    let half = dim / 2;
    for k in 0..half {
        let freq = (-(k as f64) / half as f64 * 1000f64.ln()).exp();
        let a = t as f64 * freq;
        out[k] = a.sin();
        out[half + k] = a.cos();
    }
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl ToyDenoiser {
    pub fn meta(&self) -> &ToyMeta {
        &self.meta
    }

    pub fn action_len(&self) -> usize {
        self.meta.n_actions * ACTION_DIM
    }

    fn feature_len(&self) -> usize {
        self.meta.feature_mean.len()
    }

    fn input_len(&self) -> usize {
        self.action_len() + self.meta.embed_dim + self.feature_len()
    }

    fn alpha_bars(spec: &ScheduleSpec) -> Result<Vec<f64>> {
        let s = spec.build()?;
        Ok((1..=s.steps()).map(|t| s.alpha_bar(t)).collect())
    }

    /// Standardized noisy action `y_t = (x/√ᾱ − mean)/std`.
    fn standardize(&self, x: &[f64], t: usize, out: &mut [f64]) {
        let sa = self.alpha_bars[t - 1].sqrt();
        for (i, o) in out.iter_mut().enumerate() {
            *o = (x[i] / sa - self.meta.action_mean[i]) / self.meta.action_std[i];
        }
    }

    fn init(meta: ToyMeta, r: &mut rng::Rng) -> Result<Self> {
        let alpha_bars = Self::alpha_bars(&meta.schedule)?;
        let n_in = meta.n_actions * ACTION_DIM + meta.embed_dim + meta.feature_mean.len();
        let n_out = meta.n_actions * ACTION_DIM;
        let h = meta.hidden;
        let mut layer = |rows: usize, cols: usize, gain: f64| {
            let s = gain / (cols as f64).sqrt();
            DMatrix::from_fn(rows, cols, |_, _| s * rng::normal(r))
        };
        let w = [layer(h, n_in, 1.0), layer(h, h, 1.0), layer(n_out, h, 0.1)];
        let b = [DVector::zeros(h), DVector::zeros(h), DVector::zeros(n_out)];
        Ok(Self { meta, alpha_bars, w, b })
    }

    /// `x` is the noisy action in normalized coordinates at model step `t`.
    fn write_input(&self, x: &[f64], t: usize, features: &[f64], col: &mut [f64]) {
        let a = x.len();
        self.standardize(x, t, &mut col[..a]);
        let ab = self.alpha_bars[t - 1];
        for (i, c) in col[..a].iter_mut().enumerate() {
            *c *= precondition(ab, self.meta.action_std[i]).0;
        }
        let e = self.meta.embed_dim;
        embed(t, e, &mut col[a..a + e]);
        for (k, f) in features.iter().enumerate() {
            col[a + e + k] = (f - self.meta.feature_mean[k]) / self.meta.feature_std[k];
        }
    }

    /// Forward pass over input columns. Returns pre-activations and
    /// activations of both hidden layers, and the output.
    fn forward(&self, input: &DMatrix<f64>) -> [DMatrix<f64>; 5] {
        let affine = |w: &DMatrix<f64>, b: &DVector<f64>, x: &DMatrix<f64>| {
            let mut z = w * x;
            for mut c in z.column_iter_mut() {
                c += b;
            }
            z
        };
        let z1 = affine(&self.w[0], &self.b[0], input);
        let h1 = z1.map(|z| z * sigmoid(z));
        let z2 = affine(&self.w[1], &self.b[1], &h1);
        let h2 = z2.map(|z| z * sigmoid(z));
        let out = affine(&self.w[2], &self.b[2], &h2);
        [z1, h1, z2, h2, out]
    }

    /// Predict noise for one observation's precomputed raw features.
    pub fn predict_with_features(&self, x: &[f64], t: usize, features: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.action_len() {
            return Err(Error::LengthMismatch {
                expected: self.action_len(),
                got: x.len(),
            });
        }
        if features.len() != self.feature_len() {
            return Err(Error::LengthMismatch {
                expected: self.feature_len(),
                got: features.len(),
            });
        }
        if t == 0 || t > self.meta.schedule.steps {
            return Err(Error::TimestepOutOfRange {
                t,
                max: self.meta.schedule.steps,
            });
        }
        let mut input = DMatrix::zeros(self.input_len(), 1);
        self.write_input(x, t, features, input.as_mut_slice());
        let [_, _, _, _, out] = self.forward(&input);
        let ab = self.alpha_bars[t - 1];
        let mut y = vec![0.0; x.len()];
        self.standardize(x, t, &mut y);
        Ok((0..x.len())
            .map(|i| {
                let (m, sd) = (self.meta.action_mean[i], self.meta.action_std[i]);
                let (_, skip, c_out) = precondition(ab, sd);
                let x0 = m + sd * (skip * y[i] + c_out * out[i]);
                (x[i] - ab.sqrt() * x0) / (1.0 - ab).sqrt()
            })
            .collect())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let header = serde_json::json!({ "kind": FORMAT_KIND, "meta": self.meta });
        let names = ["w1", "b1", "w2", "b2", "w3", "b3"];
        let tensors: Vec<Tensor> = (0..3)
            .flat_map(|i| {
                // row-major on disk
                let w = &self.w[i];
                let wt = w.transpose();
                [
                    Tensor::new(names[2 * i], vec![w.nrows(), w.ncols()], wt.as_slice().to_vec()),
                    Tensor::new(names[2 * i + 1], vec![self.b[i].len()], self.b[i].as_slice().to_vec()),
                ]
            })
            .collect();
        write_container(path, &header, &tensors)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (header, tensors) = read_container(path)?;
        if header.get("kind").and_then(|k| k.as_str()) != Some(FORMAT_KIND) {
            return Err(Error::format(path, "not a toy denoiser weight file"));
        }
        let meta: ToyMeta = serde_json::from_value(header["meta"].clone()).map_err(|e| Error::format(path, format!("bad header: {e}")))?;
        if meta.feature_mean.len() != meta.feature_std.len() || meta.feature_std.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::format(path, "bad feature standardization"));
        }
        let n_act = meta.n_actions * ACTION_DIM;
        if meta.action_mean.len() != n_act || meta.action_std.len() != n_act || meta.action_std.iter().any(|s| !(*s >= MIN_ACTION_STD)) {
            return Err(Error::format(path, "bad action standardization"));
        }
        meta.normalizer.validate().map_err(|e| Error::format(path, e.to_string()))?;
        let alpha_bars = Self::alpha_bars(&meta.schedule).map_err(|e| Error::format(path, format!("bad schedule: {e}")))?;
        let n_in = meta.n_actions * ACTION_DIM + meta.embed_dim + meta.feature_mean.len();
        let n_out = meta.n_actions * ACTION_DIM;
        let h = meta.hidden;
        let expect: [(&str, Vec<usize>); 6] = [
            ("w1", vec![h, n_in]),
            ("b1", vec![h]),
            ("w2", vec![h, h]),
            ("b2", vec![h]),
            ("w3", vec![n_out, h]),
            ("b3", vec![n_out]),
        ];
        if tensors.len() != expect.len() {
            return Err(Error::format(path, format!("expected 6 tensors, found {}", tensors.len())));
        }
        for (t, (name, shape)) in tensors.iter().zip(&expect) {
            if t.name != *name || t.shape != *shape {
                return Err(Error::format(
                    path,
                    format!("tensor {:?} {:?} does not match expected {name:?} {shape:?}", t.name, t.shape),
                ));
            }
            if t.data.iter().any(|v| !v.is_finite()) {
                return Err(Error::format(path, format!("tensor {name} holds non-finite values")));
            }
        }
        let mat = |t: &Tensor| DMatrix::from_row_slice(t.shape[0], t.shape[1], &t.data);
        let vect = |t: &Tensor| DVector::from_column_slice(&t.data);
        Ok(Self {
            w: [mat(&tensors[0]), mat(&tensors[2]), mat(&tensors[4])],
            b: [vect(&tensors[1]), vect(&tensors[3]), vect(&tensors[5])],
            meta,
            alpha_bars,
        })
    }
}

impl super::Denoiser for ToyDenoiser {
    fn predict(&self, obs: &Observation, x: &ActionVector, t: usize) -> Result<Vec<f64>> {
        let f = observation_features(obs, self.meta.history_len);
        self.predict_with_features(x.as_slice(), t, &f)
    }

    fn normalizer(&self) -> ActionNormalizer {
        self.meta.normalizer
    }
}

struct Adam {
    m: Vec<DMatrix<f64>>,
    v: Vec<DMatrix<f64>>,
    step: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(shapes: &[(usize, usize)]) -> Self {
        Self {
            m: shapes.iter().map(|&(r, c)| DMatrix::zeros(r, c)).collect(),
            v: shapes.iter().map(|&(r, c)| DMatrix::zeros(r, c)).collect(),
            step: 0,
        }
    }

    fn update(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]], lr: f64) {
        self.step += 1;
        let c1 = 1.0 - Self::B1.powi(self.step);
        let c2 = 1.0 - Self::B2.powi(self.step);
        for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let m = self.m[k].as_mut_slice();
            let v = self.v[k].as_mut_slice();
            for i in 0..p.len() {
                m[i] = Self::B1 * m[i] + (1.0 - Self::B1) * g[i];
                v[i] = Self::B2 * v[i] + (1.0 - Self::B2) * g[i] * g[i];
                p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + Self::EPS);
            }
        }
    }
}

struct Batch {
    input: DMatrix<f64>,
    target: DMatrix<f64>,
}

fn draw_batch(
    model: &ToyDenoiser,
    actions: &[ActionVector],
    features: &[Vec<f64>],
    schedule: &NoiseSchedule,
    size: usize,
    r: &mut rng::Rng,
) -> Batch {
    let a = model.action_len();
    let mut input = DMatrix::zeros(model.input_len(), size);
    let mut target = DMatrix::zeros(a, size);
    let mut xt = vec![0.0; a];
    let mut yt = vec![0.0; a];
    for j in 0..size {
        let k = r.gen_range(0..actions.len());
        let t = r.gen_range(1..=schedule.steps());
        let ab = schedule.alpha_bar(t);
        let (s, n) = (ab.sqrt(), (1.0 - ab).sqrt());
        let x0 = actions[k].as_slice();
        for i in 0..a {
            xt[i] = s * x0[i] + n * rng::normal(r);
        }
        let mt = schedule.model_t(t);
        model.standardize(&xt, mt, &mut yt);
        for i in 0..a {
            let (m, sd) = (model.meta.action_mean[i], model.meta.action_std[i]);
            let (_, skip, c_out) = precondition(ab, sd);
            target[(i, j)] = ((x0[i] - m) / sd - skip * yt[i]) / c_out;
        }
        let rows = input.nrows();
        let col = &mut input.as_mut_slice()[j * rows..(j + 1) * rows];
        model.write_input(&xt, mt, &features[k], col);
    }
    Batch { input, target }
}

fn batch_loss(model: &ToyDenoiser, batch: &Batch) -> f64 {
    let out = &model.forward(&batch.input)[4];
    (out - &batch.target).norm_squared() / out.len() as f64
}

/// Fit a [`ToyDenoiser`] to `demos`. The loss is the preconditioned
/// clean-action error, uniform over steps.
pub fn train_toy_denoiser(
    demos: &[(Observation, ActionVector)],
    schedule: &NoiseSchedule,
    cfg: &TrainConfig,
) -> Result<(ToyDenoiser, TrainReport)> {
    cfg.validate()?;
    if demos.len() < 100 {
        return Err(Error::InvalidConfig(format!("need at least 100 demonstrations, got {}", demos.len())));
    }
    let n_actions = demos[0].1.n_actions();
    if demos.iter().any(|(_, a)| a.n_actions() != n_actions) {
        return Err(Error::InvalidConfig("demonstrations disagree on action count".into()));
    }
    if schedule.steps() != schedule.model_steps_total() {
        return Err(Error::InvalidSchedule("train on the full schedule, not a respaced one".into()));
    }
    let features: Vec<Vec<f64>> = demos.iter().map(|(o, _)| observation_features(o, cfg.history_len)).collect();
    let nf = features[0].len();
    let mut mean = vec![0.0; nf];
    for f in &features {
        for (m, v) in mean.iter_mut().zip(f) {
            *m += v / features.len() as f64;
        }
    }
    let mut std = vec![0.0; nf];
    for f in &features {
        for ((s, v), m) in std.iter_mut().zip(f).zip(&mean) {
            *s += (v - m).powi(2) / features.len() as f64;
        }
    }
    for s in &mut std {
        *s = if *s > 1e-16 { s.sqrt() } else { 1.0 };
    }
    let normalizer = ActionNormalizer::fit(demos.iter().map(|(_, a)| a))?;
    let actions = demos.iter().map(|(_, a)| normalizer.to_model(a)).collect::<Result<Vec<_>>>()?;
    let a = n_actions * ACTION_DIM;
    let count = actions.len() as f64;
    let mut action_mean = vec![0.0; a];
    for x in &actions {
        for (m, v) in action_mean.iter_mut().zip(x.as_slice()) {
            *m += v / count;
        }
    }
    let mut action_std = vec![0.0; a];
    for x in &actions {
        for ((s, v), m) in action_std.iter_mut().zip(x.as_slice()).zip(&action_mean) {
            *s += (v - m).powi(2) / count;
        }
    }
    for s in &mut action_std {
        *s = s.sqrt().max(MIN_ACTION_STD);
    }
    let meta = ToyMeta {
        n_actions,
        history_len: cfg.history_len,
        embed_dim: cfg.embed_dim,
        hidden: cfg.hidden,
        schedule: *schedule.spec(),
        normalizer,
        feature_mean: mean,
        feature_std: std,
        action_mean,
        action_std,
        seed: cfg.seed,
    };
    let mut model = ToyDenoiser::init(meta, &mut rng::stream(cfg.seed, 1))?;
    let eval = draw_batch(&model, &actions, &features, schedule, 1024, &mut rng::stream(cfg.seed, 2));
    let initial_loss = batch_loss(&model, &eval);

    let shapes: Vec<(usize, usize)> = (0..3)
        .flat_map(|i| [(model.w[i].nrows(), model.w[i].ncols()), (model.b[i].len(), 1)])
        .collect();
    let mut adam = Adam::new(&shapes);
    let mut r = rng::stream(cfg.seed, 3);
    let mut trace = Vec::new();
    let dsilu = |z: f64| {
        let s = sigmoid(z);
        s * (1.0 + z * (1.0 - s))
    };
    for step in 0..cfg.steps {
        let batch = draw_batch(&model, &actions, &features, schedule, cfg.batch_size, &mut r);
        let [z1, h1, z2, h2, out] = model.forward(&batch.input);
        let diff = &out - &batch.target;
        let loss = diff.norm_squared() / diff.len() as f64;
        if !loss.is_finite() {
            return Err(Error::Diverged { step, loss });
        }
        if step % cfg.log_every == 0 || step + 1 == cfg.steps {
            trace.push((step, loss));
        }
        let d_out = diff * (2.0 / out.len() as f64);
        let g_w3 = &d_out * h2.transpose();
        let g_b3 = d_out.column_sum();
        let d_z2 = (model.w[2].transpose() * &d_out).zip_map(&z2, |d, z| d * dsilu(z));
        let g_w2 = &d_z2 * h1.transpose();
        let g_b2 = d_z2.column_sum();
        let d_z1 = (model.w[1].transpose() * &d_z2).zip_map(&z1, |d, z| d * dsilu(z));
        let g_w1 = &d_z1 * batch.input.transpose();
        let g_b1 = d_z1.column_sum();

        let progress = step as f64 / cfg.steps as f64;
        let decay = cfg.final_lr_fraction + (1.0 - cfg.final_lr_fraction) * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos());
        let lr = cfg.learning_rate * decay;
        let [w1, w2, w3] = &mut model.w;
        let [b1, b2, b3] = &mut model.b;
        adam.update(
            &mut [w1.as_mut_slice(), b1.as_mut_slice(), w2.as_mut_slice(), b2.as_mut_slice(), w3.as_mut_slice(), b3.as_mut_slice()],
            &[g_w1.as_slice(), g_b1.as_slice(), g_w2.as_slice(), g_b2.as_slice(), g_w3.as_slice(), g_b3.as_slice()],
            lr,
        );
    }
    let final_loss = batch_loss(&model, &eval);
    if !final_loss.is_finite() {
        return Err(Error::Diverged {
            step: cfg.steps,
            loss: final_loss,
        });
    }
    Ok((
        model,
        TrainReport {
            initial_loss,
            final_loss,
            trace,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::Denoiser;
    use crate::pointcloud::PointCloud;
    use nalgebra::Vector3;
    use std::sync::Arc;

    fn demos(n: usize) -> Vec<(Observation, ActionVector)> {
        let g = Arc::new(PointCloud::new(vec![Vector3::zeros(), Vector3::x()]).unwrap());
        (0..n)
            .map(|i| {
                let shift = 0.01 * (i % 7) as f64;
                let scene = Arc::new(PointCloud::new(vec![Vector3::new(shift, 0.0, 0.0), Vector3::new(shift, 1.0, 0.5)]).unwrap());
                let mut a = [0.0; 10];
                a[0] = 1.0;
                a[4] = 1.0;
                a[6] = shift;
                let obs = Observation::new(g.clone(), scene, vec![a], 0).unwrap();
                (obs, ActionVector::new(a.to_vec(), 1).unwrap())
            })
            .collect()
    }

    fn small() -> TrainConfig {
        TrainConfig {
            steps: 60,
            batch_size: 16,
            hidden: 16,
            ..Default::default()
        }
    }

    #[test]
    fn loss_decreases_and_runs_are_reproducible() {
        let s = ScheduleSpec::default().build().unwrap();
        let d = demos(100);
        let (a, ra) = train_toy_denoiser(&d, &s, &small()).unwrap();
        let (b, rb) = train_toy_denoiser(&d, &s, &small()).unwrap();
        assert!(ra.final_loss < ra.initial_loss);
        assert_eq!(a, b);
        assert_eq!(ra, rb);
    }

    #[test]
    fn save_load_round_trip_is_exact() {
        let s = ScheduleSpec::default().build().unwrap();
        let d = demos(100);
        let (m, _) = train_toy_denoiser(&d, &s, &small()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("w.adpw");
        m.save(&p).unwrap();
        let back = ToyDenoiser::load(&p).unwrap();
        assert_eq!(back, m);
        let x = ActionVector::new(vec![0.3; 10], 1).unwrap();
        assert_eq!(m.predict(&d[0].0, &x, 7).unwrap(), back.predict(&d[0].0, &x, 7).unwrap());
    }

    #[test]
    fn rejects_small_datasets_and_bad_steps() {
        let s = ScheduleSpec::default().build().unwrap();
        assert!(train_toy_denoiser(&demos(99), &s, &small()).is_err());
        let (m, _) = train_toy_denoiser(&demos(100), &s, &small()).unwrap();
        let d = demos(1);
        let x = ActionVector::zeros(1);
        assert!(m.predict(&d[0].0, &x, 0).is_err());
        assert!(m.predict(&d[0].0, &x, 101).is_err());
        assert!(m.predict(&d[0].0, &ActionVector::zeros(2), 5).is_err());
    }

    #[test]
    fn divergence_is_reported() {
        let s = ScheduleSpec::default().build().unwrap();
        let cfg = TrainConfig {
            learning_rate: 1e300,
            ..small()
        };
        match train_toy_denoiser(&demos(100), &s, &cfg) {
            Err(Error::Diverged { .. }) => {}
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn history_padding_repeats_oldest() {
        let d = demos(1);
        let f = observation_features(&d[0].0, 3);
        assert_eq!(f.len(), 9 + 30);
        assert_eq!(f[9..19], f[19..29]);
    }
}

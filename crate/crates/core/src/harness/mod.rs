//! Benchmark sweeps over guidance variants, step budgets and seeds.
//!
//! A sweep is split into cells keyed by `(variant, T', seed)`. Each cell runs
//! its episodes in parallel, and its result is written to disk as soon as it
//! completes, so an interrupted sweep resumes where it stopped. All outputs
//! are written in cell-key order and depend only on the spec and weights.

mod plot;
mod report;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diffusion::{forward_diffuse, Denoiser, NoiseSchedule, Observation};
use crate::error::{Error, Result};
use crate::guidance::{
    adp_sample_prepared, calibrate_grad_norm, prepare, read_trace_jsonl, total_variation, write_trace_jsonl, Eta, GuidanceConfig, GuidanceMode,
    InitMode, SampleTrace,
};
use crate::rng;
use crate::se3::{decode, encode, ActionVector};
use crate::taskbench::{expert_action, generate_instance, instance_seed, rollout, RolloutConfig, TaskFamily, TaskInstance};

pub use plot::{plot_curves, render, PlotKind};
pub use report::{report, time_ratio};

/// A named guidance configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variant {
    pub name: String,
    pub guidance: GuidanceConfig,
    /// Replace `eta` with a calibrated strength of this scale before running.
    #[serde(default)]
    pub calibrate_eta: Option<f64>,
}

impl Variant {
    pub fn new(name: &str, guidance: GuidanceConfig) -> Self {
        Self {
            name: name.to_string(),
            guidance,
            calibrate_eta: None,
        }
    }

    pub fn vanilla() -> Self {
        Self::new("vanilla", GuidanceConfig::vanilla())
    }

    /// Registration init, spherical guidance.
    pub fn full() -> Self {
        Self::new("full", GuidanceConfig::default())
    }

    pub fn without_initial_noise_constraint() -> Self {
        Self::new(
            "wo_inc",
            GuidanceConfig {
                init_mode: InitMode::RandomNoise,
                ..Default::default()
            },
        )
    }

    pub fn without_spherical_constraint() -> Self {
        Self {
            calibrate_eta: Some(0.1),
            ..Self::new(
                "wo_sgc",
                GuidanceConfig {
                    mode: GuidanceMode::GuidedTweedie,
                    ..Default::default()
                },
            )
        }
    }

    pub fn without_observation_guidance() -> Self {
        Self::new(
            "wo_og",
            GuidanceConfig {
                mode: GuidanceMode::Vanilla,
                ..Default::default()
            },
        )
    }

    /// Vanilla plus the full method and its three single-component ablations.
    pub fn ablation_set() -> Vec<Variant> {
        vec![
            Self::vanilla(),
            Self::full(),
            Self::without_initial_noise_constraint(),
            Self::without_spherical_constraint(),
            Self::without_observation_guidance(),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentSpec {
    pub family: TaskFamily,
    pub difficulty: u32,
    pub episodes: usize,
    pub variants: Vec<Variant>,
    /// Respaced step counts `T'`.
    pub step_counts: Vec<usize>,
    pub seeds: Vec<u64>,
    pub out_dir: Option<PathBuf>,
    pub n_actions: usize,
    pub rollout: RolloutConfig,
    /// Measure wall time. Off, every time is reported as zero and outputs
    /// are byte-stable.
    pub record_timing: bool,
    pub write_traces: bool,
    /// Instances used to calibrate `eta`; drawn from their own seed stream.
    pub warmup_episodes: usize,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            family: TaskFamily::Reach,
            difficulty: 0,
            episodes: 200,
            variants: vec![Variant::vanilla(), Variant::full()],
            step_counts: vec![20],
            seeds: vec![0, 1, 2],
            out_dir: None,
            n_actions: 4,
            rollout: RolloutConfig::default(),
            record_timing: true,
            write_traces: true,
            warmup_episodes: 8,
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self, schedule: &NoiseSchedule) -> Result<()> {
        if self.variants.is_empty() || self.seeds.is_empty() || self.step_counts.is_empty() {
            return Err(Error::InvalidConfig("need at least one variant, seed and step count".into()));
        }
        if self.episodes == 0 || self.n_actions == 0 {
            return Err(Error::InvalidConfig("episodes and n_actions must be positive".into()));
        }
        let mut names: Vec<&str> = self.variants.iter().map(|v| v.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidConfig("variant names must be unique".into()));
        }
        if names.iter().any(|n| n.is_empty() || !n.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')) {
            return Err(Error::InvalidConfig("variant names must be non-empty [A-Za-z0-9_-]".into()));
        }
        for &tp in &self.step_counts {
            let s = schedule.respace(tp)?;
            for v in &self.variants {
                v.guidance.validate(&s)?;
            }
        }
        Ok(())
    }

    fn hash(&self) -> String {
        let mut clean = self.clone();
        clean.out_dir = None;
        let json = serde_json::to_vec(&clean).expect("plain data");
        hex::encode(&Sha256::digest(&json)[..8])
    }
}

/// Per-episode measurements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub episode: usize,
    pub instance_seed: u64,
    pub success: bool,
    pub pos_err: f64,
    pub rot_err_deg: f64,
    pub plans: usize,
    pub keyposes: usize,
    /// Mean denoiser evaluations per plan.
    pub nds: f64,
    pub time_s: f64,
    pub fallback: bool,
    /// Per-step MSE of the first plan against the expert plan.
    pub mse_curve: Vec<f64>,
    pub backtracking_tv: f64,
    pub delta1: Option<f64>,
    pub delta2: Option<f64>,
}

/// Aggregates for one `(variant, T', seed)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellMetrics {
    pub variant: String,
    pub t_prime: usize,
    pub seed: u64,
    pub config_hash: String,
    pub episodes: usize,
    pub success_rate: f64,
    pub mean_nds: f64,
    pub median_time_s: f64,
    pub mean_time_s: f64,
    pub backtracking_tv: f64,
    pub delta1_median: Option<f64>,
    pub delta2_median: Option<f64>,
    /// Mean first-plan MSE curve, episodes aligned at their final step.
    pub mse_curve: Vec<f64>,
    /// `(x, z, r1, r2)` of the first block over the first episode's first plan.
    pub components: Vec<[f64; 4]>,
    pub per_episode: Vec<EpisodeMetrics>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsTable {
    pub family: Option<TaskFamily>,
    pub seeds: Vec<u64>,
    pub cells: Vec<CellMetrics>,
}

impl MetricsTable {
    pub fn cell(&self, variant: &str, t_prime: usize, seed: u64) -> Option<&CellMetrics> {
        self.cells.iter().find(|c| c.variant == variant && c.t_prime == t_prime && c.seed == seed)
    }

    pub fn cells_for(&self, variant: &str, t_prime: usize) -> Vec<&CellMetrics> {
        self.cells.iter().filter(|c| c.variant == variant && c.t_prime == t_prime).collect()
    }

    /// Variant names in sorted order.
    pub fn variants(&self) -> Vec<String> {
        let mut v: Vec<String> = self.cells.iter().map(|c| c.variant.clone()).collect();
        v.sort();
        v.dedup();
        v
    }

    pub fn step_counts(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.cells.iter().map(|c| c.t_prime).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Success rate averaged over seeds.
    pub fn mean_success(&self, variant: &str, t_prime: usize) -> Option<f64> {
        let c = self.cells_for(variant, t_prime);
        (!c.is_empty()).then(|| c.iter().map(|c| c.success_rate).sum::<f64>() / c.len() as f64)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "variant,T_prime,seed,episodes,success_rate,mean_nds,median_time_s,backtracking_tv,delta1_median,delta2_median,config_hash\n",
        );
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        for c in &self.cells {
            out.push_str(&format!(
                "{},{},{},{},{:.6},{:.6},{:.6},{:.6},{},{},{}\n",
                c.variant,
                c.t_prime,
                c.seed,
                c.episodes,
                c.success_rate,
                c.mean_nds,
                c.median_time_s,
                c.backtracking_tv,
                opt(c.delta1_median),
                opt(c.delta2_median),
                c.config_hash
            ));
        }
        out
    }
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

/// Expert plan from the observation's current pose, as the ground truth of
/// that plan.
pub fn expert_plan(instance: &TaskInstance, obs: &Observation, n_actions: usize) -> ActionVector {
    let mut cur = decode(obs.history.last().expect("non-empty history")).action;
    let mut v = Vec::with_capacity(n_actions * crate::se3::ACTION_DIM);
    for _ in 0..n_actions {
        cur = expert_action(instance, &cur);
        v.extend_from_slice(&encode(&cur).expect("valid keypose"));
    }
    ActionVector::new(v, n_actions).expect("sized")
}

struct EpisodeRun {
    metrics: EpisodeMetrics,
    traces: Vec<SampleTrace>,
}

#[allow(clippy::too_many_arguments)]
fn run_episode<D: Denoiser + ?Sized>(
    spec: &ExperimentSpec,
    cfg: &GuidanceConfig,
    denoiser: &D,
    schedule: &NoiseSchedule,
    t_prime: usize,
    seed: u64,
    episode: usize,
) -> Result<EpisodeRun> {
    let iseed = instance_seed(seed, episode as u64);
    let instance = generate_instance(spec.family, spec.difficulty, iseed);
    // shared by all variants so paired comparisons see the same noise
    let mut r = rng::substream(seed, &[0x726f_6c6c, t_prime as u64, episode as u64]);
    let clock = Instant::now();
    let first_obs = Observation::new(instance.gripper.clone(), instance.scene.clone(), vec![encode(&instance.start())?], instance.family.id())?;
    let prepared = prepare(&first_obs, cfg)?;
    let mut traces = Vec::new();
    let mut truths = Vec::new();
    let outcome = rollout(&instance, &spec.rollout, |obs, _| {
        let (x, tr) = adp_sample_prepared(denoiser, obs, &prepared, schedule, spec.n_actions, cfg, &mut r)?;
        truths.push(expert_plan(&instance, obs, spec.n_actions));
        traces.push(tr);
        Ok(x)
    })?;
    let elapsed = clock.elapsed().as_secs_f64();
    let first = &traces[0];
    // traces live in model coordinates
    let truth = &denoiser.normalizer().to_model(&truths[0])?;
    let mse_curve = first.mse_per_step(truth.as_slice())?;
    let (delta1, delta2) = match (&first.init_noise, first.proposal.is_some()) {
        (Some(noise), true) => {
            let a_m = ActionVector::new(first.initial.clone(), spec.n_actions)?;
            let a_hat = forward_diffuse(truth, first.start_step, schedule, noise)?;
            (Some(a_m.distance(truth)), Some(a_hat.distance(truth)))
        }
        (None, true) => (Some(ActionVector::new(first.initial.clone(), spec.n_actions)?.distance(truth)), None),
        _ => (None, None),
    };
    let metrics = EpisodeMetrics {
        episode,
        instance_seed: iseed,
        success: outcome.success,
        pos_err: outcome.evaluation.pos_err,
        rot_err_deg: outcome.evaluation.rot_err_deg,
        plans: outcome.plans,
        keyposes: outcome.keyposes.len(),
        nds: traces.iter().map(|t| t.nfe() as f64).sum::<f64>() / traces.len() as f64,
        time_s: if spec.record_timing { elapsed } else { 0.0 },
        fallback: traces.iter().any(|t| t.fallback),
        backtracking_tv: total_variation(&mse_curve),
        mse_curve,
        delta1,
        delta2,
    };
    let traces = if spec.record_timing {
        traces
    } else {
        traces.iter().map(SampleTrace::without_timing).collect()
    };
    Ok(EpisodeRun { metrics, traces })
}

fn aggregate(variant: &Variant, cfg: &GuidanceConfig, t_prime: usize, seed: u64, runs: &[EpisodeRun]) -> CellMetrics {
    let eps: Vec<EpisodeMetrics> = runs.iter().map(|r| r.metrics.clone()).collect();
    let n = eps.len() as f64;
    let longest = eps.iter().map(|e| e.mse_curve.len()).max().unwrap_or(0);
    let mut sum = vec![0.0; longest];
    let mut count = vec![0usize; longest];
    for e in &eps {
        let off = longest - e.mse_curve.len();
        for (i, v) in e.mse_curve.iter().enumerate() {
            sum[off + i] += v;
            count[off + i] += 1;
        }
    }
    let mse_curve = sum.iter().zip(&count).map(|(s, &c)| s / c.max(1) as f64).collect();
    let components = runs
        .first()
        .map(|r| {
            r.traces[0]
                .steps
                .iter()
                .map(|s| [s.x_next[6], s.x_next[8], s.x_next[0], s.x_next[1]])
                .collect()
        })
        .unwrap_or_default();
    CellMetrics {
        variant: variant.name.clone(),
        t_prime,
        seed,
        config_hash: cfg.config_hash(),
        episodes: eps.len(),
        success_rate: eps.iter().filter(|e| e.success).count() as f64 / n,
        mean_nds: eps.iter().map(|e| e.nds).sum::<f64>() / n,
        median_time_s: median(eps.iter().map(|e| e.time_s).collect()).unwrap_or(0.0),
        mean_time_s: eps.iter().map(|e| e.time_s).sum::<f64>() / n,
        backtracking_tv: eps.iter().map(|e| e.backtracking_tv).sum::<f64>() / n,
        delta1_median: median(eps.iter().filter_map(|e| e.delta1).collect()),
        delta2_median: median(eps.iter().filter_map(|e| e.delta2).collect()),
        mse_curve,
        components,
        per_episode: eps,
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct Manifest {
    spec_hash: String,
    /// Cell key → config hash of the completed cell.
    completed: BTreeMap<String, String>,
}

fn cell_key(variant: &str, t_prime: usize, seed: u64) -> String {
    format!("{variant}__T{t_prime:04}__s{seed}")
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn load_cell(path: &Path, config_hash: &str) -> Option<CellMetrics> {
    let bytes = std::fs::read(path).ok()?;
    let cell: CellMetrics = serde_json::from_slice(&bytes).ok()?;
    (cell.config_hash == config_hash).then_some(cell)
}

fn traces_intact(dir: &Path, episodes: usize) -> bool {
    (0..episodes).all(|e| read_trace_jsonl(&dir.join(format!("episode_{e:05}.jsonl"))).is_ok_and(|g| !g.is_empty()))
}

/// Resolve calibrated strengths for the variants that ask for one.
pub fn resolve_variants<D: Denoiser + ?Sized>(spec: &ExperimentSpec, denoiser: &D, schedule: &NoiseSchedule) -> Result<Vec<(Variant, GuidanceConfig)>> {
    spec.variants
        .iter()
        .map(|v| {
            let mut cfg = v.guidance.clone();
            if let Some(scale) = v.calibrate_eta {
                let warmup: Result<Vec<Observation>> = (0..spec.warmup_episodes.max(1))
                    .map(|i| {
                        let inst = generate_instance(spec.family, spec.difficulty, instance_seed(0x7761_726d, i as u64));
                        Observation::new(inst.gripper.clone(), inst.scene.clone(), vec![encode(&inst.start())?], inst.family.id())
                    })
                    .collect();
                let g = calibrate_grad_norm(denoiser, &warmup?, schedule, spec.n_actions, cfg.mode, 0x7761_726d)?;
                cfg.eta = Eta::Calibrated { scale, mean_grad_norm: g };
            }
            Ok((v.clone(), cfg))
        })
        .collect()
}

/// Run every cell of `spec`. With an output directory, completed cells are
/// reused, and CSV, cell JSON and per-episode traces are written.
pub fn run_experiment<D: Denoiser + ?Sized>(spec: &ExperimentSpec, denoiser: &D, schedule: &NoiseSchedule) -> Result<MetricsTable> {
    spec.validate(schedule)?;
    let resolved = resolve_variants(spec, denoiser, schedule)?;
    let spec_hash = spec.hash();
    let mut manifest = Manifest {
        spec_hash: spec_hash.clone(),
        ..Default::default()
    };
    if let Some(dir) = &spec.out_dir {
        std::fs::create_dir_all(dir.join("cells")).map_err(|e| Error::io(dir, e))?;
        if let Ok(bytes) = std::fs::read(dir.join("manifest.json")) {
            if let Ok(m) = serde_json::from_slice::<Manifest>(&bytes) {
                if m.spec_hash == spec_hash {
                    manifest = m;
                }
            }
        }
    }
    let mut keys: Vec<(String, usize, u64, usize)> = Vec::new();
    for (vi, (v, _)) in resolved.iter().enumerate() {
        for &tp in &spec.step_counts {
            for &seed in &spec.seeds {
                keys.push((v.name.clone(), tp, seed, vi));
            }
        }
    }
    keys.sort();
    let mut cells = Vec::with_capacity(keys.len());
    for (name, tp, seed, vi) in keys {
        let (variant, cfg) = &resolved[vi];
        let key = cell_key(&name, tp, seed);
        let hash = cfg.config_hash();
        let cell_path = spec.out_dir.as_ref().map(|d| d.join("cells").join(format!("{key}.json")));
        if let (Some(p), Some(h)) = (&cell_path, manifest.completed.get(&key)) {
            if *h == hash {
                if let Some(c) = load_cell(p, &hash) {
                    let tdir = spec.out_dir.as_ref().expect("cell path implies out dir").join("traces").join(&key);
                    if !spec.write_traces || traces_intact(&tdir, spec.episodes) {
                        cells.push(c);
                        continue;
                    }
                }
            }
        }
        let sched = schedule.respace(tp)?;
        let runs: Result<Vec<EpisodeRun>> = (0..spec.episodes)
            .into_par_iter()
            .map(|e| run_episode(spec, cfg, denoiser, &sched, tp, seed, e))
            .collect();
        let runs = runs?;
        let cell = aggregate(variant, cfg, tp, seed, &runs);
        if let (Some(dir), Some(p)) = (&spec.out_dir, &cell_path) {
            if spec.write_traces {
                let tdir = dir.join("traces").join(&key);
                std::fs::create_dir_all(&tdir).map_err(|e| Error::io(&tdir, e))?;
                for r in &runs {
                    write_trace_jsonl(&tdir.join(format!("episode_{:05}.jsonl", r.metrics.episode)), &r.traces)?;
                }
            }
            write_atomic(p, &serde_json::to_vec(&cell).expect("plain data"))?;
            manifest.completed.insert(key, hash);
            write_atomic(&dir.join("manifest.json"), &serde_json::to_vec_pretty(&manifest).expect("plain data"))?;
        }
        cells.push(cell);
    }
    let table = MetricsTable {
        family: Some(spec.family),
        seeds: spec.seeds.clone(),
        cells,
    };
    if let Some(dir) = &spec.out_dir {
        write_atomic(&dir.join("metrics.csv"), table.to_csv().as_bytes())?;
        write_atomic(&dir.join("metrics.json"), &serde_json::to_vec(&table).expect("plain data"))?;
    }
    Ok(table)
}

pub fn read_metrics(path: &Path) -> Result<MetricsTable> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::format(path, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_handles_parity() {
        assert_eq!(median(vec![]), None);
        assert_eq!(median(vec![2.0, 1.0]), Some(1.5));
    }

    #[test]
    fn spec_validation() {
        let s = crate::diffusion::ScheduleSpec::default().build().unwrap();
        let mut spec = ExperimentSpec::default();
        spec.validate(&s).unwrap();
        spec.variants.push(Variant::vanilla());
        assert!(spec.validate(&s).is_err());
        spec.variants.pop();
        spec.seeds.clear();
        assert!(spec.validate(&s).is_err());
        let odd = ExperimentSpec {
            variants: vec![Variant::new("a b", GuidanceConfig::vanilla())],
            ..Default::default()
        };
        assert!(odd.validate(&s).is_err());
    }

    #[test]
    fn csv_header_and_row() {
        let t = MetricsTable {
            family: None,
            seeds: vec![0],
            cells: vec![CellMetrics {
                variant: "v".into(),
                t_prime: 20,
                seed: 0,
                config_hash: "abc".into(),
                episodes: 2,
                success_rate: 0.5,
                mean_nds: 20.0,
                median_time_s: 0.0,
                mean_time_s: 0.0,
                backtracking_tv: 1.25,
                delta1_median: None,
                delta2_median: Some(0.5),
                mse_curve: vec![],
                components: vec![],
                per_episode: vec![],
            }],
        };
        let csv = t.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[1], "v,20,0,2,0.500000,20.000000,0.000000,1.250000,,0.500000,abc");
    }
}

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use adp_core::diffusion::dataset::{read_dataset, to_demos, write_dataset};
use adp_core::diffusion::{train_toy_denoiser, ScheduleSpec, ToyDenoiser, TrainConfig};
use adp_core::error::Error;
use adp_core::harness::{plot_curves, read_metrics, report, run_experiment, ExperimentSpec, Variant};
use adp_core::pointcloud::read_ply;
use adp_core::registration::{fgr_register, icp_refine, FgrConfig};
use adp_core::taskbench::{make_dataset, TaskFamily};

#[derive(Parser)]
#[command(name = "adp", version, about = "Observation-guided diffusion sampling: data, training and benchmarks")]
struct Cli {
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// TOML file with `[data]`, `[train]`, `[schedule]` and `[bench]` tables.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate expert demonstrations.
    GenData(GenData),
    /// Train the toy denoiser on a dataset.
    Train(Train),
    /// Sweep variants, step counts and seeds.
    Bench(Bench),
    /// Render SVG charts from a metrics file.
    Plot(FromMetrics),
    /// Markdown summary of a metrics file.
    Report(FromMetrics),
    /// Register two PLY clouds with FGR and optional ICP refinement.
    Register(Register),
}

#[derive(Args)]
struct GenData {
    #[arg(long)]
    family: Option<TaskFamily>,
    #[arg(long)]
    difficulty: Option<u32>,
    #[arg(long)]
    episodes: Option<usize>,
}

#[derive(Args)]
struct Train {
    /// Dataset directory written by `gen-data`.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
}

#[derive(Args)]
struct Bench {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    family: Option<TaskFamily>,
    #[arg(long)]
    difficulty: Option<u32>,
    #[arg(long)]
    episodes: Option<usize>,
    /// Comma-separated step counts.
    #[arg(long, value_delimiter = ',')]
    steps: Option<Vec<usize>>,
    /// Comma-separated seeds; overrides `--seed`.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Comma-separated subset of vanilla, full, wo_inc, wo_sgc, wo_og.
    #[arg(long, value_delimiter = ',')]
    variants: Option<Vec<String>>,
    /// Report zero time so outputs are byte-stable.
    #[arg(long)]
    no_timing: bool,
}

#[derive(Args)]
struct FromMetrics {
    /// `metrics.json` written by `bench`.
    #[arg(long)]
    metrics: PathBuf,
}

#[derive(Args)]
struct Register {
    #[arg(long)]
    source: PathBuf,
    #[arg(long)]
    target: PathBuf,
    /// ICP iterations after FGR; 0 disables refinement.
    #[arg(long, default_value_t = 30)]
    icp: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
struct DataSection {
    family: TaskFamily,
    difficulty: u32,
    episodes: usize,
    n_actions: usize,
    history_len: usize,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            family: TaskFamily::Reach,
            difficulty: 0,
            episodes: 500,
            n_actions: 4,
            history_len: 2,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
struct FileConfig {
    seed: Option<u64>,
    out: Option<PathBuf>,
    data: DataSection,
    train: TrainConfig,
    schedule: ScheduleSpec,
    bench: ExperimentSpec,
    fgr: FgrConfig,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Run(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Run(Error::InvalidConfig(_)) | Failure::Run(Error::InvalidSchedule(_)) => 1,
            Failure::Run(Error::Invariant(_) | Error::Diverged { .. } | Error::AlphaBarUnderflow { .. } | Error::Denoiser(_)) => 3,
            Failure::Run(_) => 2,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(m) => f.write_str(m),
            Failure::Run(e) => write!(f, "{e}"),
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<FileConfig, Failure> {
    let Some(p) = path else { return Ok(FileConfig::default()) };
    let text = std::fs::read_to_string(p).map_err(|e| Failure::Run(Error::Io { path: p.to_path_buf(), source: e }))?;
    toml::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).expect("plain data");
    std::fs::write(path, text + "\n").map_err(|e| Failure::Run(Error::Io { path: path.to_path_buf(), source: e }))
}

fn variant_by_name(name: &str) -> Result<Variant, Failure> {
    Variant::ablation_set()
        .into_iter()
        .find(|v| v.name == name)
        .ok_or_else(|| Failure::Usage(format!("unknown variant '{name}'")))
}

fn run(cli: Cli) -> Result<(), Failure> {
    let file = load_config(cli.config.as_deref())?;
    let seed = cli.seed.or(file.seed).unwrap_or(0);
    let out = cli.out.clone().or(file.out.clone()).unwrap_or_else(|| PathBuf::from("adp-out"));
    if let Some(j) = cli.jobs {
        if j == 0 {
            return Err(Failure::Usage("--jobs must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .map_err(|e| Failure::Usage(e.to_string()))?;
    }
    let mkdir = |p: &Path| std::fs::create_dir_all(p).map_err(|e| Failure::Run(Error::Io { path: p.to_path_buf(), source: e }));
    match cli.cmd {
        Cmd::GenData(a) => {
            let d = DataSection {
                family: a.family.unwrap_or(file.data.family),
                difficulty: a.difficulty.unwrap_or(file.data.difficulty),
                episodes: a.episodes.unwrap_or(file.data.episodes),
                ..file.data
            };
            let (manifest, episodes) = make_dataset(d.family, d.difficulty, d.episodes, seed, d.n_actions, d.history_len)?;
            write_dataset(&out, &manifest, &episodes)?;
            eprintln!("wrote {} episodes to {}", episodes.len(), out.display());
        }
        Cmd::Train(a) => {
            let (manifest, episodes) = read_dataset(&a.data)?;
            let demos = to_demos(&episodes, manifest.n_actions)?;
            let cfg = TrainConfig {
                steps: a.steps.unwrap_or(file.train.steps),
                learning_rate: a.lr.unwrap_or(file.train.learning_rate),
                batch_size: a.batch_size.unwrap_or(file.train.batch_size),
                history_len: manifest.history_len,
                seed,
                ..file.train
            };
            let schedule = file.schedule.build()?;
            let (model, rep) = train_toy_denoiser(&demos, &schedule, &cfg)?;
            mkdir(&out)?;
            model.save(&out.join("model.adpw"))?;
            write_json(&out.join("train_report.json"), &rep)?;
            eprintln!("loss {:.5} -> {:.5}; saved {}", rep.initial_loss, rep.final_loss, out.join("model.adpw").display());
        }
        Cmd::Bench(a) => {
            let model = ToyDenoiser::load(&a.model)?;
            let schedule = model.meta().schedule.build()?;
            let mut spec = file.bench.clone();
            spec.family = a.family.unwrap_or(spec.family);
            spec.difficulty = a.difficulty.unwrap_or(spec.difficulty);
            spec.episodes = a.episodes.unwrap_or(spec.episodes);
            spec.n_actions = model.meta().n_actions;
            spec.rollout.history_len = model.meta().history_len;
            if let Some(s) = a.steps {
                spec.step_counts = s;
            }
            if let Some(s) = a.seeds {
                spec.seeds = s;
            } else if cli.seed.is_some() {
                spec.seeds = vec![seed];
            }
            if let Some(names) = a.variants {
                spec.variants = names.iter().map(|n| variant_by_name(n)).collect::<Result<_, _>>()?;
            }
            if a.no_timing {
                spec.record_timing = false;
            }
            spec.out_dir = Some(out.clone());
            let table = run_experiment(&spec, &model, &schedule)?;
            print!("{}", table.to_csv());
        }
        Cmd::Plot(a) => {
            let table = read_metrics(&a.metrics)?;
            if table.cells.is_empty() {
                return Err(Failure::Run(Error::Format {
                    path: a.metrics,
                    msg: "no cells to plot".into(),
                }));
            }
            for p in plot_curves(&table, &out)? {
                eprintln!("wrote {}", p.display());
            }
        }
        Cmd::Report(a) => {
            let table = read_metrics(&a.metrics)?;
            print!("{}", report(&table));
        }
        Cmd::Register(a) => {
            let src = read_ply(&a.source)?;
            let dst = read_ply(&a.target)?;
            let reg = fgr_register(&src, &dst, &file.fgr)?;
            let pose = if a.icp > 0 {
                icp_refine(&src, &dst, &reg.pose, a.icp, 1e-8)?.pose
            } else {
                reg.pose
            };
            let summary = serde_json::json!({
                "fitness": reg.fitness,
                "inlier_rmse": reg.inlier_rmse,
                "iterations": reg.iterations,
                "correspondences": reg.correspondences,
                "matrix": pose.to_matrix4(),
            });
            println!("{}", serde_json::to_string_pretty(&summary).expect("plain data"));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}

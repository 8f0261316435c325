use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{GuidanceMode, InitMode};
use crate::error::{Error, Result};

/// One executed reverse step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    pub model_t: usize,
    pub x_t: Vec<f64>,
    pub eps_hat: Vec<f64>,
    /// Plain DDPM output before correction.
    pub x_tilde: Vec<f64>,
    pub x0_hat: Option<Vec<f64>>,
    pub correction: Vec<f64>,
    pub correction_norm: f64,
    pub grad_norm: Option<f64>,
    pub skipped: bool,
    pub degenerate: bool,
    /// Mean Chamfer value over blocks at the gradient source.
    pub chamfer: Option<f64>,
    pub x_next: Vec<f64>,
}

/// Per-sample record. All states are in the denoiser's coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleTrace {
    pub mode: GuidanceMode,
    pub init_mode: InitMode,
    pub start_step: usize,
    pub fallback: bool,
    pub fgr_fitness: Option<f64>,
    pub initial: Vec<f64>,
    /// Clean registration proposal behind `initial`, if any.
    pub proposal: Option<Vec<f64>>,
    /// Noise that diffused the proposal to the start step.
    pub init_noise: Option<Vec<f64>>,
    pub steps: Vec<StepRecord>,
    pub final_x: Vec<f64>,
    pub wall_time_s: f64,
}

impl SampleTrace {
    pub(crate) fn new(mode: GuidanceMode, init_mode: InitMode) -> Self {
        Self {
            mode,
            init_mode,
            start_step: 0,
            fallback: false,
            fgr_fitness: None,
            initial: Vec::new(),
            proposal: None,
            init_noise: None,
            steps: Vec::new(),
            final_x: Vec::new(),
            wall_time_s: 0.0,
        }
    }

    /// Denoiser evaluations, one per executed step.
    pub fn nfe(&self) -> usize {
        self.steps.len()
    }

    /// Mean squared error of each step's output against `truth`.
    pub fn mse_per_step(&self, truth: &[f64]) -> Result<Vec<f64>> {
        self.steps
            .iter()
            .map(|s| {
                if s.x_next.len() != truth.len() {
                    return Err(Error::LengthMismatch {
                        expected: s.x_next.len(),
                        got: truth.len(),
                    });
                }
                Ok(s.x_next.iter().zip(truth).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / truth.len() as f64)
            })
            .collect()
    }

    /// Same trace with the wall time zeroed, for bitwise comparisons.
    pub fn without_timing(&self) -> Self {
        Self {
            wall_time_s: 0.0,
            ..self.clone()
        }
    }
}

/// Total variation `Σ |c_{i+1} − c_i|` of a curve.
pub fn total_variation(curve: &[f64]) -> f64 {
    curve.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
}

#[derive(Serialize, Deserialize)]
struct Line<'a> {
    action: usize,
    #[serde(flatten)]
    step: std::borrow::Cow<'a, StepRecord>,
}

/// JSON lines, one per step record, tagged with the index of the action
/// they belong to within a rollout.
pub fn trace_to_jsonl(traces: &[SampleTrace]) -> String {
    let mut out = String::new();
    for (i, tr) in traces.iter().enumerate() {
        for s in &tr.steps {
            let line = Line {
                action: i,
                step: std::borrow::Cow::Borrowed(s),
            };
            out.push_str(&serde_json::to_string(&line).expect("plain data"));
            out.push('\n');
        }
    }
    out
}

pub fn write_trace_jsonl(path: &Path, traces: &[SampleTrace]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    f.write_all(trace_to_jsonl(traces).as_bytes()).map_err(|e| Error::io(path, e))?;
    f.flush().map_err(|e| Error::io(path, e))
}

/// Step records grouped by action index.
pub fn read_trace_jsonl(path: &Path) -> Result<Vec<Vec<StepRecord>>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut groups: Vec<Vec<StepRecord>> = Vec::new();
    for (n, line) in std::io::BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: Line<'static> = serde_json::from_str(&line).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            msg: format!("line {}: {e}", n + 1),
        })?;
        if parsed.action > groups.len() {
            return Err(Error::Format {
                path: path.to_path_buf(),
                msg: format!("line {}: action index {} out of order", n + 1, parsed.action),
            });
        }
        if parsed.action == groups.len() {
            groups.push(Vec::new());
        }
        groups[parsed.action].push(parsed.step.into_owned());
    }
    Ok(groups)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(t: usize, x: f64) -> StepRecord {
        StepRecord {
            t,
            model_t: t,
            x_t: vec![x; 2],
            eps_hat: vec![0.1; 2],
            x_tilde: vec![x; 2],
            x0_hat: None,
            correction: vec![0.0; 2],
            correction_norm: 0.0,
            grad_norm: None,
            skipped: true,
            degenerate: false,
            chamfer: Some(0.25),
            x_next: vec![x; 2],
        }
    }

    #[test]
    fn mse_and_variation() {
        let mut tr = SampleTrace::new(GuidanceMode::Vanilla, InitMode::RandomNoise);
        tr.steps = vec![rec(3, 2.0), rec(2, 0.0), rec(1, 1.0)];
        let c = tr.mse_per_step(&[0.0, 0.0]).unwrap();
        assert_eq!(c, vec![4.0, 0.0, 1.0]);
        assert_eq!(total_variation(&c), 5.0);
        assert!(tr.mse_per_step(&[0.0]).is_err());
    }

    #[test]
    fn jsonl_round_trip() {
        let mut a = SampleTrace::new(GuidanceMode::GuidedSpherical, InitMode::FgrDirect);
        a.steps = vec![rec(2, 0.5), rec(1, 1.0 / 3.0)];
        let mut b = a.clone();
        b.steps.truncate(1);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.jsonl");
        write_trace_jsonl(&p, &[a.clone(), b.clone()]).unwrap();
        let back = read_trace_jsonl(&p).unwrap();
        assert_eq!(back, vec![a.steps, b.steps]);
    }
}

//! Demonstration datasets on disk.
//!
//! ```text
//! <dir>/manifest.json
//! <dir>/episodes/episode_00000/{gripper.ply, scene.ply, actions.json}
//! ```

use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::Observation;
use crate::error::{Error, Result};
use crate::pointcloud::{read_ply, write_ply, PlyFormat, PointCloud};
use crate::se3::{ActionVector, ACTION_DIM};

pub const DATASET_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub family: String,
    pub seed: u64,
    pub n_actions: usize,
    pub history_len: usize,
    pub episodes: Vec<String>,
    /// Generator settings, kept for provenance.
    #[serde(default)]
    pub generator: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub history: Vec<[f64; ACTION_DIM]>,
    pub action: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub gripper: Arc<PointCloud>,
    pub scene: Arc<PointCloud>,
    pub task_id: u32,
    pub seed: u64,
    /// Encoded goal action.
    pub goal: [f64; ACTION_DIM],
    pub steps: Vec<StepRecord>,
}

#[derive(Serialize, Deserialize)]
struct ActionsFile {
    task_id: u32,
    seed: u64,
    goal: [f64; ACTION_DIM],
    steps: Vec<StepRecord>,
}

pub fn episode_name(i: usize) -> String {
    format!("episode_{i:05}")
}

pub fn write_dataset(dir: &Path, manifest: &DatasetManifest, episodes: &[EpisodeRecord]) -> Result<()> {
    if manifest.episodes.len() != episodes.len() {
        return Err(Error::LengthMismatch {
            expected: manifest.episodes.len(),
            got: episodes.len(),
        });
    }
    let root = dir.join("episodes");
    fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
    for (name, ep) in manifest.episodes.iter().zip(episodes) {
        let d = root.join(name);
        fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
        write_ply(&d.join("gripper.ply"), &ep.gripper, PlyFormat::BinaryLittleEndian)?;
        write_ply(&d.join("scene.ply"), &ep.scene, PlyFormat::BinaryLittleEndian)?;
        let actions = ActionsFile {
            task_id: ep.task_id,
            seed: ep.seed,
            goal: ep.goal,
            steps: ep.steps.clone(),
        };
        let p = d.join("actions.json");
        fs::write(&p, serde_json::to_vec_pretty(&actions).expect("plain data")).map_err(|e| Error::io(&p, e))?;
    }
    let p = dir.join("manifest.json");
    fs::write(&p, serde_json::to_vec_pretty(manifest).expect("plain data")).map_err(|e| Error::io(&p, e))
}

pub fn read_manifest(dir: &Path) -> Result<DatasetManifest> {
    let p = dir.join("manifest.json");
    let bytes = fs::read(&p).map_err(|e| Error::io(&p, e))?;
    let m: DatasetManifest = serde_json::from_slice(&bytes).map_err(|e| Error::format(&p, e.to_string()))?;
    if m.format_version != DATASET_VERSION {
        return Err(Error::format(&p, format!("unsupported dataset version {}", m.format_version)));
    }
    Ok(m)
}

pub fn read_dataset(dir: &Path) -> Result<(DatasetManifest, Vec<EpisodeRecord>)> {
    let m = read_manifest(dir)?;
    let mut out = Vec::with_capacity(m.episodes.len());
    for name in &m.episodes {
        let d = dir.join("episodes").join(name);
        let gripper = Arc::new(read_ply(&d.join("gripper.ply"))?);
        let scene = Arc::new(read_ply(&d.join("scene.ply"))?);
        let p = d.join("actions.json");
        let bytes = fs::read(&p).map_err(|e| Error::io(&p, e))?;
        let a: ActionsFile = serde_json::from_slice(&bytes).map_err(|e| Error::format(&p, e.to_string()))?;
        for s in &a.steps {
            if s.action.len() != m.n_actions * ACTION_DIM || s.history.is_empty() {
                return Err(Error::format(&p, "step record does not match manifest shape"));
            }
        }
        out.push(EpisodeRecord {
            gripper,
            scene,
            task_id: a.task_id,
            seed: a.seed,
            goal: a.goal,
            steps: a.steps,
        });
    }
    Ok((m, out))
}

/// Flatten episodes into `(observation, action)` training pairs.
pub fn to_demos(episodes: &[EpisodeRecord], n_actions: usize) -> Result<Vec<(Observation, ActionVector)>> {
    let mut out = Vec::new();
    for ep in episodes {
        for s in &ep.steps {
            let obs = Observation::new(ep.gripper.clone(), ep.scene.clone(), s.history.clone(), ep.task_id)?;
            out.push((obs, ActionVector::new(s.action.clone(), n_actions)?));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    #[test]
    fn round_trip() {
        let c = Arc::new(PointCloud::new(vec![Vector3::new(0.1, 0.2, 0.3), Vector3::new(-1.0, 0.5, 2.0)]).unwrap());
        let ep = EpisodeRecord {
            gripper: c.clone(),
            scene: c,
            task_id: 2,
            seed: 99,
            goal: [0.5; ACTION_DIM],
            steps: vec![StepRecord {
                history: vec![[0.25; ACTION_DIM]],
                action: vec![0.125; ACTION_DIM],
            }],
        };
        let m = DatasetManifest {
            format_version: DATASET_VERSION,
            family: "reach".into(),
            seed: 1,
            n_actions: 1,
            history_len: 1,
            episodes: vec![episode_name(0)],
            generator: serde_json::Value::Null,
        };
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &m, std::slice::from_ref(&ep)).unwrap();
        let (m2, eps) = read_dataset(dir.path()).unwrap();
        assert_eq!(m2, m);
        assert_eq!(eps, vec![ep]);
        assert_eq!(to_demos(&eps, 1).unwrap().len(), 1);
        assert!(read_dataset(&dir.path().join("missing")).is_err());
    }
}

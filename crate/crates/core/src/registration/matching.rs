//! Feature-space correspondences filtered by reciprocity and a tuple
//! consistency test.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::fpfh::{FpfhFeatures, FPFH_BINS};
use crate::error::{Error, Result};
use crate::pointcloud::{KdTree, PointCloud};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchConfig {
    pub tuple_ratio: f64,
    pub max_tuples: usize,
    pub seed: u64,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            tuple_ratio: 0.9,
            max_tuples: 1000,
            seed: 0,
        }
    }
}

/// Unique `(source, target)` index pairs, sorted.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrespondenceSet {
    pub pairs: Vec<(usize, usize)>,
}

impl CorrespondenceSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

fn feature_tree(f: &FpfhFeatures) -> (Option<KdTree<FPFH_BINS>>, Vec<usize>) {
    let ids: Vec<usize> = (0..f.len()).filter(|&i| !f.isolated[i]).collect();
    let pts: Vec<[f64; FPFH_BINS]> = ids.iter().map(|&i| f.histograms[i]).collect();
    (KdTree::build(&pts), ids)
}

/// Reciprocal nearest neighbours in feature space, before the tuple test.
pub fn reciprocal_matches(fa: &FpfhFeatures, fb: &FpfhFeatures) -> Vec<(usize, usize)> {
    let (Some(ta), ids_a) = feature_tree(fa) else {
        return Vec::new();
    };
    let (Some(tb), ids_b) = feature_tree(fb) else {
        return Vec::new();
    };
    let mut out = Vec::new();
    for &i in &ids_a {
        let j = ids_b[tb.nearest(&fa.histograms[i]).0];
        let back = ids_a[ta.nearest(&fb.histograms[j]).0];
        if back == i {
            out.push((i, j));
        }
    }
    out
}

/// Reciprocal feature matches that survive the tuple test: random triples
/// whose pairwise source and target distances agree within `tuple_ratio`.
pub fn match_features(
    fa: &FpfhFeatures,
    fb: &FpfhFeatures,
    source: &PointCloud,
    target: &PointCloud,
    cfg: &MatchConfig,
) -> Result<CorrespondenceSet> {
    if fa.len() != source.len() || fb.len() != target.len() {
        return Err(Error::LengthMismatch {
            expected: source.len(),
            got: fa.len(),
        });
    }
    let raw = reciprocal_matches(fa, fb);
    if raw.len() < 3 {
        return Ok(CorrespondenceSet::default());
    }
    let mut r = rng::stream(cfg.seed, 0x7475_706c);
    let (p, q) = (source.points(), target.points());
    let s = cfg.tuple_ratio;
    let trials = raw.len() * 100;
    let mut kept = Vec::new();
    let mut accepted = 0;
    for _ in 0..trials {
        let t = [r.gen_range(0..raw.len()), r.gen_range(0..raw.len()), r.gen_range(0..raw.len())];
        if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
            continue;
        }
        let consistent = [(0, 1), (1, 2), (2, 0)].iter().all(|&(a, b)| {
            let li = (p[raw[t[a]].0] - p[raw[t[b]].0]).norm();
            let lj = (q[raw[t[a]].1] - q[raw[t[b]].1]).norm();
            li * s < lj && lj < li / s
        });
        if consistent {
            kept.extend(t.iter().map(|&k| raw[k]));
            accepted += 1;
            if accepted >= cfg.max_tuples {
                break;
            }
        }
    }
    kept.sort_unstable();
    kept.dedup();
    Ok(CorrespondenceSet { pairs: kept })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registration::{compute_fpfh, estimate_normals_toward};
    use nalgebra::Vector3;

    fn blob(seed: u64, n: usize) -> PointCloud {
        let mut r = rng::seeded(seed);
        let pts = (0..n)
            .map(|_| {
                let d = Vector3::new(rng::normal(&mut r), rng::normal(&mut r), rng::normal(&mut r)).normalize();
                d * (1.0 + 0.3 * (3.0 * d.x).sin() * (2.0 * d.y + 1.0).cos() + 0.2 * (5.0 * d.z).sin())
            })
            .collect();
        PointCloud::new(pts).unwrap()
    }

    fn features(c: &PointCloud) -> FpfhFeatures {
        let c = estimate_normals_toward(c, 0.25, &c.centroid()).cloud;
        compute_fpfh(&c, 0.45).unwrap()
    }

    #[test]
    fn identical_clouds_match_themselves() {
        let c = blob(71, 500);
        let f = features(&c);
        let m = match_features(&f, &f, &c, &c, &MatchConfig::default()).unwrap();
        assert!(!m.is_empty());
        let correct = m.pairs.iter().filter(|(i, j)| i == j).count();
        assert!(correct as f64 >= 0.9 * m.len() as f64);
        assert!(m.pairs.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn deterministic_under_seed() {
        let a = blob(72, 400);
        let b = blob(73, 400);
        let (fa, fb) = (features(&a), features(&b));
        let cfg = MatchConfig { seed: 9, ..Default::default() };
        assert_eq!(match_features(&fa, &fb, &a, &b, &cfg).unwrap(), match_features(&fa, &fb, &a, &b, &cfg).unwrap());
    }

    #[test]
    fn tuple_test_rejects_noise_matches() {
        let mut r = rng::seeded(74);
        let mk = |r: &mut rng::Rng| PointCloud::new((0..400).map(|_| Vector3::new(rng::normal(r), rng::normal(r), rng::normal(r))).collect()).unwrap();
        let a = mk(&mut r);
        let b = mk(&mut r);
        let rand_feat = |r: &mut rng::Rng| FpfhFeatures {
            histograms: (0..400)
                .map(|_| {
                    let mut h: [f64; FPFH_BINS] = std::array::from_fn(|_| r.gen::<f64>());
                    let s: f64 = h.iter().sum();
                    h.iter_mut().for_each(|x| *x /= s);
                    h
                })
                .collect(),
            isolated: vec![false; 400],
        };
        let fa = rand_feat(&mut r);
        let fb = rand_feat(&mut r);
        let raw = reciprocal_matches(&fa, &fb).len();
        let kept = match_features(&fa, &fb, &a, &b, &MatchConfig::default()).unwrap().len();
        assert!(raw > 10);
        assert!(kept * 2 <= raw, "kept {kept} of {raw}");
    }
}

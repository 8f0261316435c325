//! Exact k-d tree over fixed-dimension points.
//!
//! Used in 3-D for geometry queries and in 33-D for feature matching. Nearest
//! queries break distance ties by the lowest original point index.

const DEFAULT_LEAF_SIZE: usize = 12;

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { dim: usize, value: f64, left: usize, right: usize },
}

#[derive(Debug, Clone)]
pub struct KdTree<const D: usize> {
    /// Points in tree order.
    points: Vec<[f64; D]>,
    /// Original index of each point in tree order.
    ids: Vec<usize>,
    nodes: Vec<Node>,
    leaf_size: usize,
}

impl<const D: usize> KdTree<D> {
    /// Returns `None` for an empty point set.
    pub fn build(points: &[[f64; D]]) -> Option<Self> {
        Self::with_leaf_size(points, DEFAULT_LEAF_SIZE)
    }

    pub fn with_leaf_size(points: &[[f64; D]], leaf_size: usize) -> Option<Self> {
        if points.is_empty() {
            return None;
        }
        let leaf_size = leaf_size.max(1);
        let mut ids: Vec<usize> = (0..points.len()).collect();
        let mut nodes = Vec::with_capacity(2 * points.len() / leaf_size + 1);
        build_rec(points, &mut ids, 0, points.len(), leaf_size, &mut nodes);
        let ordered = ids.iter().map(|&i| points[i]).collect();
        Some(Self {
            points: ordered,
            ids,
            nodes,
            leaf_size,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn leaf_size(&self) -> usize {
        self.leaf_size
    }

    /// Nearest point as `(original index, squared distance)`.
    pub fn nearest(&self, q: &[f64; D]) -> (usize, f64) {
        let mut best = (usize::MAX, f64::INFINITY);
        self.nearest_rec(0, q, usize::MAX, &mut best);
        best
    }

    /// Nearest point other than original index `skip`; `None` if no other point exists.
    pub fn nearest_excluding(&self, q: &[f64; D], skip: usize) -> Option<(usize, f64)> {
        let mut best = (usize::MAX, f64::INFINITY);
        self.nearest_rec(0, q, skip, &mut best);
        (best.0 != usize::MAX).then_some(best)
    }

    fn nearest_rec(&self, node: usize, q: &[f64; D], skip: usize, best: &mut (usize, f64)) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for k in start..end {
                    let id = self.ids[k];
                    if id == skip {
                        continue;
                    }
                    let d2 = sq_dist(&self.points[k], q);
                    if d2 < best.1 || (d2 == best.1 && id < best.0) {
                        *best = (id, d2);
                    }
                }
            }
            Node::Split { dim, value, left, right } => {
                let diff = q[dim] - value;
                let (near, far) = if diff <= 0.0 { (left, right) } else { (right, left) };
                self.nearest_rec(near, q, skip, best);
                if diff * diff <= best.1 {
                    self.nearest_rec(far, q, skip, best);
                }
            }
        }
    }

    /// The `k` nearest points, closest first, ties by lowest index.
    pub fn k_nearest(&self, q: &[f64; D], k: usize) -> Vec<(usize, f64)> {
        let mut best = Vec::with_capacity(k + 1);
        if k > 0 {
            self.knn_rec(0, q, k, &mut best);
        }
        best
    }

    fn knn_rec(&self, node: usize, q: &[f64; D], k: usize, best: &mut Vec<(usize, f64)>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for i in start..end {
                    let cand = (self.ids[i], sq_dist(&self.points[i], q));
                    if best.len() == k {
                        let worst = best[k - 1];
                        if cand.1 > worst.1 || (cand.1 == worst.1 && cand.0 > worst.0) {
                            continue;
                        }
                    }
                    let at = best.partition_point(|b| b.1 < cand.1 || (b.1 == cand.1 && b.0 < cand.0));
                    best.insert(at, cand);
                    best.truncate(k);
                }
            }
            Node::Split { dim, value, left, right } => {
                let diff = q[dim] - value;
                let (near, far) = if diff <= 0.0 { (left, right) } else { (right, left) };
                self.knn_rec(near, q, k, best);
                if best.len() < k || diff * diff <= best[k - 1].1 {
                    self.knn_rec(far, q, k, best);
                }
            }
        }
    }

    /// All points within `radius` (inclusive), sorted by original index.
    pub fn within_radius(&self, q: &[f64; D], radius: f64) -> Vec<(usize, f64)> {
        let mut out = Vec::new();
        self.radius_rec(0, q, radius * radius, &mut out);
        out.sort_unstable_by_key(|&(i, _)| i);
        out
    }

    fn radius_rec(&self, node: usize, q: &[f64; D], r2: f64, out: &mut Vec<(usize, f64)>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for k in start..end {
                    let d2 = sq_dist(&self.points[k], q);
                    if d2 <= r2 {
                        out.push((self.ids[k], d2));
                    }
                }
            }
            Node::Split { dim, value, left, right } => {
                let diff = q[dim] - value;
                if diff <= 0.0 || diff * diff <= r2 {
                    self.radius_rec(left, q, r2, out);
                }
                if diff >= 0.0 || diff * diff <= r2 {
                    self.radius_rec(right, q, r2, out);
                }
            }
        }
    }
}

fn build_rec<const D: usize>(
    points: &[[f64; D]],
    ids: &mut [usize],
    start: usize,
    end: usize,
    leaf_size: usize,
    nodes: &mut Vec<Node>,
) -> usize {
    let me = nodes.len();
    if end - start <= leaf_size {
        nodes.push(Node::Leaf { start, end });
        return me;
    }
    // split on the widest dimension
    let mut dim = 0;
    let mut widest = -1.0;
    for d in 0..D {
        let (lo, hi) = ids[start..end].iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
            (lo.min(points[i][d]), hi.max(points[i][d]))
        });
        if hi - lo > widest {
            widest = hi - lo;
            dim = d;
        }
    }
    if widest <= 0.0 {
        // all points coincide
        nodes.push(Node::Leaf { start, end });
        return me;
    }
    let mid = start + (end - start) / 2;
    ids[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
        points[a][dim].total_cmp(&points[b][dim]).then(a.cmp(&b))
    });
    let value = points[ids[mid]][dim];
    nodes.push(Node::Leaf { start: 0, end: 0 });
    let left = build_rec(points, ids, start, mid, leaf_size, nodes);
    let right = build_rec(points, ids, mid, end, leaf_size, nodes);
    nodes[me] = Node::Split { dim, value, left, right };
    me
}

#[inline]
fn sq_dist<const D: usize>(a: &[f64; D], b: &[f64; D]) -> f64 {
    let mut s = 0.0;
    for d in 0..D {
        let t = a[d] - b[d];
        s += t * t;
    }
    s
}

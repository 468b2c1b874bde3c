//! Exact nearest-neighbor index over a fixed 3D point set.
//!
//! A balanced kd-tree with deterministic tie-breaking (lowest point id
//! wins), so queries match an exhaustive scan bit for bit. Approximate
//! indexes are deliberately out: loss gradients through wrong neighbors
//! destabilize the refinement optimization.

use nalgebra::Point3;

use super::GeomError;

#[derive(Debug, Clone)]
struct Node {
    /// Splitting point id (index into `points`).
    id: u32,
    axis: u8,
    left: i32,
    right: i32,
}

/// Immutable spatial index over a point set.
#[derive(Debug, Clone)]
pub struct NnIndex {
    points: Vec<Point3<f64>>,
    nodes: Vec<Node>,
    root: i32,
}

impl NnIndex {
    pub fn build(points: &[Point3<f64>]) -> Self {
        let mut ids: Vec<u32> = (0..points.len() as u32).collect();
        let mut nodes = Vec::with_capacity(points.len());
        let root = build_rec(points, &mut ids, 0, &mut nodes);
        Self {
            points: points.to_vec(),
            nodes,
            root,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, id: usize) -> Point3<f64> {
        self.points[id]
    }

    pub fn points(&self) -> &[Point3<f64>] {
        &self.points
    }

    /// Exact nearest neighbor under the Euclidean metric.
    ///
    /// Returns `(distance, point id)`; ties resolve to the lowest id.
    pub fn nearest(&self, query: &Point3<f64>) -> Result<(f64, usize), GeomError> {
        if self.points.is_empty() {
            return Err(GeomError::InvalidState(
                "nearest-neighbor query on empty index".into(),
            ));
        }
        let mut best = (f64::INFINITY, u32::MAX);
        self.search(self.root, query, &mut best);
        Ok((best.0.sqrt(), best.1 as usize))
    }

    fn search(&self, node: i32, q: &Point3<f64>, best: &mut (f64, u32)) {
        if node < 0 {
            return;
        }
        let n = &self.nodes[node as usize];
        let p = &self.points[n.id as usize];
        let d2 = (p - q).norm_squared();
        if d2 < best.0 || (d2 == best.0 && n.id < best.1) {
            *best = (d2, n.id);
        }
        let delta = q[n.axis as usize] - p[n.axis as usize];
        let (near, far) = if delta < 0.0 {
            (n.left, n.right)
        } else {
            (n.right, n.left)
        };
        self.search(near, q, best);
        if delta * delta <= best.0 {
            self.search(far, q, best);
        }
    }
}

fn build_rec(points: &[Point3<f64>], ids: &mut [u32], depth: usize, nodes: &mut Vec<Node>) -> i32 {
    if ids.is_empty() {
        return -1;
    }
    let axis = (depth % 3) as u8;
    // sort by coordinate with id tie-break for determinism
    ids.sort_unstable_by(|&a, &b| {
        let ca = points[a as usize][axis as usize];
        let cb = points[b as usize][axis as usize];
        ca.partial_cmp(&cb).unwrap().then(a.cmp(&b))
    });
    let mid = ids.len() / 2;
    let id = ids[mid];
    let slot = nodes.len();
    nodes.push(Node {
        id,
        axis,
        left: -1,
        right: -1,
    });
    let (lo, hi) = ids.split_at_mut(mid);
    let left = build_rec(points, lo, depth + 1, nodes);
    let right = build_rec(points, &mut hi[1..], depth + 1, nodes);
    nodes[slot].left = left;
    nodes[slot].right = right;
    slot as i32
}

/// Convenience wrapper matching the operation signature used throughout:
/// exact nearest distance and target point id.
pub fn nearest_distance(query: &Point3<f64>, index: &NnIndex) -> Result<(f64, usize), GeomError> {
    index.nearest(query)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute(points: &[Point3<f64>], q: &Point3<f64>) -> (f64, usize) {
        let mut best = (f64::INFINITY, usize::MAX);
        for (i, p) in points.iter().enumerate() {
            let d = (p - q).norm_squared();
            if d < best.0 {
                best = (d, i);
            }
        }
        (best.0.sqrt(), best.1)
    }

    #[test]
    fn identity_query() {
        let pts = vec![Point3::new(0.0, 0.0, 0.0), Point3::new(1.0, 0.0, 0.0)];
        let idx = NnIndex::build(&pts);
        let (d, id) = idx.nearest(&pts[1]).unwrap();
        assert_eq!(d, 0.0);
        assert_eq!(id, 1);
    }

    #[test]
    fn one_dimensional_case() {
        let pts = vec![Point3::new(0.0, 0.0, 0.0), Point3::new(1.0, 0.0, 0.0)];
        let idx = NnIndex::build(&pts);
        let (d, id) = idx.nearest(&Point3::new(2.0, 0.0, 0.0)).unwrap();
        assert_eq!(d, 1.0);
        assert_eq!(id, 1);
    }

    #[test]
    fn empty_index_errors() {
        let idx = NnIndex::build(&[]);
        assert!(idx.nearest(&Point3::origin()).is_err());
    }

    #[test]
    fn matches_exhaustive_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let pts: Vec<Point3<f64>> = (0..1000)
            .map(|_| Point3::new(rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()))
            .collect();
        let idx = NnIndex::build(&pts);
        for _ in 0..100 {
            let q = Point3::new(rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>());
            let (d, id) = idx.nearest(&q).unwrap();
            let (bd, bid) = brute(&pts, &q);
            assert_eq!(d, bd);
            assert_eq!(id, bid);
        }
    }

    #[test]
    fn tie_breaks_to_lowest_id() {
        // duplicated point: both ids equidistant from any query
        let pts = vec![Point3::new(1.0, 1.0, 1.0); 4];
        let idx = NnIndex::build(&pts);
        let (_, id) = idx.nearest(&Point3::origin()).unwrap();
        assert_eq!(id, 0);
    }
}

//! Exact Euclidean k-nearest-neighbor distances.
//!
//! Two backends share one distance kernel (squared differences summed in
//! coordinate order, then a square root), so they produce bitwise-identical
//! distances: a k-d tree for the common case and a brute-force scan for tiny
//! or high-dimensional inputs.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;

use crate::data::Dataset;
use crate::error::{Error, Result};

const LEAF_SIZE: usize = 16;
const BRUTE_FORCE_MAX_N: usize = 64;
const BRUTE_FORCE_MIN_DIM: usize = 16;
const PARALLEL_MIN_N: usize = 4096;

/// `rho[i * k + j]` is the distance from point `i` to its `(j+1)`-th nearest
/// other point.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborDistances {
    pub n: usize,
    pub k: usize,
    pub rho: Vec<f64>,
}

impl NeighborDistances {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.rho[i * self.k..(i + 1) * self.k]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backend {
    Auto,
    KdTree,
    BruteForce,
}

#[inline]
fn dist2(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        acc += d * d;
    }
    acc
}

/// Candidate ordered by (squared distance, index); ties go to the lower index.
#[derive(Debug, Clone, Copy)]
struct Cand {
    d2: f64,
    idx: usize,
}

impl PartialEq for Cand {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl Eq for Cand {}
impl PartialOrd for Cand {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Cand {
    fn cmp(&self, o: &Self) -> Ordering {
        self.d2.total_cmp(&o.d2).then(self.idx.cmp(&o.idx))
    }
}

/// Distances to the `k` nearest neighbors of every point, excluding itself.
pub fn knn_distances(points: &Dataset, k: usize) -> Result<NeighborDistances> {
    knn_distances_with(points, k, Backend::Auto)
}

pub fn knn_distances_with(points: &Dataset, k: usize, backend: Backend) -> Result<NeighborDistances> {
    let n = points.nrows();
    if k == 0 || k >= n {
        return Err(Error::InvalidK { k, n });
    }
    points.ensure_finite()?;
    let backend = match backend {
        Backend::Auto if n < BRUTE_FORCE_MAX_N || points.ncols() >= BRUTE_FORCE_MIN_DIM => {
            Backend::BruteForce
        }
        Backend::Auto => Backend::KdTree,
        b => b,
    };

    let mut rho = vec![0.0; n * k];
    match backend {
        Backend::BruteForce => fill(&mut rho, k, n, |i, out| brute_query(points, i, k, out)),
        _ => {
            let tree = KdTree::build(points);
            fill(&mut rho, k, n, |i, out| tree.query(i, k, out))
        }
    }

    let dups: Vec<usize> = (0..n).filter(|&i| rho[i * k] == 0.0).collect();
    if !dups.is_empty() {
        return Err(Error::DuplicatePoints { indices: dups });
    }
    Ok(NeighborDistances { n, k, rho })
}

fn fill(rho: &mut [f64], k: usize, n: usize, query: impl Fn(usize, &mut [f64]) + Sync) {
    if n >= PARALLEL_MIN_N {
        rho.par_chunks_mut(k).enumerate().for_each(|(i, out)| query(i, out));
    } else {
        rho.chunks_mut(k).enumerate().for_each(|(i, out)| query(i, out));
    }
}

fn brute_query(points: &Dataset, i: usize, k: usize, out: &mut [f64]) {
    let q = points.row(i);
    let mut cands: Vec<Cand> = (0..points.nrows())
        .filter(|&j| j != i)
        .map(|j| Cand {
            d2: dist2(q, points.row(j)),
            idx: j,
        })
        .collect();
    cands.select_nth_unstable(k - 1);
    cands.truncate(k);
    cands.sort_unstable();
    for (o, c) in out.iter_mut().zip(&cands) {
        *o = c.d2.sqrt();
    }
}

enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        dim: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

/// Static k-d tree over the rows of a [`Dataset`].
pub struct KdTree<'a> {
    points: &'a Dataset,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl<'a> KdTree<'a> {
    pub fn build(points: &'a Dataset) -> Self {
        let mut tree = Self {
            points,
            order: (0..points.nrows()).collect(),
            nodes: Vec::new(),
        };
        if points.nrows() > 0 {
            tree.build_node(0, points.nrows());
        }
        tree
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let p = self.points.ncols();
        let mut best = (0, -1.0);
        for d in 0..p {
            let (lo, hi) = self.order[start..end].iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                let v = self.points.get(i, d);
                (lo.min(v), hi.max(v))
            });
            if hi - lo > best.1 {
                best = (d, hi - lo);
            }
        }
        let dim = best.0;
        if best.1 <= 0.0 {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mid = start + (end - start) / 2;
        let pts = self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            pts.get(a, dim).total_cmp(&pts.get(b, dim)).then(a.cmp(&b))
        });
        let value = pts.get(self.order[mid], dim);
        self.nodes.push(Node::Split {
            dim,
            value,
            left: 0,
            right: 0,
        });
        let left = self.build_node(start, mid);
        let right = self.build_node(mid, end);
        if let Node::Split { left: l, right: r, .. } = &mut self.nodes[id] {
            *l = left;
            *r = right;
        }
        id
    }

    /// Writes the sorted distances from point `i` to its `k` nearest others.
    pub fn query(&self, i: usize, k: usize, out: &mut [f64]) {
        let q = self.points.row(i);
        let mut heap: BinaryHeap<Cand> = BinaryHeap::with_capacity(k + 1);
        self.search(0, q, i, k, &mut heap);
        let sorted = heap.into_sorted_vec();
        for (o, c) in out.iter_mut().zip(&sorted) {
            *o = c.d2.sqrt();
        }
    }

    fn search(&self, node: usize, q: &[f64], self_idx: usize, k: usize, heap: &mut BinaryHeap<Cand>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &j in &self.order[start..end] {
                    if j == self_idx {
                        continue;
                    }
                    let c = Cand {
                        d2: dist2(q, self.points.row(j)),
                        idx: j,
                    };
                    if heap.len() < k {
                        heap.push(c);
                    } else if c < *heap.peek().expect("heap holds k candidates") {
                        heap.pop();
                        heap.push(c);
                    }
                }
            }
            Node::Split { dim, value, left, right } => {
                let diff = q[dim] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, self_idx, k, heap);
                // ties at the bound may still hold a lower-index neighbor
                if heap.len() < k || diff * diff <= heap.peek().map_or(f64::INFINITY, |c| c.d2) {
                    self.search(far, q, self_idx, k, heap);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_points(n: usize, d: usize, rng: &mut ChaCha8Rng) -> Dataset {
        let data = (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        Dataset::new(n, d, data).unwrap()
    }

    // Independent of both backends: full sort of all pairwise distances.
    fn oracle(points: &Dataset, k: usize) -> Vec<f64> {
        let n = points.nrows();
        let mut out = Vec::with_capacity(n * k);
        for i in 0..n {
            let mut all: Vec<f64> = (0..n)
                .filter(|&j| j != i)
                .map(|j| {
                    points
                        .row(i)
                        .iter()
                        .zip(points.row(j))
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt()
                })
                .collect();
            all.sort_by(f64::total_cmp);
            out.extend_from_slice(&all[..k]);
        }
        out
    }

    #[test]
    fn hand_computed_line() {
        let pts = Dataset::from_column(vec![0.0, 1.0, 3.0]);
        let nd = knn_distances(&pts, 2).unwrap();
        assert_eq!(nd.rho, vec![1.0, 3.0, 1.0, 2.0, 2.0, 3.0]);
    }

    #[test]
    fn two_points() {
        let pts = Dataset::from_rows(&[[0.0, 0.0], [3.0, 4.0]]).unwrap();
        let nd = knn_distances(&pts, 1).unwrap();
        assert_eq!(nd.rho, vec![5.0, 5.0]);
    }

    #[test]
    fn k_out_of_range() {
        let pts = Dataset::from_column(vec![0.0, 1.0, 3.0]);
        assert!(matches!(knn_distances(&pts, 3), Err(Error::InvalidK { k: 3, n: 3 })));
        assert!(matches!(knn_distances(&pts, 0), Err(Error::InvalidK { .. })));
    }

    #[test]
    fn duplicates_are_reported() {
        let pts = Dataset::from_column(vec![0.0, 1.0, 1.0, 5.0]);
        match knn_distances(&pts, 1) {
            Err(Error::DuplicatePoints { indices }) => assert_eq!(indices, vec![1, 2]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn matches_brute_force_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts = random_points(200, 3, &mut rng);
        let nd = knn_distances(&pts, 10).unwrap();
        assert_eq!(nd.rho, oracle(&pts, 10));
    }

    #[test]
    fn backends_agree_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for &(n, d, k) in &[(100, 1, 5), (300, 2, 20), (150, 7, 9), (500, 10, 25)] {
            let pts = random_points(n, d, &mut rng);
            let a = knn_distances_with(&pts, k, Backend::KdTree).unwrap();
            let b = knn_distances_with(&pts, k, Backend::BruteForce).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn grid_ties_agree() {
        // integer lattice: many exactly tied distances
        let mut rows = Vec::new();
        for x in 0..12 {
            for y in 0..12 {
                rows.push([x as f64, y as f64]);
            }
        }
        let pts = Dataset::from_rows(&rows).unwrap();
        let a = knn_distances_with(&pts, 8, Backend::KdTree).unwrap();
        let b = knn_distances_with(&pts, 8, Backend::BruteForce).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.row(0), &[1.0, 1.0, 2f64.sqrt(), 2.0, 2.0, 5f64.sqrt(), 5f64.sqrt(), 8f64.sqrt()]);
    }

    #[test]
    fn rows_nondecreasing() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pts = random_points(400, 4, &mut rng);
        let nd = knn_distances(&pts, 12).unwrap();
        for i in 0..nd.n {
            assert!(nd.row(i).windows(2).all(|w| w[0] <= w[1]));
            assert!(nd.row(i)[0] > 0.0);
        }
    }
}

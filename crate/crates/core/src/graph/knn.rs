//! Exact and approximate k-nearest-neighbour search.
//!
//! The approximate search is a forest of randomized kd-trees queried with a
//! shared best-bin-first priority queue and a budget on the number of points
//! examined, in the style of FLANN.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::weights::squared_distance;
use super::PointCloud;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum KnnMode {
    #[default]
    Exact,
    Approximate,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KnnParams {
    pub trees: usize,
    /// Maximum number of candidate points examined per query.
    pub checks: usize,
    /// Clouds with at most this many points are always searched exactly.
    pub exact_below: usize,
    pub leaf_size: usize,
    pub seed: u64,
}

impl Default for KnnParams {
    fn default() -> Self {
        KnnParams {
            trees: 4,
            checks: 4096,
            exact_below: 5000,
            leaf_size: 8,
            seed: 0,
        }
    }
}

/// One entry of a neighbour list.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Neighbor {
    pub id: usize,
    pub dist2: f64,
}

impl Neighbor {
    fn key_cmp(&self, other: &Self) -> Ordering {
        self.dist2
            .total_cmp(&other.dist2)
            .then(self.id.cmp(&other.id))
    }
}

// Max-heap ordering on (dist2, id), so the worst retained neighbour is on top.
#[derive(Clone, Copy, Debug)]
struct HeapEntry(Neighbor);

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for HeapEntry {}
impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.key_cmp(&other.0)
    }
}

/// Searches the `k` nearest other points of every point. Ties in distance are
/// broken by ascending point id. Approximate mode falls back to exact search
/// when the cloud has at most `params.exact_below` points.
pub fn knn_search(
    cloud: &PointCloud,
    k: usize,
    mode: KnnMode,
    params: &KnnParams,
) -> Result<Vec<Vec<Neighbor>>> {
    let n = cloud.len();
    if k == 0 || k >= n {
        return Err(Error::invalid(format!(
            "k-NN search needs 1 <= k < N, got k = {k}, N = {n}"
        )));
    }
    match mode {
        KnnMode::Approximate if n > params.exact_below => {
            let forest = KdForest::build(cloud, params.trees, params.leaf_size, params.seed);
            Ok(forest.search_all(k, params.checks))
        }
        _ => Ok(exact_knn(cloud, k)),
    }
}

/// Brute-force search over all pairs.
pub fn exact_knn(cloud: &PointCloud, k: usize) -> Vec<Vec<Neighbor>> {
    let n = cloud.len();
    (0..n)
        .into_par_iter()
        .map(|i| {
            let xi = cloud.point(i);
            let mut all: Vec<Neighbor> = (0..n)
                .filter(|&j| j != i)
                .map(|j| Neighbor {
                    id: j,
                    dist2: squared_distance(xi, cloud.point(j)),
                })
                .collect();
            if k < all.len() {
                all.select_nth_unstable_by(k, Neighbor::key_cmp);
                all.truncate(k);
            }
            all.sort_by(Neighbor::key_cmp);
            all
        })
        .collect()
}

#[derive(Clone, Debug)]
enum Node {
    Leaf { start: usize, end: usize },
    Split {
        dim: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Clone, Debug)]
struct KdTree {
    nodes: Vec<Node>,
    order: Vec<usize>,
}

/// Forest of randomized kd-trees over a borrowed point cloud.
#[derive(Debug)]
pub struct KdForest<'a> {
    cloud: &'a PointCloud,
    trees: Vec<KdTree>,
}

// number of highest-variance dimensions the split is drawn from
const TOP_DIMS: usize = 5;
// points used to estimate per-dimension mean and variance at each node
const SAMPLE_SIZE: usize = 100;

impl<'a> KdForest<'a> {
    pub fn build(cloud: &'a PointCloud, trees: usize, leaf_size: usize, seed: u64) -> Self {
        let trees = (0..trees.max(1))
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(t as u64));
                let mut order: Vec<usize> = (0..cloud.len()).collect();
                let mut nodes = Vec::new();
                build_node(cloud, &mut order, 0, cloud.len(), leaf_size.max(1), &mut rng, &mut nodes);
                KdTree { nodes, order }
            })
            .collect();
        KdForest { cloud, trees }
    }

    /// Approximate neighbours of every cloud point (self excluded).
    pub fn search_all(&self, k: usize, checks: usize) -> Vec<Vec<Neighbor>> {
        let n = self.cloud.len();
        (0..n)
            .into_par_iter()
            .map_init(
                || (vec![0u32; n], 0u32),
                |(stamps, gen), i| {
                    *gen = gen.wrapping_add(1);
                    if *gen == 0 {
                        stamps.iter_mut().for_each(|s| *s = 0);
                        *gen = 1;
                    }
                    self.search_with(self.cloud.point(i), k, checks, Some(i), stamps, *gen)
                },
            )
            .collect()
    }

    /// Approximate `k` nearest cloud points to `query`, skipping `exclude`.
    pub fn search(&self, query: &[f64], k: usize, checks: usize, exclude: Option<usize>) -> Vec<Neighbor> {
        let mut stamps = vec![0u32; self.cloud.len()];
        self.search_with(query, k, checks, exclude, &mut stamps, 1)
    }

    fn search_with(
        &self,
        query: &[f64],
        k: usize,
        checks: usize,
        exclude: Option<usize>,
        stamps: &mut [u32],
        gen: u32,
    ) -> Vec<Neighbor> {
        let mut best: BinaryHeap<HeapEntry> = BinaryHeap::with_capacity(k + 1);
        let mut branches: BinaryHeap<Reverse<(OrdF64, usize, usize)>> = BinaryHeap::new();
        let mut checked = 0usize;
        if let Some(e) = exclude {
            stamps[e] = gen;
        }

        for t in 0..self.trees.len() {
            self.descend(t, 0, 0.0, query, k, &mut best, &mut branches, &mut checked, stamps, gen);
        }
        while let Some(Reverse((OrdF64(bound), t, node))) = branches.pop() {
            let full = best.len() == k;
            if full && (checked >= checks || bound > best.peek().map_or(f64::INFINITY, |e| e.0.dist2)) {
                break;
            }
            self.descend(t, node, bound, query, k, &mut best, &mut branches, &mut checked, stamps, gen);
        }

        let mut out: Vec<Neighbor> = best.into_iter().map(|e| e.0).collect();
        out.sort_by(Neighbor::key_cmp);
        out
    }

    #[allow(clippy::too_many_arguments)]
    fn descend(
        &self,
        t: usize,
        mut node: usize,
        bound: f64,
        query: &[f64],
        k: usize,
        best: &mut BinaryHeap<HeapEntry>,
        branches: &mut BinaryHeap<Reverse<(OrdF64, usize, usize)>>,
        checked: &mut usize,
        stamps: &mut [u32],
        gen: u32,
    ) {
        let tree = &self.trees[t];
        loop {
            match tree.nodes[node] {
                Node::Split {
                    dim,
                    value,
                    left,
                    right,
                } => {
                    let diff = query[dim] - value;
                    let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                    branches.push(Reverse((OrdF64(bound.max(diff * diff)), t, far)));
                    node = near;
                }
                Node::Leaf { start, end } => {
                    for &p in &tree.order[start..end] {
                        if stamps[p] == gen {
                            continue;
                        }
                        stamps[p] = gen;
                        *checked += 1;
                        let cand = Neighbor {
                            id: p,
                            dist2: squared_distance(query, self.cloud.point(p)),
                        };
                        if best.len() < k {
                            best.push(HeapEntry(cand));
                        } else if let Some(top) = best.peek() {
                            if cand.key_cmp(&top.0) == Ordering::Less {
                                best.pop();
                                best.push(HeapEntry(cand));
                            }
                        }
                    }
                    return;
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct OrdF64(f64);
impl Eq for OrdF64 {}
impl PartialOrd for OrdF64 {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for OrdF64 {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

fn build_node(
    cloud: &PointCloud,
    order: &mut [usize],
    start: usize,
    end: usize,
    leaf_size: usize,
    rng: &mut ChaCha8Rng,
    nodes: &mut Vec<Node>,
) -> usize {
    let id = nodes.len();
    nodes.push(Node::Leaf { start, end });
    if end - start <= leaf_size {
        return id;
    }

    let dim = cloud.dim();
    let slice = &order[start..end];
    let step = (slice.len() / SAMPLE_SIZE).max(1);
    let sample: Vec<usize> = slice.iter().step_by(step).copied().collect();
    let mut mean = vec![0.0; dim];
    for &p in &sample {
        for (m, v) in mean.iter_mut().zip(cloud.point(p)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= sample.len() as f64);
    let mut var = vec![0.0; dim];
    for &p in &sample {
        for ((s, v), m) in var.iter_mut().zip(cloud.point(p)).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }

    let mut dims: Vec<usize> = (0..dim).collect();
    dims.sort_by(|&a, &b| var[b].total_cmp(&var[a]).then(a.cmp(&b)));
    let top = &mut dims[..TOP_DIMS.min(dim)];
    top.shuffle(rng);
    let split_dim = top[rng.random_range(0..top.len())];
    let value = mean[split_dim];

    // partition: left < value <= right
    let part = &mut order[start..end];
    let mut lo = 0;
    let mut hi = part.len();
    while lo < hi {
        if cloud.point(part[lo])[split_dim] < value {
            lo += 1;
        } else {
            hi -= 1;
            part.swap(lo, hi);
        }
    }
    let mut mid = start + lo;
    if mid == start || mid == end {
        // degenerate split (sampled mean hit an extreme); fall back to a median split
        part.sort_by(|&a, &b| {
            cloud.point(a)[split_dim]
                .total_cmp(&cloud.point(b)[split_dim])
                .then(a.cmp(&b))
        });
        let coord = |i: usize| cloud.point(order[i])[split_dim];
        let half = start + (end - start) / 2;
        mid = match (half..end).chain((start + 1..half).rev()).find(|&m| coord(m) != coord(m - 1)) {
            Some(m) => m,
            None => return id,
        };
        let (v_prev, v_mid) = (coord(mid - 1), coord(mid));
        let value = 0.5 * (v_prev + v_mid);
        let left = build_node(cloud, order, start, mid, leaf_size, rng, nodes);
        let right = build_node(cloud, order, mid, end, leaf_size, rng, nodes);
        nodes[id] = Node::Split {
            dim: split_dim,
            value,
            left,
            right,
        };
        return id;
    }

    let left = build_node(cloud, order, start, mid, leaf_size, rng, nodes);
    let right = build_node(cloud, order, mid, end, leaf_size, rng, nodes);
    nodes[id] = Node::Split {
        dim: split_dim,
        value,
        left,
        right,
    };
    id
}

/// Fraction of exact neighbours recovered by an approximate search.
pub fn recall(exact: &[Vec<Neighbor>], approx: &[Vec<Neighbor>]) -> f64 {
    let mut hit = 0usize;
    let mut total = 0usize;
    for (e, a) in exact.iter().zip(approx) {
        total += e.len();
        hit += e.iter().filter(|n| a.iter().any(|m| m.id == n.id)).count();
    }
    if total == 0 {
        1.0
    } else {
        hit as f64 / total as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(xs: &[f64]) -> PointCloud {
        PointCloud::from_rows(xs.iter().map(|&x| vec![x]).collect()).unwrap()
    }

    #[test]
    fn colinear_points() {
        let cloud = line(&[0.0, 1.0, 10.0]);
        let nn = knn_search(&cloud, 1, KnnMode::Exact, &KnnParams::default()).unwrap();
        let ids: Vec<usize> = nn.iter().map(|r| r[0].id).collect();
        assert_eq!(ids, vec![1, 0, 1]);
    }

    #[test]
    fn complete_graph_when_k_is_n_minus_one() {
        let cloud = line(&[0.0, 3.0, 1.0, 7.0, -2.0]);
        let nn = knn_search(&cloud, 4, KnnMode::Exact, &KnnParams::default()).unwrap();
        for (i, row) in nn.iter().enumerate() {
            let mut ids: Vec<usize> = row.iter().map(|n| n.id).collect();
            ids.sort();
            let expected: Vec<usize> = (0..5).filter(|&j| j != i).collect();
            assert_eq!(ids, expected);
        }
    }

    #[test]
    fn duplicates_are_mutual_nearest() {
        let cloud = line(&[5.0, 0.0, 5.0, 9.0]);
        let nn = exact_knn(&cloud, 1);
        assert_eq!(nn[0][0], Neighbor { id: 2, dist2: 0.0 });
        assert_eq!(nn[2][0], Neighbor { id: 0, dist2: 0.0 });
    }

    #[test]
    fn ties_break_by_id() {
        let cloud = line(&[0.0, -1.0, 1.0]);
        let nn = exact_knn(&cloud, 1);
        assert_eq!(nn[0][0].id, 1);
    }

    #[test]
    fn rejects_k_not_below_n() {
        let cloud = line(&[0.0, 1.0, 2.0]);
        assert!(knn_search(&cloud, 3, KnnMode::Exact, &KnnParams::default()).is_err());
        assert!(knn_search(&cloud, 0, KnnMode::Exact, &KnnParams::default()).is_err());
    }

    #[test]
    fn forest_with_unlimited_budget_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows: Vec<Vec<f64>> = (0..300)
            .map(|_| (0..6).map(|_| rng.random::<f64>()).collect())
            .collect();
        let cloud = PointCloud::from_rows(rows).unwrap();
        let forest = KdForest::build(&cloud, 2, 4, 11);
        assert_eq!(forest.search_all(5, usize::MAX), exact_knn(&cloud, 5));
    }

    #[test]
    fn forest_handles_constant_coordinates() {
        let rows: Vec<Vec<f64>> = (0..50).map(|i| vec![1.0, (i % 3) as f64]).collect();
        let cloud = PointCloud::from_rows(rows).unwrap();
        let forest = KdForest::build(&cloud, 3, 2, 0);
        let approx = forest.search_all(3, usize::MAX);
        let exact = exact_knn(&cloud, 3);
        assert_eq!(recall(&exact, &approx), 1.0);
    }
}

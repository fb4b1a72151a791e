//! Weighted k-NN graphs over point clouds and the linear operators the
//! smoothing model is built from.
//!
//! Two views of the same neighbourhood structure are kept:
//!
//! * the directed per-node neighbour rows (`k - 1` entries per node, the point
//!   itself counts as its own first neighbour and is dropped), which define the
//!   graph gradient and its `N x (k - 1)` codomain;
//! * the symmetrized affinity `W = max(W, Wᵀ)`, which defines degrees and the
//!   Laplacian `L = D - W`.

pub mod cache;
mod gradient;
pub mod knn;
mod split;
pub mod weights;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

pub use gradient::GradientOp;
pub use knn::{KnnMode, KnnParams, Neighbor};
pub use split::{DataSplit, LaplacianSplit, Slot};
pub use weights::{compute_weight, LocalScale, WeightKind};

/// `N` points in `R^M`, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    data: Vec<f64>,
    n: usize,
    dim: usize,
}

impl PointCloud {
    pub fn new(data: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("point dimension must be positive"));
        }
        if data.len() % dim != 0 {
            return Err(Error::invalid(format!(
                "{} values do not form rows of dimension {dim}",
                data.len()
            )));
        }
        let n = data.len() / dim;
        if n < 2 {
            return Err(Error::invalid(format!("point cloud needs at least 2 points, got {n}")));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite value in point {} (dimension {})",
                pos / dim,
                pos % dim
            )));
        }
        Ok(PointCloud { data, n, dim })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(i) = rows.iter().position(|r| r.len() != dim) {
            return Err(Error::invalid(format!(
                "point {i} has dimension {}, expected {dim}",
                rows[i].len()
            )));
        }
        PointCloud::new(rows.into_iter().flatten().collect(), dim)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GraphConfig {
    /// Neighbourhood size counting the point itself; each node gets `k - 1`
    /// neighbours.
    pub k: usize,
    pub weight: WeightKind,
    pub mode: KnnMode,
    pub knn: KnnParams,
    /// Clamp negative cosine weights to zero instead of rejecting them.
    pub allow_signed_weights: bool,
}

impl GraphConfig {
    pub fn new(k: usize, weight: WeightKind) -> Self {
        GraphConfig {
            k,
            weight,
            mode: KnnMode::Exact,
            knn: KnnParams::default(),
            allow_signed_weights: false,
        }
    }
}

/// Immutable weighted k-NN graph.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    n: usize,
    k: usize,
    row_ptr: Vec<usize>,
    row_ids: Vec<usize>,
    row_weights: Vec<f64>,
    affinity: CsrMatrix,
    degrees: Vec<f64>,
}

impl Graph {
    /// Builds a graph from explicit directed neighbour rows `(target, weight)`.
    /// The neighbourhood size `k` is taken as the longest row plus one (self).
    pub fn from_neighbor_lists(n: usize, rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        let k = rows.iter().map(Vec::len).max().unwrap_or(0) + 1;
        Graph::from_rows(n, k, rows)
    }

    pub(crate) fn from_rows(n: usize, k: usize, rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        if rows.len() != n {
            return Err(Error::invalid(format!("expected {n} neighbour rows, got {}", rows.len())));
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut row_ids = Vec::new();
        let mut row_weights = Vec::new();
        row_ptr.push(0);
        for (x, row) in rows.iter().enumerate() {
            if row.len() >= k {
                return Err(Error::invalid(format!(
                    "node {x} has {} neighbours, more than k - 1 = {}",
                    row.len(),
                    k - 1
                )));
            }
            for &(y, w) in row {
                if y >= n || y == x {
                    return Err(Error::invalid(format!("invalid neighbour {y} of node {x}")));
                }
                if !(w.is_finite() && w >= 0.0) {
                    return Err(Error::invalid(format!("edge ({x}, {y}) has weight {w}")));
                }
                if row.iter().filter(|&&(z, _)| z == y).count() > 1 {
                    return Err(Error::invalid(format!("node {x} lists neighbour {y} twice")));
                }
                row_ids.push(y);
                row_weights.push(w);
            }
            row_ptr.push(row_ids.len());
        }

        // W(x, y) = max over the two directions in which the edge was selected
        let mut sym: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for x in 0..n {
            for p in row_ptr[x]..row_ptr[x + 1] {
                let (y, w) = (row_ids[p], row_weights[p]);
                sym[x].push((y, w));
                sym[y].push((x, w));
            }
        }
        let mut triplets = Vec::new();
        for (x, entries) in sym.iter_mut().enumerate() {
            entries.sort_by(|a, b| a.0.cmp(&b.0).then(b.1.total_cmp(&a.1)));
            entries.dedup_by_key(|e| e.0);
            triplets.extend(entries.iter().map(|&(y, w)| (x, y, w)));
        }
        let affinity = CsrMatrix::from_triplets(n, n, &triplets);
        let degrees = (0..n).map(|x| affinity.row(x).map(|(_, w)| w).sum()).collect();

        Ok(Graph {
            n,
            k,
            row_ptr,
            row_ids,
            row_weights,
            affinity,
            degrees,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Neighbourhood size including the node itself.
    pub fn k(&self) -> usize {
        self.k
    }

    /// Directed neighbour row of `x` as `(target, weight)` pairs.
    pub fn neighbors(&self, x: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[x]..self.row_ptr[x + 1];
        self.row_ids[span.clone()]
            .iter()
            .copied()
            .zip(self.row_weights[span].iter().copied())
    }

    /// Total number of directed neighbour entries (the gradient codomain size).
    pub fn num_directed_edges(&self) -> usize {
        self.row_ids.len()
    }

    /// Symmetrized affinity matrix `W`.
    pub fn affinity(&self) -> &CsrMatrix {
        &self.affinity
    }

    pub fn degrees(&self) -> &[f64] {
        &self.degrees
    }

    pub fn max_degree(&self) -> f64 {
        self.degrees.iter().copied().fold(0.0, f64::max)
    }

    /// `L = D - W`.
    pub fn laplacian(&self) -> CsrMatrix {
        let mut triplets = Vec::with_capacity(self.affinity.nnz() + self.n);
        for x in 0..self.n {
            triplets.push((x, x, self.degrees[x]));
            triplets.extend(self.affinity.row(x).map(|(y, w)| (x, y, -w)));
        }
        CsrMatrix::from_triplets(self.n, self.n, &triplets)
    }

    /// Dirichlet energy `½ Σ_{x<y} W(x,y) (u(x) - u(y))²`, summed over each
    /// undirected edge once; equals `½ uᵀ L u`.
    pub fn dirichlet_energy(&self, u: &[f64]) -> f64 {
        let mut total = 0.0;
        for x in 0..self.n {
            for (y, w) in self.affinity.row(x).filter(|&(y, _)| y > x) {
                let d = u[x] - u[y];
                total += w * d * d;
            }
        }
        0.5 * total
    }

    pub(crate) fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub(crate) fn row_ids(&self) -> &[usize] {
        &self.row_ids
    }

    pub(crate) fn row_weights(&self) -> &[f64] {
        &self.row_weights
    }
}

/// Builds the weighted k-NN graph of a point cloud.
pub fn build_graph(cloud: &PointCloud, cfg: &GraphConfig) -> Result<Graph> {
    cfg.weight.validate()?;
    let n = cloud.len();
    if cfg.k < 2 || cfg.k > n {
        return Err(Error::invalid(format!(
            "neighbourhood size k (including self) must satisfy 2 <= k <= N, got k = {}, N = {n}",
            cfg.k
        )));
    }
    let others = cfg.k - 1;
    let search = match cfg.weight {
        WeightKind::ZelnikManorPerona { var_neighbor } => {
            if var_neighbor >= n {
                return Err(Error::invalid(format!(
                    "local-scale neighbour rank {var_neighbor} needs more than {n} points"
                )));
            }
            others.max(var_neighbor)
        }
        _ => others,
    };
    let nn = knn::knn_search(cloud, search, cfg.mode, &cfg.knn)?;

    let scales: Vec<f64> = match cfg.weight {
        WeightKind::ZelnikManorPerona { var_neighbor } => {
            nn.iter().map(|row| row[var_neighbor - 1].dist2.sqrt()).collect()
        }
        _ => Vec::new(),
    };
    if let Some(x) = scales.iter().position(|&s| s <= 0.0) {
        return Err(Error::invalid(format!(
            "node {x} has zero local scale (duplicate points up to the scale rank)"
        )));
    }

    let rows: Vec<Vec<(usize, f64)>> = nn
        .par_iter()
        .enumerate()
        .map(|(x, row)| {
            row.iter()
                .take(others)
                .map(|nb| {
                    let scale = if scales.is_empty() {
                        LocalScale::default()
                    } else {
                        LocalScale {
                            x: scales[x],
                            y: scales[nb.id],
                        }
                    };
                    let w = weights::weight_from_parts(
                        cfg.weight,
                        nb.dist2,
                        cloud.point(x),
                        cloud.point(nb.id),
                        scale,
                    )?;
                    if w < 0.0 {
                        if !cfg.allow_signed_weights {
                            return Err(Error::invalid(format!(
                                "negative cosine weight {w} on edge ({x}, {}); enable signed-weight clamping to allow",
                                nb.id
                            )));
                        }
                        return Ok((nb.id, 0.0));
                    }
                    Ok((nb.id, w))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    Graph::from_rows(n, cfg.k, rows)
}

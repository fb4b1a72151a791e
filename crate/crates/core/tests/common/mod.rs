//! Dense reference constructions shared by the integration tests. Nothing here
//! calls the library's Laplacian, gradient or solver code.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sat_core::{build_graph, DataSplit, Graph, GraphConfig, PointCloud, WeightKind};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_cloud(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> PointCloud {
    let data = (0..n * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    PointCloud::new(data, dim).unwrap()
}

pub fn random_graph(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Graph {
    let cloud = random_cloud(rng, n, 3);
    build_graph(&cloud, &GraphConfig::new(k, WeightKind::Rbf { xi: 0.5 })).unwrap()
}

/// Random split with every class represented and at least one test node.
pub fn random_split(rng: &mut ChaCha8Rng, n: usize, classes: usize, num_train: usize) -> DataSplit {
    assert!(num_train >= classes && num_train < n);
    let mut ids: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        ids.swap(i, rng.random_range(0..=i));
    }
    let train = ids[..num_train]
        .iter()
        .enumerate()
        .map(|(t, &id)| (id, if t < classes { t } else { rng.random_range(0..classes) }))
        .collect();
    DataSplit::new(n, classes, train).unwrap()
}

/// Symmetrized affinity `max(W, Wᵀ)` from the directed neighbour rows.
pub fn dense_affinity(g: &Graph) -> DMatrix<f64> {
    let n = g.n();
    let mut w = DMatrix::zeros(n, n);
    for x in 0..n {
        for (y, v) in g.neighbors(x) {
            w[(x, y)] = f64::max(w[(x, y)], v);
            w[(y, x)] = f64::max(w[(y, x)], v);
        }
    }
    w
}

pub fn dense_laplacian(g: &Graph) -> DMatrix<f64> {
    let w = dense_affinity(g);
    let d = DMatrix::from_diagonal(&DVector::from_iterator(w.nrows(), w.row_iter().map(|r| r.sum())));
    d - w
}

/// Directed gradient as an `m x n` matrix, rows in neighbour-list order.
pub fn dense_gradient(g: &Graph) -> DMatrix<f64> {
    let rows: Vec<(usize, usize, f64)> = (0..g.n())
        .flat_map(|x| g.neighbors(x).map(move |(y, w)| (x, y, w)))
        .collect();
    let mut a = DMatrix::zeros(rows.len(), g.n());
    for (e, &(x, y, w)) in rows.iter().enumerate() {
        a[(e, x)] += w;
        a[(e, y)] -= w;
    }
    a
}

pub fn select(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

/// One class subproblem in dense form:
/// `β/2‖u - û‖² + ½ uᵀ Q u + cᵀ u + ‖A u + h‖₁`, with `Q` already scaled by α.
pub struct DenseProblem {
    pub beta: f64,
    pub q: DMatrix<f64>,
    pub c: DVector<f64>,
    pub a: DMatrix<f64>,
    pub h: DVector<f64>,
    pub u_hat: DVector<f64>,
}

impl DenseProblem {
    /// `exact` keeps the full test block of `L`; otherwise the cross-edge
    /// degrees are removed from its diagonal.
    pub fn new(g: &Graph, split: &DataSplit, class: usize, alpha: f64, beta: f64, u_hat: &[f64], exact: bool) -> Self {
        let l = dense_laplacian(g);
        let s = split.test_ids();
        let t = split.train_ids();
        let mut q = select(&l, s, s);
        if !exact {
            let w = dense_affinity(g);
            for (i, &x) in s.iter().enumerate() {
                let cross: f64 = t.iter().map(|&y| w[(x, y)]).sum();
                q[(i, i)] -= cross;
            }
        }
        let ubar = DVector::from_iterator(t.len(), split.train_labels().iter().map(|&l| f64::from(u8::from(l == class))));
        let c = select(&l, s, t) * &ubar * alpha;
        let grad = dense_gradient(g);
        let a = select(&grad, &(0..grad.nrows()).collect::<Vec<_>>(), s);
        let h = select(&grad, &(0..grad.nrows()).collect::<Vec<_>>(), t) * &ubar;
        DenseProblem {
            beta,
            q: q * alpha,
            c,
            a,
            h,
            u_hat: DVector::from_column_slice(u_hat),
        }
    }

    pub fn objective(&self, u: &DVector<f64>) -> f64 {
        let d = u - &self.u_hat;
        0.5 * self.beta * d.dot(&d) + 0.5 * u.dot(&(&self.q * u)) + self.c.dot(u) + (&self.a * u + &self.h).abs().sum()
    }

    /// Projected gradient with momentum and adaptive restart on the dual box
    /// QP `max_{|p| ≤ 1} min_u L(u, p)`, returning the primal minimizer `u(p)`.
    /// Stops early once an iterate no longer moves.
    pub fn dual_oracle(&self, steps: usize) -> DVector<f64> {
        let n = self.u_hat.len();
        let m = self.a.nrows();
        let mmat = &self.q + DMatrix::identity(n, n) * self.beta;
        let minv = mmat.try_inverse().expect("β > 0 keeps the system invertible");
        let base = &self.u_hat * self.beta - &self.c;
        let primal = |p: &DVector<f64>| &minv * (&base - self.a.transpose() * p);
        // the dual gradient is affine: g(p) = h + A M⁻¹ base - A M⁻¹ Aᵀ p
        let amat = &self.a * &minv * self.a.transpose();
        let offset = &self.a * (&minv * &base) + &self.h;
        let lip = amat.symmetric_eigenvalues().max().max(1e-12);
        let step = 1.0 / lip;
        let mut p = DVector::zeros(m);
        let mut y = p.clone();
        let mut t = 1.0f64;
        let mut still = 0;
        for _ in 0..steps {
            let g = &offset - &amat * &y;
            let next = (&y + g * step).map(|v| v.clamp(-1.0, 1.0));
            let moved = (&next - &p).amax();
            if (&y - &next).dot(&(&next - &p)) > 0.0 {
                t = 1.0;
                y = next.clone();
            } else {
                let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
                y = &next + (&next - &p) * ((t - 1.0) / t_next);
                t = t_next;
            }
            p = next;
            still = if moved <= 1e-15 { still + 1 } else { 0 };
            if still >= 3 {
                break;
            }
        }
        primal(&p)
    }
}

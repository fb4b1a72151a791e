use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{DataSplit, Graph, Slot};
use crate::error::{Error, Result};

const NONE: usize = usize::MAX;

/// Graph gradient restricted to the test nodes.
///
/// Each directed neighbour entry `(x, y, w)` of the graph produces one output
/// `w (u(x) - u(y))`. For `u = (u_S; ū_j)` the gradient splits into the linear
/// part `A_S u_S` (training values set to zero) and a fixed per-class offset
/// `H_j` (test values set to zero).
#[derive(Clone, Debug)]
pub struct GradientOp {
    n: usize,
    k: usize,
    num_test: usize,
    weights: Vec<f64>,
    src_test: Vec<usize>,
    dst_test: Vec<usize>,
    offsets: Vec<Vec<f64>>,
}

impl GradientOp {
    pub fn new(graph: &Graph, split: &DataSplit) -> Result<Self> {
        if graph.n() != split.n() {
            return Err(Error::invalid(format!(
                "split covers {} nodes but the graph has {}",
                split.n(),
                graph.n()
            )));
        }
        let m = graph.num_directed_edges();
        let mut weights = Vec::with_capacity(m);
        let mut src_test = Vec::with_capacity(m);
        let mut dst_test = Vec::with_capacity(m);
        let mut offsets = vec![vec![0.0; m]; split.num_classes()];
        let ptr = graph.row_ptr();
        for x in 0..graph.n() {
            for p in ptr[x]..ptr[x + 1] {
                let (y, w) = (graph.row_ids()[p], graph.row_weights()[p]);
                weights.push(w);
                let (sx, lx) = match split.slot(x) {
                    Slot::Test(i) => (i, None),
                    Slot::Train(_) => (NONE, split.label_of(x)),
                };
                let (sy, ly) = match split.slot(y) {
                    Slot::Test(i) => (i, None),
                    Slot::Train(_) => (NONE, split.label_of(y)),
                };
                src_test.push(sx);
                dst_test.push(sy);
                // H_j[e] = w (ū_j(x) - ū_j(y)) with ū_j one-hot
                if let Some(c) = lx {
                    offsets[c][p] += w;
                }
                if let Some(c) = ly {
                    offsets[c][p] -= w;
                }
            }
        }
        Ok(GradientOp {
            n: graph.n(),
            k: graph.k(),
            num_test: split.num_test(),
            weights,
            src_test,
            dst_test,
            offsets,
        })
    }

    /// Length of the dual (edge-difference) array.
    pub fn dual_len(&self) -> usize {
        self.weights.len()
    }

    pub fn num_test(&self) -> usize {
        self.num_test
    }

    pub fn num_classes(&self) -> usize {
        self.offsets.len()
    }

    /// Fixed training contribution `H_j`.
    pub fn offset(&self, class: usize) -> &[f64] {
        &self.offsets[class]
    }

    /// `out = A_S u_s`
    pub fn apply_into(&self, u_s: &[f64], out: &mut [f64]) {
        assert_eq!(u_s.len(), self.num_test);
        assert_eq!(out.len(), self.weights.len());
        for (e, o) in out.iter_mut().enumerate() {
            let a = if self.src_test[e] != NONE { u_s[self.src_test[e]] } else { 0.0 };
            let b = if self.dst_test[e] != NONE { u_s[self.dst_test[e]] } else { 0.0 };
            *o = self.weights[e] * (a - b);
        }
    }

    pub fn apply(&self, u_s: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.weights.len()];
        self.apply_into(u_s, &mut out);
        out
    }

    /// Full gradient `A_S u_s + H_j` of `u = (u_s; ū_j)`.
    pub fn apply_with_offset(&self, u_s: &[f64], class: usize) -> Vec<f64> {
        let mut out = self.apply(u_s);
        for (o, h) in out.iter_mut().zip(&self.offsets[class]) {
            *o += h;
        }
        out
    }

    /// `out = A_S* p`
    pub fn adjoint_into(&self, p: &[f64], out: &mut [f64]) {
        assert_eq!(p.len(), self.weights.len());
        assert_eq!(out.len(), self.num_test);
        out.iter_mut().for_each(|v| *v = 0.0);
        for (e, &pe) in p.iter().enumerate() {
            let wp = self.weights[e] * pe;
            if self.src_test[e] != NONE {
                out[self.src_test[e]] += wp;
            }
            if self.dst_test[e] != NONE {
                out[self.dst_test[e]] -= wp;
            }
        }
    }

    pub fn adjoint(&self, p: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.num_test];
        self.adjoint_into(p, &mut out);
        out
    }

    /// Worst-case operator norm `N sqrt(k - 1)`, valid for weights in `[0, 1]`.
    pub fn norm_bound(&self) -> f64 {
        self.n as f64 * ((self.k.max(1) - 1) as f64).sqrt()
    }

    /// Power-iteration estimate of `‖A_S‖₂` from a fixed random start. The
    /// running estimate never decreases with `iters` and is capped at
    /// [`norm_bound`](Self::norm_bound).
    pub fn operator_norm_estimate(&self, iters: usize, seed: u64) -> f64 {
        if self.num_test == 0 || self.weights.is_empty() {
            return 0.0;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v: Vec<f64> = (0..self.num_test).map(|_| rng.random::<f64>() - 0.5).collect();
        let mut av = vec![0.0; self.weights.len()];
        let mut best = 0.0f64;
        for _ in 0..iters.max(1) {
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                break;
            }
            v.iter_mut().for_each(|x| *x /= norm);
            self.apply_into(&v, &mut av);
            let est = av.iter().map(|x| x * x).sum::<f64>().sqrt();
            best = best.max(est);
            self.adjoint_into(&av, &mut v);
        }
        best.min(self.norm_bound())
    }
}

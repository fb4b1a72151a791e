//! The outer smoothing-and-thresholding loop.

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{DataSplit, GradientOp, Graph, LaplacianSplit};
use crate::solver::{IterRecord, ModelParams, Smoother, SolverConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum LabelKind {
    Fuzzy,
    Binary,
}

/// `N x K` matrix of per-class labeling values, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelMatrix {
    values: Vec<f64>,
    n: usize,
    k: usize,
    kind: LabelKind,
}

impl LabelMatrix {
    /// Binary matrix with row `i` equal to `e_{labels[i]}`.
    pub fn from_labels(labels: &[usize], num_classes: usize) -> Result<Self> {
        let mut values = vec![0.0; labels.len() * num_classes];
        for (i, &l) in labels.iter().enumerate() {
            if l >= num_classes {
                return Err(Error::invalid(format!(
                    "label {l} of row {i} outside 0..{num_classes}"
                )));
            }
            values[i * num_classes + l] = 1.0;
        }
        Ok(LabelMatrix {
            values,
            n: labels.len(),
            k: num_classes,
            kind: LabelKind::Binary,
        })
    }

    pub fn fuzzy(values: Vec<f64>, n: usize, num_classes: usize) -> Result<Self> {
        if values.len() != n * num_classes {
            return Err(Error::invalid(format!(
                "{} values do not form a {n} x {num_classes} matrix",
                values.len()
            )));
        }
        Ok(LabelMatrix {
            values,
            n,
            k: num_classes,
            kind: LabelKind::Fuzzy,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn num_classes(&self) -> usize {
        self.k
    }

    pub fn kind(&self) -> LabelKind {
        self.kind
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.k..(i + 1) * self.k]
    }

    pub fn get(&self, i: usize, class: usize) -> f64 {
        self.values[i * self.k + class]
    }

    /// Column `class` restricted to the given rows.
    pub fn column_at(&self, class: usize, rows: &[usize]) -> Vec<f64> {
        rows.iter().map(|&i| self.get(i, class)).collect()
    }

    /// Row-wise argmax, lowest class index on ties.
    pub fn labels(&self) -> Vec<usize> {
        (0..self.n).map(|i| argmax(self.row(i))).collect()
    }

    /// Every row is a unit basis vector.
    pub fn is_partition(&self) -> bool {
        (0..self.n).all(|i| {
            let row = self.row(i);
            row.iter().all(|&v| v == 0.0 || v == 1.0) && row.iter().filter(|&&v| v == 1.0).count() == 1
        })
    }
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = j;
        }
    }
    best
}

/// Maps every row to the nearest simplex vertex `e_i`, `i = argmax`.
pub fn threshold(fuzzy: &LabelMatrix) -> LabelMatrix {
    LabelMatrix::from_labels(&fuzzy.labels(), fuzzy.k).expect("argmax is always in range")
}

/// Overwrites the training rows with their fixed one-hot labels. Returns the
/// corrected matrix and the number of rows that changed.
pub fn enforce_training_rows(u: &LabelMatrix, split: &DataSplit) -> (LabelMatrix, usize) {
    let mut out = u.clone();
    let mut changed = 0;
    for (&id, &label) in split.train_ids().iter().zip(split.train_labels()) {
        let row = &mut out.values[id * out.k..(id + 1) * out.k];
        let target = |j: usize| if j == label { 1.0 } else { 0.0 };
        if row.iter().enumerate().any(|(j, &v)| v != target(j)) {
            changed += 1;
            row.iter_mut().enumerate().for_each(|(j, v)| *v = target(j));
        }
    }
    (out, changed)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SatConfig {
    pub params: ModelParams,
    /// Factor applied to β between outer iterations.
    pub beta_growth: f64,
    pub max_outer_iters: usize,
    pub solver: SolverConfig,
}

impl SatConfig {
    pub fn new(alpha: f64, beta: f64) -> Self {
        SatConfig {
            params: ModelParams { alpha, beta },
            beta_growth: 2.0,
            max_outer_iters: 20,
            solver: SolverConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.solver.validate()?;
        if !(self.beta_growth >= 1.0 && self.beta_growth.is_finite()) {
            return Err(Error::invalid(format!("beta growth must be >= 1, got {}", self.beta_growth)));
        }
        if self.max_outer_iters == 0 {
            return Err(Error::invalid("max outer iterations must be at least 1"));
        }
        Ok(())
    }
}

/// Record of one outer iteration.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OuterRecord {
    pub iter: usize,
    pub beta: f64,
    /// Rows whose label differs from the previous partition.
    pub label_changes: usize,
    /// Accuracy over all points, when ground truth was supplied.
    pub accuracy: Option<f64>,
    pub inner_iters: Vec<usize>,
    pub inner_converged: Vec<bool>,
    pub smoothing_secs: f64,
    pub threshold_secs: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SatOutcome {
    pub labels: LabelMatrix,
    /// Accuracy of the initial partition, when ground truth was supplied.
    pub init_accuracy: Option<f64>,
    pub history: Vec<OuterRecord>,
    pub converged: bool,
    /// The loop hit `max_outer_iters` without reaching a stationary partition.
    pub truncated: bool,
}

impl SatOutcome {
    pub fn outer_iterations(&self) -> usize {
        self.history.len()
    }
}

/// Optional inputs of [`run_sat`].
#[derive(Default)]
pub struct SatHooks<'a> {
    /// Ground-truth labels for the accuracy trace.
    pub truth: Option<&'a [usize]>,
    /// Receives every inner primal-dual iteration (tagged with the outer
    /// iteration index).
    pub diagnostics: Option<&'a (dyn Fn(usize, &IterRecord) + Sync)>,
}

/// Runs the smoothing-and-thresholding iteration from `init` until the
/// partition stops changing.
pub fn run_sat(
    graph: &Graph,
    split: &DataSplit,
    init: &LabelMatrix,
    cfg: &SatConfig,
    hooks: SatHooks<'_>,
) -> Result<SatOutcome> {
    cfg.validate()?;
    let k = split.num_classes();
    if init.n() != graph.n() || init.num_classes() != k {
        return Err(Error::invalid(format!(
            "initial labeling is {} x {}, expected {} x {k}",
            init.n(),
            init.num_classes(),
            graph.n()
        )));
    }
    if !init.is_partition() {
        return Err(Error::invalid("initial labeling must be a binary partition"));
    }
    let init_labels = init.labels();
    if let Some(id) = split
        .train_ids()
        .iter()
        .zip(split.train_labels())
        .find(|&(&id, &l)| init_labels[id] != l)
        .map(|(&id, _)| id)
    {
        return Err(Error::invalid(format!(
            "initial labeling disagrees with the training label of node {id}"
        )));
    }
    if let Some(t) = hooks.truth {
        if t.len() != graph.n() {
            return Err(Error::invalid("ground truth length differs from node count"));
        }
    }

    let lap = LaplacianSplit::assemble(graph, split)?;
    let grad = GradientOp::new(graph, split)?;
    let smoother = Smoother::new(&lap, &grad, split, graph.n(), graph.k(), &cfg.solver);
    let test_ids = split.test_ids();

    let accuracy_of = |m: &LabelMatrix| {
        hooks.truth.map(|t| {
            let labels = m.labels();
            labels.iter().zip(t).filter(|(a, b)| a == b).count() as f64 / t.len() as f64
        })
    };

    let mut current = init.clone();
    let init_accuracy = accuracy_of(&current);
    let mut history = Vec::new();
    let mut beta = cfg.params.beta;
    let mut converged = false;

    for outer in 0..cfg.max_outer_iters {
        let params = ModelParams {
            alpha: cfg.params.alpha,
            beta,
        };
        let start = Instant::now();
        let solved: Vec<_> = (0..k)
            .into_par_iter()
            .map(|class| {
                let u_hat = current.column_at(class, test_ids);
                match hooks.diagnostics {
                    Some(sink) => {
                        let mut obs = |r: &IterRecord| sink(outer, r);
                        smoother.solve(class, &u_hat, params, &cfg.solver, None, Some(&mut obs))
                    }
                    None => smoother.solve(class, &u_hat, params, &cfg.solver, None, None),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let smoothing_secs = start.elapsed().as_secs_f64();

        let start = Instant::now();
        let mut values = vec![0.0; graph.n() * k];
        for (class, report) in solved.iter().enumerate() {
            for (&id, &v) in test_ids.iter().zip(&report.solution) {
                values[id * k + class] = v;
            }
        }
        for (&id, &label) in split.train_ids().iter().zip(split.train_labels()) {
            values[id * k + label] = 1.0;
        }
        let fuzzy = LabelMatrix::fuzzy(values, graph.n(), k)?;
        let next = threshold(&fuzzy);
        let threshold_secs = start.elapsed().as_secs_f64();

        let old = current.labels();
        let new = next.labels();
        let label_changes = old.iter().zip(&new).filter(|(a, b)| a != b).count();
        debug_assert!(next.is_partition());

        history.push(OuterRecord {
            iter: outer + 1,
            beta,
            label_changes,
            accuracy: accuracy_of(&next),
            inner_iters: solved.iter().map(|r| r.iterations).collect(),
            inner_converged: solved.iter().map(|r| r.converged).collect(),
            smoothing_secs,
            threshold_secs,
        });
        current = next;

        if label_changes == 0 {
            converged = true;
            break;
        }
        if outer + 1 < cfg.max_outer_iters {
            beta *= cfg.beta_growth;
        }
    }

    Ok(SatOutcome {
        labels: current,
        init_accuracy,
        history,
        converged,
        truncated: !converged,
    })
}

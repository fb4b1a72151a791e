//! Warm-start labelings.
//!
//! Any rough classification works as a starting point; the smoothing stage
//! only uses it as a fidelity anchor. Every initializer returns a binary
//! partition whose training rows equal the known labels.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::weights::squared_distance;
use crate::graph::{DataSplit, PointCloud};
use crate::pipeline::{enforce_training_rows, LabelMatrix};

#[derive(Clone, Debug, PartialEq)]
pub enum InitMethod {
    Random { seed: u64 },
    NearestNeighbor,
    /// One-vs-rest linear SVM with penalty `c`.
    LinearOvr { max_passes: usize, c: f64, seed: u64 },
    External(PathBuf),
}

impl InitMethod {
    pub fn linear_ovr(seed: u64) -> Self {
        InitMethod::LinearOvr {
            max_passes: 1000,
            c: 1.0,
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InitOutcome {
    pub labels: LabelMatrix,
    /// Set when the initializer had to fall back to a degenerate answer.
    pub warning: Option<String>,
    /// Training rows of an external labeling that were overwritten.
    pub corrected_rows: usize,
}

impl InitOutcome {
    fn plain(labels: LabelMatrix) -> Self {
        InitOutcome {
            labels,
            warning: None,
            corrected_rows: 0,
        }
    }
}

pub fn initialize(method: &InitMethod, cloud: &PointCloud, split: &DataSplit) -> Result<InitOutcome> {
    if cloud.len() != split.n() {
        return Err(Error::invalid(format!(
            "split covers {} nodes but the cloud has {}",
            split.n(),
            cloud.len()
        )));
    }
    match method {
        InitMethod::Random { seed } => Ok(InitOutcome::plain(init_random(split, *seed))),
        InitMethod::NearestNeighbor => Ok(InitOutcome::plain(init_nearest_neighbor(cloud, split))),
        InitMethod::LinearOvr { max_passes, c, seed } => init_linear_ovr(cloud, split, *max_passes, *c, *seed),
        InitMethod::External(path) => init_external(path, split),
    }
}

fn with_training_rows(mut labels: Vec<usize>, split: &DataSplit) -> LabelMatrix {
    for (&id, &l) in split.train_ids().iter().zip(split.train_labels()) {
        labels[id] = l;
    }
    LabelMatrix::from_labels(&labels, split.num_classes()).expect("labels are in range")
}

/// Test rows drawn uniformly from the classes.
pub fn init_random(split: &DataSplit, seed: u64) -> LabelMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels = vec![0; split.n()];
    for &id in split.test_ids() {
        labels[id] = rng.random_range(0..split.num_classes());
    }
    with_training_rows(labels, split)
}

/// Label of the Euclidean-nearest training point; ties go to the lowest
/// training id.
pub fn init_nearest_neighbor(cloud: &PointCloud, split: &DataSplit) -> LabelMatrix {
    let train = split.train_ids();
    let labels: Vec<usize> = (0..cloud.len())
        .into_par_iter()
        .map(|i| {
            if let Some(l) = split.label_of(i) {
                return l;
            }
            let mut best = (f64::INFINITY, 0usize);
            for (t, &id) in train.iter().enumerate() {
                let d = squared_distance(cloud.point(i), cloud.point(id));
                if d < best.0 {
                    best = (d, t);
                }
            }
            split.train_labels()[best.1]
        })
        .collect();
    with_training_rows(labels, split)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Dual coordinate descent for the L2-regularized hinge-loss SVM
/// `min ½‖w‖² + C Σ max(0, 1 - yᵢ w·xᵢ)`. Features carry a trailing 1 for the
/// bias.
fn svm_dual_cd(features: &[Vec<f64>], targets: &[f64], c: f64, max_passes: usize, seed: u64) -> Vec<f64> {
    const EPS: f64 = 1e-3;
    let dim = features[0].len();
    let q: Vec<f64> = features.iter().map(|x| dot(x, x)).collect();
    let mut w = vec![0.0; dim];
    let mut a = vec![0.0; features.len()];
    let mut order: Vec<usize> = (0..features.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..max_passes {
        order.shuffle(&mut rng);
        let (mut pg_max, mut pg_min) = (f64::NEG_INFINITY, f64::INFINITY);
        for &i in &order {
            let g = targets[i] * dot(&w, &features[i]) - 1.0;
            let pg = if a[i] == 0.0 {
                g.min(0.0)
            } else if a[i] == c {
                g.max(0.0)
            } else {
                g
            };
            pg_max = pg_max.max(pg);
            pg_min = pg_min.min(pg);
            if pg != 0.0 && q[i] > 0.0 {
                let old = a[i];
                a[i] = (old - g / q[i]).clamp(0.0, c);
                let step = (a[i] - old) * targets[i];
                for (wj, xj) in w.iter_mut().zip(&features[i]) {
                    *wj += step * xj;
                }
            }
        }
        if pg_max - pg_min < EPS {
            break;
        }
    }
    w
}

fn with_bias(x: &[f64]) -> Vec<f64> {
    let mut v = x.to_vec();
    v.push(1.0);
    v
}

/// Linear one-vs-rest SVM trained on the training points.
pub fn init_linear_ovr(
    cloud: &PointCloud,
    split: &DataSplit,
    max_passes: usize,
    c: f64,
    seed: u64,
) -> Result<InitOutcome> {
    if max_passes == 0 {
        return Err(Error::invalid("linear initializer needs at least one pass"));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::invalid(format!("SVM penalty must be > 0, got {c}")));
    }
    let k = split.num_classes();
    let train = split.train_ids();
    let labels = split.train_labels();

    let distinct: Vec<usize> = {
        let mut v = labels.to_vec();
        v.sort_unstable();
        v.dedup();
        v
    };
    let constant_features = train
        .iter()
        .all(|&id| cloud.point(id) == cloud.point(train[0]));
    if distinct.len() < 2 || constant_features {
        let fallback = distinct[0];
        let warning = if distinct.len() < 2 {
            format!("training set has a single class; labeling everything as class {fallback}")
        } else {
            format!("training features are all identical; labeling test points as class {fallback}")
        };
        log::warn!("{warning}");
        let labels = with_training_rows(vec![fallback; split.n()], split);
        return Ok(InitOutcome {
            labels,
            warning: Some(warning),
            corrected_rows: 0,
        });
    }

    let features: Vec<Vec<f64>> = train.iter().map(|&id| with_bias(cloud.point(id))).collect();
    let scorers: Vec<Vec<f64>> = (0..k)
        .into_par_iter()
        .map(|class| {
            let targets: Vec<f64> = labels.iter().map(|&l| if l == class { 1.0 } else { -1.0 }).collect();
            svm_dual_cd(&features, &targets, c, max_passes, seed.wrapping_add(class as u64))
        })
        .collect();

    let predicted: Vec<usize> = (0..cloud.len())
        .into_par_iter()
        .map(|i| {
            let x = with_bias(cloud.point(i));
            let mut best = (f64::NEG_INFINITY, 0);
            for (class, w) in scorers.iter().enumerate() {
                let s = dot(w, &x);
                if s > best.0 {
                    best = (s, class);
                }
            }
            best.1
        })
        .collect();
    Ok(InitOutcome::plain(with_training_rows(predicted, split)))
}

/// Reads one integer label per line in node order. Training rows that disagree
/// with the known labels are overwritten and counted.
pub fn init_external(path: &Path, split: &DataSplit) -> Result<InitOutcome> {
    let text = fs::read_to_string(path)?;
    let labels = parse_label_lines(&text, split.num_classes())?;
    if labels.len() != split.n() {
        return Err(Error::parse(
            labels.len() + 1,
            None,
            format!("expected {} labels, found {}", split.n(), labels.len()),
        ));
    }
    let raw = LabelMatrix::from_labels(&labels, split.num_classes())?;
    let (labels, corrected_rows) = enforce_training_rows(&raw, split);
    Ok(InitOutcome {
        labels,
        warning: None,
        corrected_rows,
    })
}

/// Parses a label-per-line file; blank trailing lines are ignored.
pub fn parse_label_lines(text: &str, num_classes: usize) -> Result<Vec<usize>> {
    let mut labels = Vec::new();
    let lines: Vec<&str> = text.lines().collect();
    let last = lines.iter().rposition(|l| !l.trim().is_empty()).map_or(0, |p| p + 1);
    for (i, line) in lines[..last].iter().enumerate() {
        let lineno = i + 1;
        let tok = line.trim();
        let label: usize = tok
            .parse()
            .map_err(|_| Error::parse(lineno, None, format!("not a class label: {tok:?}")))?;
        if label >= num_classes {
            return Err(Error::parse(
                lineno,
                None,
                format!("label {label} outside 0..{num_classes}"),
            ));
        }
        labels.push(label);
    }
    Ok(labels)
}

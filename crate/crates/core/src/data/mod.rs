//! Datasets: the synthetic three-moon cloud, CSV and IDX loaders, and
//! training-set sampling.

mod idx;
mod sampling;
mod tabular;
mod threemoon;

pub use idx::{load_mnist_idx, load_mnist_pairs, read_idx_images, read_idx_labels};
pub use sampling::{sample_training, SamplingPlan};
pub use tabular::{load_csv, read_csv, write_csv, write_label_mapping, CsvDataset, LabelColumn};
pub use threemoon::{gen_three_moon, gen_three_moon_with_noise, THREE_MOON_DIM, THREE_MOON_NOISE, THREE_MOON_PER_CLASS};

use crate::error::{Error, Result};
use crate::graph::PointCloud;

/// A point cloud with ground-truth classes `0..num_classes`.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    pub cloud: PointCloud,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub name: String,
}

impl LabeledDataset {
    pub fn new(cloud: PointCloud, labels: Vec<usize>, num_classes: usize, name: impl Into<String>) -> Result<Self> {
        if labels.len() != cloud.len() {
            return Err(Error::invalid(format!(
                "{} labels for {} points",
                labels.len(),
                cloud.len()
            )));
        }
        let counts = class_counts(&labels, num_classes)?;
        if let Some(c) = counts.iter().position(|&n| n == 0) {
            return Err(Error::invalid(format!("class {c} has no points")));
        }
        Ok(LabeledDataset {
            cloud,
            labels,
            num_classes,
            name: name.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        class_counts(&self.labels, self.num_classes).expect("labels validated on construction")
    }
}

fn class_counts(labels: &[usize], k: usize) -> Result<Vec<usize>> {
    let mut counts = vec![0; k];
    for &l in labels {
        *counts
            .get_mut(l)
            .ok_or_else(|| Error::invalid(format!("label {l} outside 0..{k}")))? += 1;
    }
    Ok(counts)
}

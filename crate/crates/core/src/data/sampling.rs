use rand::seq::{index, IndexedRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::LabeledDataset;
use crate::error::{Error, Result};
use crate::graph::DataSplit;

/// How many training points to draw.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SamplingPlan {
    /// Without replacement from all points, then repaired so that every class
    /// has at least one point.
    Uniform { total: usize, seed: u64 },
    /// Exactly `counts[c]` points of class `c`.
    PerClass { counts: Vec<usize>, seed: u64 },
}

impl SamplingPlan {
    pub fn seed(&self) -> u64 {
        match self {
            SamplingPlan::Uniform { seed, .. } | SamplingPlan::PerClass { seed, .. } => *seed,
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        match self {
            SamplingPlan::Uniform { total, .. } => SamplingPlan::Uniform { total: *total, seed },
            SamplingPlan::PerClass { counts, .. } => SamplingPlan::PerClass {
                counts: counts.clone(),
                seed,
            },
        }
    }
}

pub fn sample_training(ds: &LabeledDataset, plan: &SamplingPlan) -> Result<DataSplit> {
    let n = ds.len();
    let k = ds.num_classes;
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &l) in ds.labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed());
    let chosen = match plan {
        SamplingPlan::Uniform { total, .. } => {
            if *total < k || *total >= n {
                return Err(Error::invalid(format!(
                    "uniform sample of {total} needs {k} <= total < {n}"
                )));
            }
            let mut picked = index::sample(&mut rng, n, *total).into_vec();
            let mut have = vec![0usize; k];
            for &i in &picked {
                have[ds.labels[i]] += 1;
            }
            for c in 0..k {
                if have[c] > 0 {
                    continue;
                }
                // replace a point of the most represented class
                let donor = (0..k).max_by_key(|&d| (have[d], std::cmp::Reverse(d))).expect("k >= 1");
                let slots: Vec<usize> = (0..picked.len()).filter(|&s| ds.labels[picked[s]] == donor).collect();
                let slot = *slots.choose(&mut rng).expect("donor class is represented");
                picked[slot] = *by_class[c].choose(&mut rng).expect("every class is present");
                have[donor] -= 1;
                have[c] += 1;
            }
            picked
        }
        SamplingPlan::PerClass { counts, .. } => {
            if counts.len() != k {
                return Err(Error::invalid(format!("{} per-class counts for {k} classes", counts.len())));
            }
            let mut picked = Vec::new();
            for (c, &want) in counts.iter().enumerate() {
                if want == 0 || want > by_class[c].len() {
                    return Err(Error::invalid(format!(
                        "class {c} has {} points, cannot draw {want}",
                        by_class[c].len()
                    )));
                }
                picked.extend(by_class[c].choose_multiple(&mut rng, want).copied());
            }
            if picked.len() >= n {
                return Err(Error::invalid("per-class counts leave no test points"));
            }
            picked
        }
    };
    let train = chosen.into_iter().map(|i| (i, ds.labels[i])).collect();
    DataSplit::new(n, k, train)
}

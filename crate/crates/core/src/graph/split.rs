use super::Graph;
use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// Position of a node inside the test block or the training block.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Slot {
    Test(usize),
    Train(usize),
}

/// Partition of the nodes into labelled training points `T` and test points
/// `S = V \ T`. Both id lists are kept in ascending order.
#[derive(Clone, Debug, PartialEq)]
pub struct DataSplit {
    n: usize,
    num_classes: usize,
    train_ids: Vec<usize>,
    train_labels: Vec<usize>,
    test_ids: Vec<usize>,
    slots: Vec<Slot>,
}

impl DataSplit {
    /// `train` holds `(node id, label)` pairs in any order.
    pub fn new(n: usize, num_classes: usize, mut train: Vec<(usize, usize)>) -> Result<Self> {
        if num_classes == 0 {
            return Err(Error::invalid("need at least one class"));
        }
        train.sort_unstable();
        let mut seen_class = vec![false; num_classes];
        for w in train.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::invalid(format!("training id {} listed twice", w[0].0)));
            }
        }
        for &(id, label) in &train {
            if id >= n {
                return Err(Error::invalid(format!("training id {id} out of range for {n} nodes")));
            }
            if label >= num_classes {
                return Err(Error::invalid(format!(
                    "training label {label} of node {id} outside 0..{num_classes}"
                )));
            }
            seen_class[label] = true;
        }
        if let Some(c) = seen_class.iter().position(|&s| !s) {
            return Err(Error::invalid(format!("class {c} has no training point")));
        }

        let mut slots = vec![Slot::Test(0); n];
        for (i, &(id, _)) in train.iter().enumerate() {
            slots[id] = Slot::Train(i);
        }
        let mut test_ids = Vec::with_capacity(n - train.len());
        for (id, slot) in slots.iter_mut().enumerate() {
            if let Slot::Test(_) = slot {
                *slot = Slot::Test(test_ids.len());
                test_ids.push(id);
            }
        }
        Ok(DataSplit {
            n,
            num_classes,
            train_ids: train.iter().map(|t| t.0).collect(),
            train_labels: train.iter().map(|t| t.1).collect(),
            test_ids,
            slots,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn train_ids(&self) -> &[usize] {
        &self.train_ids
    }

    pub fn train_labels(&self) -> &[usize] {
        &self.train_labels
    }

    pub fn test_ids(&self) -> &[usize] {
        &self.test_ids
    }

    pub fn num_train(&self) -> usize {
        self.train_ids.len()
    }

    pub fn num_test(&self) -> usize {
        self.test_ids.len()
    }

    pub fn slot(&self, id: usize) -> Slot {
        self.slots[id]
    }

    /// Training label of `id`, if it is a training point.
    pub fn label_of(&self, id: usize) -> Option<usize> {
        match self.slots[id] {
            Slot::Train(i) => Some(self.train_labels[i]),
            Slot::Test(_) => None,
        }
    }

    /// One-hot training indicator of class `class` (the fixed `ū_j`).
    pub fn train_indicator(&self, class: usize) -> Vec<f64> {
        self.train_labels
            .iter()
            .map(|&l| if l == class { 1.0 } else { 0.0 })
            .collect()
    }
}

/// Block decomposition of the Laplacian induced by a train/test split.
///
/// With nodes ordered test-first, `L = [[L_S + L_1, L_3], [L_3ᵀ, L̄ + L_2]]`,
/// where `L_S` and `L̄` collect test–test and train–train edges, and the
/// cross edges contribute the diagonal blocks `L_1`, `L_2` and the coupling
/// `L_3`.
#[derive(Clone, Debug, PartialEq)]
pub struct LaplacianSplit {
    ls: CsrMatrix,
    l1: Vec<f64>,
    l2: Vec<f64>,
    l3: CsrMatrix,
    lbar: CsrMatrix,
}

impl LaplacianSplit {
    pub fn assemble(graph: &Graph, split: &DataSplit) -> Result<Self> {
        if graph.n() != split.n() {
            return Err(Error::invalid(format!(
                "split covers {} nodes but the graph has {}",
                split.n(),
                graph.n()
            )));
        }
        let (ns, nt) = (split.num_test(), split.num_train());
        let mut ls = Vec::new();
        let mut lbar = Vec::new();
        let mut l3 = Vec::new();
        let mut l1 = vec![0.0; ns];
        let mut l2 = vec![0.0; nt];
        let w = graph.affinity();
        for i in 0..graph.n() {
            for (j, wij) in w.row(i).filter(|&(j, _)| j > i) {
                match (split.slot(i), split.slot(j)) {
                    (Slot::Test(a), Slot::Test(b)) => {
                        ls.extend([(a, a, wij), (b, b, wij), (a, b, -wij), (b, a, -wij)]);
                    }
                    (Slot::Train(a), Slot::Train(b)) => {
                        lbar.extend([(a, a, wij), (b, b, wij), (a, b, -wij), (b, a, -wij)]);
                    }
                    (Slot::Test(a), Slot::Train(b)) | (Slot::Train(b), Slot::Test(a)) => {
                        l1[a] += wij;
                        l2[b] += wij;
                        l3.push((a, b, -wij));
                    }
                }
            }
        }
        Ok(LaplacianSplit {
            ls: CsrMatrix::from_triplets(ns, ns, &ls),
            l1,
            l2,
            l3: CsrMatrix::from_triplets(ns, nt, &l3),
            lbar: CsrMatrix::from_triplets(nt, nt, &lbar),
        })
    }

    /// Test–test block `L_S`.
    pub fn ls(&self) -> &CsrMatrix {
        &self.ls
    }

    /// Diagonal of `L_1`.
    pub fn l1(&self) -> &[f64] {
        &self.l1
    }

    /// Diagonal of `L_2`.
    pub fn l2(&self) -> &[f64] {
        &self.l2
    }

    /// Cross block `L_3` (test rows, training columns).
    pub fn l3(&self) -> &CsrMatrix {
        &self.l3
    }

    pub fn lbar(&self) -> &CsrMatrix {
        &self.lbar
    }

    pub fn num_test(&self) -> usize {
        self.ls.rows()
    }

    /// Quadratic block used by the smoothing model: `L_S`, or the exact test
    /// block `L_S + L_1` of the full Laplacian.
    pub fn quadratic_block(&self, exact: bool) -> CsrMatrix {
        if exact {
            self.ls.add_diagonal(&self.l1)
        } else {
            self.ls.clone()
        }
    }

    /// Reassembles the full Laplacian as a dense matrix in the original node
    /// order.
    pub fn to_dense_full(&self, split: &DataSplit) -> Vec<Vec<f64>> {
        let n = split.n();
        let mut out = vec![vec![0.0; n]; n];
        let (test, train) = (split.test_ids(), split.train_ids());
        for a in 0..self.ls.rows() {
            for (b, v) in self.ls.row(a) {
                out[test[a]][test[b]] += v;
            }
            out[test[a]][test[a]] += self.l1[a];
            for (b, v) in self.l3.row(a) {
                out[test[a]][train[b]] += v;
                out[train[b]][test[a]] += v;
            }
        }
        for a in 0..self.lbar.rows() {
            for (b, v) in self.lbar.row(a) {
                out[train[a]][train[b]] += v;
            }
            out[train[a]][train[a]] += self.l2[a];
        }
        out
    }
}

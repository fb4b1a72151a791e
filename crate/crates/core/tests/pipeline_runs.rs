use std::io::Write;

use sat_core::bench::{accuracy, AccuracyScope};
use sat_core::data::{gen_three_moon, sample_training, SamplingPlan};
use sat_core::init::{initialize, InitMethod};
use sat_core::pipeline::SatHooks;
use sat_core::{build_graph, run_sat, GraphConfig, LabelMatrix, SatConfig, WeightKind};

fn moon_setup(seed: u64) -> (sat_core::data::LabeledDataset, sat_core::Graph, sat_core::DataSplit) {
    let ds = gen_three_moon(0);
    let g = build_graph(&ds.cloud, &GraphConfig::new(10, WeightKind::rbf_with_denominator(6.0))).unwrap();
    let split = sample_training(&ds, &SamplingPlan::Uniform { total: 75, seed }).unwrap();
    (ds, g, split)
}

#[test]
fn outcome_invariants_and_stationarity() {
    let (ds, g, split) = moon_setup(1);
    let init = initialize(&InitMethod::linear_ovr(1), &ds.cloud, &split).unwrap();
    let cfg = SatConfig::new(1.0, 1e-2);
    let hooks = SatHooks { truth: Some(&ds.labels), diagnostics: None };
    let out = run_sat(&g, &split, &init.labels, &cfg, hooks).unwrap();

    assert!(out.labels.is_partition());
    let labels = out.labels.labels();
    for (&id, &l) in split.train_ids().iter().zip(split.train_labels()) {
        assert_eq!(labels[id], l);
    }
    assert!(out.converged && !out.truncated);
    assert_eq!(out.history.last().unwrap().label_changes, 0);
    for (i, rec) in out.history.iter().enumerate() {
        assert_eq!(rec.beta, 1e-2 * 2f64.powi(i as i32));
    }
    let final_acc = accuracy(&out.labels, &ds.labels, &split, AccuracyScope::All);
    assert_eq!(out.history.last().unwrap().accuracy, Some(final_acc));

    let mut again = cfg.clone();
    again.params.beta = out.history.last().unwrap().beta;
    let rerun = run_sat(&g, &split, &out.labels, &again, SatHooks::default()).unwrap();
    assert_eq!(rerun.history[0].label_changes, 0);
    assert_eq!(rerun.labels, out.labels);
}

#[test]
fn runs_are_deterministic() {
    let (ds, g, split) = moon_setup(2);
    let init = initialize(&InitMethod::Random { seed: 2 }, &ds.cloud, &split).unwrap();
    let cfg = SatConfig::new(1.0, 1e-2);
    let a = run_sat(&g, &split, &init.labels, &cfg, SatHooks::default()).unwrap();
    let b = run_sat(&g, &split, &init.labels, &cfg, SatHooks::default()).unwrap();
    assert_eq!(a.labels, b.labels);
    assert_eq!(
        a.history.iter().map(|r| r.label_changes).collect::<Vec<_>>(),
        b.history.iter().map(|r| r.label_changes).collect::<Vec<_>>()
    );
}

#[test]
fn iteration_cap_sets_the_truncation_flag() {
    let (ds, g, split) = moon_setup(3);
    let init = initialize(&InitMethod::Random { seed: 3 }, &ds.cloud, &split).unwrap();
    let mut cfg = SatConfig::new(1.0, 1e-2);
    cfg.max_outer_iters = 1;
    let out = run_sat(&g, &split, &init.labels, &cfg, SatHooks::default()).unwrap();
    assert_eq!(out.outer_iterations(), 1);
    assert!(out.history[0].label_changes > 0);
    assert!(out.truncated && !out.converged);
    assert_eq!(out.history[0].beta, 1e-2);
}

#[test]
fn initializers_respect_training_rows() {
    let (ds, _, split) = moon_setup(4);
    for method in [InitMethod::Random { seed: 1 }, InitMethod::NearestNeighbor, InitMethod::linear_ovr(1)] {
        let out = initialize(&method, &ds.cloud, &split).unwrap();
        let labels = out.labels.labels();
        for (&id, &l) in split.train_ids().iter().zip(split.train_labels()) {
            assert_eq!(labels[id], l, "{method:?}");
        }
        let acc = accuracy(&out.labels, &ds.labels, &split, AccuracyScope::All);
        if !matches!(method, InitMethod::Random { .. }) {
            assert!(acc > 1.0 / 3.0, "{method:?} accuracy {acc}");
        }
    }
}

#[test]
fn external_labels_are_corrected_on_training_rows() {
    let (ds, _, split) = moon_setup(5);
    let mut f = tempfile::NamedTempFile::new().unwrap();
    for i in 0..ds.len() {
        let wrong = if split.label_of(i).is_some() { (ds.labels[i] + 1) % 3 } else { ds.labels[i] };
        writeln!(f, "{wrong}").unwrap();
    }
    let out = initialize(&InitMethod::External(f.path().to_owned()), &ds.cloud, &split).unwrap();
    assert_eq!(out.corrected_rows, split.num_train());
    assert_eq!(out.labels.labels(), ds.labels);

    let mut short = tempfile::NamedTempFile::new().unwrap();
    writeln!(short, "0\n1").unwrap();
    assert!(initialize(&InitMethod::External(short.path().to_owned()), &ds.cloud, &split).is_err());
}

#[test]
fn accuracy_counting_examples() {
    let truth: Vec<usize> = (0..1500).map(|i| i % 3).collect();
    let split = sat_core::DataSplit::new(1500, 3, vec![(0, 0), (1, 1), (2, 2)]).unwrap();
    let mut pred = truth.clone();
    pred[10] = (pred[10] + 1) % 3;
    let m = LabelMatrix::from_labels(&pred, 3).unwrap();
    assert_eq!(accuracy(&m, &truth, &split, AccuracyScope::All), 1499.0 / 1500.0);
}

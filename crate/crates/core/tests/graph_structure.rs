mod common;

use common::*;
use proptest::prelude::*;
use sat_core::graph::cache;
use sat_core::{GradientOp, LaplacianSplit};

fn max_abs(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn affinity_is_symmetric_with_matching_degrees(seed in 0u64..10_000, n in 6usize..40, k in 2usize..6) {
        let g = random_graph(&mut rng(seed), n, k.min(n));
        let w = dense_affinity(&g);
        let lib = g.affinity().to_dense();
        for x in 0..n {
            prop_assert_eq!(lib[x][x], 0.0);
            for y in 0..n {
                prop_assert_eq!(lib[x][y], lib[y][x]);
                prop_assert_eq!(lib[x][y], w[(x, y)]);
            }
            let row: f64 = lib[x].iter().sum();
            prop_assert!((row - g.degrees()[x]).abs() <= 1e-12 * g.degrees()[x].max(1.0));
        }
        let lap = g.laplacian();
        for x in 0..n {
            let s: f64 = lap.row(x).map(|(_, v)| v).sum();
            prop_assert!(s.abs() <= 1e-12 * g.degrees()[x].max(1.0));
        }
    }

    #[test]
    fn every_row_has_k_minus_one_neighbours(seed in 0u64..10_000, n in 6usize..30, k in 2usize..6) {
        let g = random_graph(&mut rng(seed), n, k);
        for x in 0..n {
            let ids: Vec<usize> = g.neighbors(x).map(|(y, _)| y).collect();
            prop_assert_eq!(ids.len(), k - 1);
            prop_assert!(!ids.contains(&x));
        }
    }

    #[test]
    fn energy_counts_each_edge_once(seed in 0u64..10_000, n in 6usize..30) {
        let mut r = rng(seed);
        let g = random_graph(&mut r, n, 4);
        let u: Vec<f64> = (0..n).map(|_| r.random_range(-2.0..2.0)).collect();
        let w = dense_affinity(&g);
        let mut oracle = 0.0;
        for x in 0..n {
            for y in x + 1..n {
                oracle += 0.5 * w[(x, y)] * (u[x] - u[y]).powi(2);
            }
        }
        let e = g.dirichlet_energy(&u);
        prop_assert!((e - oracle).abs() <= 1e-10 * oracle.max(1.0));
        let quad = 0.5 * g.laplacian().quadratic_form(&u);
        prop_assert!((quad - oracle).abs() <= 1e-10 * oracle.max(1.0));
    }

    #[test]
    fn gradient_decomposes_into_test_part_and_offset(seed in 0u64..10_000, n in 8usize..30, nt in 3usize..7) {
        let mut r = rng(seed);
        let g = random_graph(&mut r, n, 4);
        let split = random_split(&mut r, n, 3, nt);
        let op = GradientOp::new(&g, &split).unwrap();
        let grad = dense_gradient(&g);
        let u_s: Vec<f64> = (0..split.num_test()).map(|_| r.random_range(-1.0..1.0)).collect();
        for class in 0..3 {
            let mut full = nalgebra::DVector::zeros(n);
            for (i, &id) in split.test_ids().iter().enumerate() {
                full[id] = u_s[i];
            }
            for (&id, &l) in split.train_ids().iter().zip(split.train_labels()) {
                full[id] = f64::from(u8::from(l == class));
            }
            let expected = &grad * full;
            prop_assert!(max_abs(&op.apply_with_offset(&u_s, class), expected.as_slice()) <= 1e-12);
        }
    }

    #[test]
    fn adjoint_identity(seed in 0u64..10_000, n in 8usize..40) {
        let mut r = rng(seed);
        let g = random_graph(&mut r, n, 5);
        let split = random_split(&mut r, n, 2, 3);
        let op = GradientOp::new(&g, &split).unwrap();
        let u: Vec<f64> = (0..op.num_test()).map(|_| r.random_range(-1.0..1.0)).collect();
        let p: Vec<f64> = (0..op.dual_len()).map(|_| r.random_range(-1.0..1.0)).collect();
        let lhs: f64 = op.apply(&u).iter().zip(&p).map(|(a, b)| a * b).sum();
        let rhs: f64 = u.iter().zip(op.adjoint(&p)).map(|(a, b)| a * b).sum();
        prop_assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0));
    }

    #[test]
    fn norm_estimate_is_bounded_and_close(seed in 0u64..10_000, n in 8usize..30) {
        let mut r = rng(seed);
        let g = random_graph(&mut r, n, 4);
        let split = random_split(&mut r, n, 2, 2);
        let op = GradientOp::new(&g, &split).unwrap();
        let grad = dense_gradient(&g);
        let a = select(&grad, &(0..grad.nrows()).collect::<Vec<_>>(), split.test_ids());
        let exact = (a.transpose() * &a).symmetric_eigenvalues().max().sqrt();
        let est = op.operator_norm_estimate(200, 1);
        prop_assert!(est <= op.norm_bound());
        prop_assert!(est <= exact * (1.0 + 1e-9));
        prop_assert!(est >= exact * 0.9);
        prop_assert!(op.operator_norm_estimate(50, 3) <= op.operator_norm_estimate(100, 3) + 1e-12);
    }

    #[test]
    fn cache_round_trip(seed in 0u64..10_000, n in 4usize..30) {
        let g = random_graph(&mut rng(seed), n, 3);
        let mut buf = Vec::new();
        cache::write_graph(&g, &mut buf).unwrap();
        prop_assert_eq!(cache::read_graph(&buf[..]).unwrap(), g);
    }
}

/// Dyadic weights keep every block sum exact in floating point.
#[test]
fn laplacian_blocks_reassemble_exactly() {
    let mut r = rng(11);
    for _ in 0..20 {
        let n = r.random_range(6..25);
        let rows = (0..n)
            .map(|x| {
                let mut ids: Vec<usize> = (0..n).filter(|&y| y != x).collect();
                for i in (1..ids.len()).rev() {
                    ids.swap(i, r.random_range(0..=i));
                }
                ids.truncate(3);
                ids.into_iter().map(|y| (y, f64::from(r.random_range(1..8u8)) / 8.0)).collect()
            })
            .collect();
        let g = sat_core::Graph::from_neighbor_lists(n, rows).unwrap();
        let split = random_split(&mut r, n, 2, 3);
        let lap = LaplacianSplit::assemble(&g, &split).unwrap();
        let full = lap.to_dense_full(&split);
        let dense = dense_laplacian(&g);
        for x in 0..n {
            for y in 0..n {
                assert_eq!(full[x][y], dense[(x, y)], "entry ({x}, {y})");
            }
        }
        let exact = lap.quadratic_block(true).to_dense();
        let s = split.test_ids();
        for (i, &x) in s.iter().enumerate() {
            for (j, &y) in s.iter().enumerate() {
                assert_eq!(exact[i][j], dense[(x, y)]);
            }
        }
    }
}

#[test]
fn theorem_bound_dominates_on_complete_graphs() {
    for n in 3..12 {
        let rows = (0..n).map(|x| (0..n).filter(|&y| y != x).map(|y| (y, 1.0)).collect()).collect();
        let g = sat_core::Graph::from_neighbor_lists(n, rows).unwrap();
        let split = sat_core::DataSplit::new(n, 1, vec![(0, 0)]).unwrap();
        let op = GradientOp::new(&g, &split).unwrap();
        assert_eq!(op.norm_bound(), n as f64 * ((n - 1) as f64).sqrt());
        assert!(op.operator_norm_estimate(100, 0) <= op.norm_bound());
    }
}

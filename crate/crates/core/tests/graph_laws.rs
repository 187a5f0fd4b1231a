mod common;

use common::*;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;
use spectral_guard::eigen::eig_dense;
use spectral_guard::graph::{aggregate_heads, build_laplacian, symmetrize, AttentionGraph, HeadAttention, LaplacianVariant};

fn matrix_strategy(max_n: usize) -> impl Strategy<Value = DMatrix<f64>> {
    (2..=max_n).prop_flat_map(|n| {
        proptest::collection::vec(0.0f64..1.0, n * n).prop_map(move |v| DMatrix::from_vec(n, n, v))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn symmetrize_is_idempotent_and_symmetric(a in matrix_strategy(12)) {
        let w = symmetrize(&a).unwrap();
        prop_assert_eq!(&w, &w.transpose());
        prop_assert_eq!(symmetrize(&w).unwrap(), w);
    }

    #[test]
    fn laplacian_rows_sum_to_zero(a in matrix_strategy(16)) {
        let g = AttentionGraph::from_weights(0, symmetrize(&a).unwrap()).unwrap();
        let l = build_laplacian(&g, LaplacianVariant::Combinatorial).unwrap();
        let ones = DVector::from_element(g.len(), 1.0);
        let r = l.matrix() * ones;
        prop_assert!(r.amax() <= 1e-12 * g.max_degree().max(1.0));
    }

    #[test]
    fn dirichlet_identity(a in matrix_strategy(16), seed in any::<u64>()) {
        let g = AttentionGraph::from_weights(0, symmetrize(&a).unwrap()).unwrap();
        let l = build_laplacian(&g, LaplacianVariant::Combinatorial).unwrap();
        let mut r = rng(seed);
        let x = DVector::from_fn(g.len(), |_, _| r.random_range(-1.0..1.0));
        let q = l.quadratic_form(&x);
        let direct = dirichlet_sum(g.weights(), &x);
        prop_assert!((q - direct).abs() <= 1e-9 * direct.abs().max(1e-12));
    }

    #[test]
    fn normalized_laplacian_spectrum_in_0_2(a in matrix_strategy(12)) {
        let g = AttentionGraph::from_weights(0, symmetrize(&a).unwrap()).unwrap();
        let l = build_laplacian(&g, LaplacianVariant::SymmetricNormalized).unwrap();
        let ev = jacobi_eigenvalues(l.matrix());
        prop_assert!(ev[0] >= -1e-9);
        prop_assert!(*ev.last().unwrap() <= 2.0 + 1e-9);
    }
}

#[test]
fn equal_mass_heads_aggregate_to_their_mean() {
    let mut r = rng(3);
    for _ in 0..50 {
        let n = r.random_range(2..10);
        let heads: Vec<_> = (0..3)
            .map(|h| HeadAttention::new(1, h, row_stochastic(&mut r, n, 0.3)).symmetrized().unwrap())
            .collect();
        let g = aggregate_heads(&heads).unwrap();
        let mean = heads.iter().fold(DMatrix::zeros(n, n), |acc, h| acc + &h.weights) / 3.0;
        assert!((g.weights() - mean).amax() < 1e-14);
    }
}

#[test]
fn zero_eigenvalues_count_components() {
    let mut r = rng(17);
    for _ in 0..200 {
        let blocks = r.random_range(1..5);
        let sizes: Vec<usize> = (0..blocks).map(|_| r.random_range(1..8)).collect();
        let g = AttentionGraph::from_weights(0, block_diagonal(&mut r, &sizes)).unwrap();
        let l = build_laplacian(&g, LaplacianVariant::Combinatorial).unwrap();
        let spec = eig_dense(&l).unwrap();
        let tol = 1e-8 * g.max_degree();
        let zeros = spec.eigenvalues().iter().filter(|v| v.abs() <= tol).count();
        assert_eq!(zeros, g.component_count(), "sizes {sizes:?}");
        assert_eq!(g.component_count(), blocks);
    }
}

#[test]
fn dense_spectrum_matches_jacobi_oracle() {
    let mut r = rng(5);
    for _ in 0..100 {
        let n = r.random_range(2..24);
        // Random symmetric diagonally dominant matrix.
        let mut a: DMatrix<f64> = DMatrix::from_fn(n, n, |_, _| r.random_range(-1.0..1.0));
        a = (&a + a.transpose()) * 0.5;
        for i in 0..n {
            let off: f64 = (0..n).filter(|&j| j != i).map(|j| a[(i, j)].abs()).sum();
            a[(i, i)] = off + r.random::<f64>();
        }
        let spec = spectral_guard::eigen::eig_dense_matrix(&a).unwrap();
        let oracle = jacobi_eigenvalues(&a);
        for (x, y) in spec.eigenvalues().iter().zip(&oracle) {
            assert!((x - y).abs() <= 1e-8, "{x} vs {y}");
        }
        assert!(spec.reconstruction_error(&a) <= 1e-6);
        assert!(spec.orthonormality_error() <= 1e-10);
    }
}

#[test]
fn gershgorin_bound_on_attention_graphs() {
    let mut r = rng(23);
    for _ in 0..100 {
        let n = r.random_range(4..40);
        let g = random_attention_graph(&mut r, n, 2);
        let l = build_laplacian(&g, LaplacianVariant::Combinatorial).unwrap();
        let spec = eig_dense(&l).unwrap();
        assert!(spec.lambda_max().unwrap() <= 2.0 * g.max_degree() + 1e-8);
    }
}

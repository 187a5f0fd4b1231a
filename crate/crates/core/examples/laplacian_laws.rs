//! Builds the attention graph of a toy layer and checks the basic
//! Laplacian facts on it: rows sum to zero, the spectrum is nonnegative,
//! and x'Lx equals the weighted sum of squared differences.

use nalgebra::{DMatrix, DVector};
use spectral_guard::eigen::eig_dense;
use spectral_guard::graph::{aggregate_heads, build_laplacian, HeadAttention, LaplacianVariant};

fn main() -> spectral_guard::Result<()> {
    // Two heads over five tokens: one attends locally, one to the first token.
    let local = DMatrix::from_fn(5, 5, |i, j| match i.abs_diff(j) {
        0 => 0.5,
        1 => 0.25,
        _ => 0.0,
    });
    let local = DMatrix::from_fn(5, 5, |i, j| local[(i, j)] / local.row(i).sum());
    let sink = DMatrix::from_fn(5, 5, |_, j| if j == 0 { 0.8 } else { 0.05 });

    let heads = [
        HeadAttention::new(0, 0, local).symmetrized()?,
        HeadAttention::new(0, 1, sink).symmetrized()?,
    ];
    let graph = aggregate_heads(&heads)?;
    println!("degrees: {:.3?}", graph.degrees().as_slice());

    for variant in [LaplacianVariant::Combinatorial, LaplacianVariant::SymmetricNormalized] {
        let l = build_laplacian(&graph, variant)?;
        let spectrum = eig_dense(&l)?;
        println!("{variant:?} spectrum: {:.4?}", spectrum.eigenvalues());
    }

    let l = build_laplacian(&graph, LaplacianVariant::Combinatorial)?;
    let ones = DVector::from_element(5, 1.0);
    println!("max |L 1| = {:.2e}", (l.matrix() * ones).amax());

    let x: DVector<f64> = DVector::from_vec(vec![1.0, -0.5, 2.0, 0.0, 0.3]);
    let w = graph.weights();
    let mut direct = 0.0;
    for i in 0..5 {
        for j in 0..5 {
            direct += 0.5 * w[(i, j)] * (x[i] - x[j]).powi(2);
        }
    }
    println!("x'Lx = {:.6}, half-sum = {direct:.6}", l.quadratic_form(&x));
    Ok(())
}

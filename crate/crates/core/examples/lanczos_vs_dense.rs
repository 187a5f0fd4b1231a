//! Compares the partial Lanczos solver with the dense solver on the
//! Laplacian of a long synthetic sequence.

use std::time::Instant;

use spectral_guard::eigen::{eig_dense, eig_partial, spectral_extremes};
use spectral_guard::graph::{build_laplacian, LaplacianVariant};
use spectral_guard::synth::{generate_sample, SynthSpec};
use spectral_guard::Label;

fn main() -> spectral_guard::Result<()> {
    let n: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(400);
    let spec = SynthSpec {
        n_tokens: n,
        n_layers: 1,
        coherent_block_count: 8,
        ..SynthSpec::default()
    };
    let trace = generate_sample(&spec, 0, Label::Valid)?;
    let l = build_laplacian(&trace.layer_graph(0)?, LaplacianVariant::Combinatorial)?;

    let t = Instant::now();
    let dense = eig_dense(&l)?;
    let dense_time = t.elapsed();

    let t = Instant::now();
    let partial = eig_partial(&l, 3, 1)?;
    let partial_time = t.elapsed();

    let dv = dense.eigenvalues();
    let pv = partial.eigenvalues();
    println!("N = {n}");
    println!("dense   ({dense_time:>10.2?}): lambda_2 = {:.12}, lambda_N = {:.12}", dv[1], dv[n - 1]);
    println!("lanczos ({partial_time:>10.2?}): lambda_2 = {:.12}, lambda_N = {:.12}", pv[1], pv[3]);
    println!("relative gaps: {:.1e}, {:.1e}", (pv[1] - dv[1]).abs() / dv[1], (pv[3] - dv[n - 1]).abs() / dv[n - 1]);

    let (l2, ln) = spectral_extremes(&l)?;
    println!("spectral_extremes picks {}: ({l2:.12}, {ln:.12})", if n > 256 { "lanczos" } else { "dense" });
    Ok(())
}

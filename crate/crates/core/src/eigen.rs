//! Symmetric eigensolvers: a dense full decomposition and a Lanczos partial
//! solver for a handful of extreme eigenpairs.
//!
//! Output ordering is fixed: eigenvalues ascending (stable for ties) and each
//! eigenvector's largest-magnitude entry made positive, so repeated runs on
//! the same matrix produce identical output.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::Laplacian;

/// Largest N for which [`spectral_extremes`] uses the dense solver.
pub const DENSE_LIMIT: usize = 256;

#[derive(Debug, Clone)]
pub struct Spectrum {
    eigenvalues: Vec<f64>,
    eigenvectors: DMatrix<f64>,
    smallest: usize,
    largest: usize,
}

impl Spectrum {
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// N x k, one eigenvector per column, same order as `eigenvalues`.
    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    /// Dimension of the matrix the spectrum was computed from.
    pub fn dim(&self) -> usize {
        self.eigenvectors.nrows()
    }

    pub fn is_complete(&self) -> bool {
        self.eigenvalues.len() == self.dim()
    }

    /// Number of leading entries that are the smallest eigenvalues of the matrix.
    pub fn smallest_count(&self) -> usize {
        self.smallest
    }

    /// Number of trailing entries that are the largest eigenvalues of the matrix.
    pub fn largest_count(&self) -> usize {
        self.largest
    }

    /// lambda_N, when the spectrum contains it.
    pub fn lambda_max(&self) -> Option<f64> {
        if self.largest >= 1 {
            self.eigenvalues.last().copied()
        } else {
            None
        }
    }

    /// Max-abs deviation of `U^T U` from the identity.
    pub fn orthonormality_error(&self) -> f64 {
        let u = &self.eigenvectors;
        let k = u.ncols();
        let gram = u.transpose() * u;
        (gram - DMatrix::<f64>::identity(k, k)).abs().max()
    }

    /// `||A - U diag(lambda) U^T||_F / max(1, ||A||_F)`; meaningful for complete spectra.
    pub fn reconstruction_error(&self, a: &DMatrix<f64>) -> f64 {
        let u = &self.eigenvectors;
        let lam = DMatrix::from_diagonal(&DVector::from_column_slice(&self.eigenvalues));
        let recon = u * lam * u.transpose();
        (a - recon).norm() / a.norm().max(1.0)
    }
}

fn fix_sign(v: &mut DVector<f64>) {
    let mut best = 0usize;
    let mut best_abs = -1.0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > best_abs {
            best_abs = x.abs();
            best = i;
        }
    }
    if !v.is_empty() && v[best] < 0.0 {
        v.neg_mut();
    }
}

fn assemble(pairs: Vec<(f64, DVector<f64>)>, n: usize, smallest: usize, largest: usize) -> Spectrum {
    let mut pairs = pairs;
    // Vec::sort_by is stable, so equal eigenvalues keep solver order.
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut eigenvectors = DMatrix::zeros(n, pairs.len());
    let mut eigenvalues = Vec::with_capacity(pairs.len());
    for (k, (lambda, mut v)) in pairs.into_iter().enumerate() {
        fix_sign(&mut v);
        eigenvectors.set_column(k, &v);
        eigenvalues.push(lambda);
    }
    Spectrum {
        eigenvalues,
        eigenvectors,
        smallest,
        largest,
    }
}

fn condition_summary(a: &DMatrix<f64>) -> String {
    let nonfinite = a.iter().filter(|v| !v.is_finite()).count();
    let asym = (a - a.transpose()).abs().max();
    format!(
        "{}x{} matrix, frobenius norm {:.3e}, max |entry| {:.3e}, asymmetry {:.3e}, {} non-finite entries",
        a.nrows(),
        a.ncols(),
        a.norm(),
        a.abs().max(),
        asym,
        nonfinite
    )
}

fn check_square_symmetric(a: &DMatrix<f64>) -> Result<()> {
    if !a.is_square() {
        return Err(Error::Dimension(format!(
            "eigensolver needs a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            if a[(i, j)] != a[(j, i)] {
                return Err(Error::Contract(format!(
                    "eigensolver needs a symmetric matrix; mismatch at ({i}, {j})"
                )));
            }
        }
    }
    Ok(())
}

/// Full ascending eigendecomposition of a symmetric matrix.
pub fn eig_dense_matrix(a: &DMatrix<f64>) -> Result<Spectrum> {
    check_square_symmetric(a)?;
    let n = a.nrows();
    if a.iter().all(|&v| v == 0.0) {
        return Ok(Spectrum {
            eigenvalues: vec![0.0; n],
            eigenvectors: DMatrix::identity(n, n),
            smallest: n,
            largest: n,
        });
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!(
            "non-finite input to eigensolver: {}",
            condition_summary(a)
        )));
    }
    let eig = SymmetricEigen::try_new(a.clone(), f64::EPSILON, 100 * n.max(10)).ok_or_else(|| {
        Error::Convergence(format!("dense symmetric QR failed: {}", condition_summary(a)))
    })?;
    let pairs = (0..n)
        .map(|k| (eig.eigenvalues[k], eig.eigenvectors.column(k).into_owned()))
        .collect();
    Ok(assemble(pairs, n, n, n))
}

pub fn eig_dense(laplacian: &Laplacian) -> Result<Spectrum> {
    eig_dense_matrix(laplacian.matrix())
}

#[derive(Debug, Clone)]
pub struct LanczosOptions {
    /// Residual tolerance relative to the Gershgorin bound of the matrix.
    pub tolerance: f64,
    /// Breakdown restarts allowed per extracted eigenpair.
    pub max_restarts: usize,
    pub seed: u64,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-11,
            max_restarts: 64,
            seed: 0x5eed_1a2c,
        }
    }
}

/// Extreme eigenpairs of a symmetric matrix by Lanczos iteration.
pub fn eig_partial(laplacian: &Laplacian, k_smallest: usize, k_largest: usize) -> Result<Spectrum> {
    eig_partial_matrix(laplacian.matrix(), k_smallest, k_largest, &LanczosOptions::default())
}

/// Extreme eigenpairs of a symmetric matrix by Lanczos iteration with full
/// reorthogonalization.
///
/// Pairs are extracted one at a time. Each run starts from a random vector
/// orthogonal to the pairs already locked, so repeated eigenvalues (for
/// example the zero eigenvalue of a disconnected graph) are found once per
/// multiplicity.
pub fn eig_partial_matrix(
    a: &DMatrix<f64>,
    k_smallest: usize,
    k_largest: usize,
    opts: &LanczosOptions,
) -> Result<Spectrum> {
    check_square_symmetric(a)?;
    let n = a.nrows();
    if k_smallest + k_largest > n {
        return Err(Error::Contract(format!(
            "requested {} eigenpairs from a {n}x{n} matrix",
            k_smallest + k_largest
        )));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!(
            "non-finite input to eigensolver: {}",
            condition_summary(a)
        )));
    }
    let bound = a
        .row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut locked: Vec<DVector<f64>> = Vec::with_capacity(k_smallest + k_largest);
    let mut pairs = Vec::with_capacity(k_smallest + k_largest);
    if bound == 0.0 {
        // Zero matrix: every unit vector is an eigenvector.
        for k in 0..(k_smallest + k_largest) {
            let idx = if k < k_smallest { k } else { n - 1 - (k - k_smallest) };
            let mut e = DVector::zeros(n);
            e[idx] = 1.0;
            pairs.push((0.0, e));
        }
        return Ok(assemble(pairs, n, k_smallest, k_largest));
    }
    let targets = std::iter::repeat_n(Extreme::Smallest, k_smallest)
        .chain(std::iter::repeat_n(Extreme::Largest, k_largest));
    for target in targets {
        let (lambda, v) = extreme_pair(a, &locked, target, bound, opts, &mut rng)?;
        locked.push(v.clone());
        pairs.push((lambda, v));
    }
    Ok(assemble(pairs, n, k_smallest, k_largest))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Extreme {
    Smallest,
    Largest,
}

/// Removes the components of `w` along `basis` (two Gram-Schmidt sweeps).
fn orthogonalize(w: &mut DVector<f64>, locked: &[DVector<f64>], basis: &[DVector<f64>]) {
    for _ in 0..2 {
        for q in locked.iter().chain(basis.iter()) {
            let c = q.dot(w);
            w.axpy(-c, q, 1.0);
        }
    }
}

fn fresh_direction(
    n: usize,
    locked: &[DVector<f64>],
    basis: &[DVector<f64>],
    rng: &mut ChaCha8Rng,
) -> Option<DVector<f64>> {
    for _ in 0..8 {
        let mut v = DVector::from_fn(n, |_, _| rng.random::<f64>() - 0.5);
        orthogonalize(&mut v, locked, basis);
        let norm = v.norm();
        if norm > 1e-8 {
            return Some(v / norm);
        }
    }
    None
}

fn extreme_pair(
    a: &DMatrix<f64>,
    locked: &[DVector<f64>],
    target: Extreme,
    bound: f64,
    opts: &LanczosOptions,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, DVector<f64>)> {
    const MIN_BLOCK: usize = 4;
    let n = a.nrows();
    let available = n - locked.len();
    let breakdown = 1e-12 * bound;
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut alphas: Vec<f64> = Vec::new();
    // betas[j] couples basis[j] and basis[j + 1]; zero after a restart.
    let mut betas: Vec<f64> = Vec::new();
    let mut restarts = 0usize;
    let mut q = fresh_direction(n, locked, &basis, rng)
        .ok_or_else(|| Error::Convergence("could not draw a start vector".into()))?;
    let mut block_len = 0usize;
    let mut block_room = available;
    loop {
        let mut w = a * &q;
        let alpha = q.dot(&w);
        basis.push(q);
        alphas.push(alpha);
        block_len += 1;
        orthogonalize(&mut w, locked, &basis);
        let beta = w.norm();
        let m = basis.len();
        let exhausted = m == available;
        let broke_down = beta <= breakdown;
        let settled = block_len >= MIN_BLOCK.min(block_room);
        // Tridiagonal solves are O(m^3); past 32 steps only test every 4th.
        let should_check = exhausted || (settled && (broke_down || m <= 32 || m.is_multiple_of(4)));

        if should_check {
            let (theta, s) = tridiagonal_extreme(&alphas, &betas, target);
            let residual = if broke_down { 0.0 } else { beta * s[m - 1].abs() };
            if exhausted || residual <= opts.tolerance * bound {
                let mut v = DVector::zeros(n);
                for (j, qj) in basis.iter().enumerate() {
                    v.axpy(s[j], qj, 1.0);
                }
                orthogonalize(&mut v, locked, &[]);
                let norm = v.norm();
                if norm == 0.0 {
                    return Err(Error::Convergence("Ritz vector vanished".into()));
                }
                v /= norm;
                let rayleigh = v.dot(&(a * &v));
                let lambda = if rayleigh.is_finite() { rayleigh } else { theta };
                return Ok((lambda, v));
            }
        }

        if broke_down {
            restarts += 1;
            if restarts > opts.max_restarts {
                return Err(Error::Convergence(format!(
                    "Lanczos broke down {restarts} times without converging"
                )));
            }
            q = fresh_direction(n, locked, &basis, rng).ok_or_else(|| {
                Error::Convergence("no direction left to restart Lanczos after breakdown".into())
            })?;
            betas.push(0.0);
            block_len = 0;
            block_room = available - m;
        } else {
            q = w / beta;
            betas.push(beta);
        }
    }
}

/// Extreme eigenpair of the symmetric tridiagonal matrix given by its
/// diagonal and off-diagonal.
fn tridiagonal_extreme(alphas: &[f64], betas: &[f64], target: Extreme) -> (f64, DVector<f64>) {
    let m = alphas.len();
    let mut t = DMatrix::zeros(m, m);
    for i in 0..m {
        t[(i, i)] = alphas[i];
        if i + 1 < m {
            t[(i, i + 1)] = betas[i];
            t[(i + 1, i)] = betas[i];
        }
    }
    let eig = SymmetricEigen::new(t);
    let mut idx = 0;
    for k in 1..m {
        let better = match target {
            Extreme::Smallest => eig.eigenvalues[k] < eig.eigenvalues[idx],
            Extreme::Largest => eig.eigenvalues[k] > eig.eigenvalues[idx],
        };
        if better {
            idx = k;
        }
    }
    (eig.eigenvalues[idx], eig.eigenvectors.column(idx).into_owned())
}

/// lambda_2 and lambda_N, choosing the dense solver up to [`DENSE_LIMIT`]
/// and Lanczos above it.
pub fn spectral_extremes(laplacian: &Laplacian) -> Result<(f64, f64)> {
    let n = laplacian.len();
    if n < 2 {
        return Err(Error::DegenerateGraph(format!("need at least 2 vertices, got {n}")));
    }
    let spectrum = if n <= DENSE_LIMIT {
        eig_dense(laplacian)?
    } else {
        eig_partial(laplacian, 2, 1)?
    };
    let vals = spectrum.eigenvalues();
    Ok((vals[1], vals[vals.len() - 1]))
}

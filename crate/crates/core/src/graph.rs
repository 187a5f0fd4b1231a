//! Attention graphs and their Laplacians.
//!
//! Each head's post-softmax attention is symmetrized into an undirected
//! weight matrix, the heads of a layer are mixed by their share of total
//! attention mass, and the combined graph yields a Laplacian whose spectrum
//! the diagnostics consume.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Post-softmax attention of one head at one layer.
#[derive(Debug, Clone)]
pub struct HeadAttention {
    pub layer_index: usize,
    pub head_index: usize,
    pub matrix: DMatrix<f64>,
}

impl HeadAttention {
    pub fn new(layer_index: usize, head_index: usize, matrix: DMatrix<f64>) -> Self {
        Self {
            layer_index,
            head_index,
            matrix,
        }
    }

    /// Total attention mass, `sum_ij A_ij`. Equals N for row-stochastic heads.
    pub fn mass(&self) -> f64 {
        self.matrix.iter().sum()
    }

    /// Largest deviation of any row sum from 1.
    pub fn row_stochastic_deviation(&self) -> f64 {
        self.matrix
            .row_iter()
            .map(|r| (r.sum() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Symmetrizes the head, carrying the pre-symmetrization mass along.
    pub fn symmetrized(&self) -> Result<SymmetricHead> {
        Ok(SymmetricHead {
            layer_index: self.layer_index,
            head_index: self.head_index,
            weights: symmetrize(&self.matrix)?,
            mass: self.mass(),
        })
    }
}

/// A symmetrized head together with the mass of its original attention.
#[derive(Debug, Clone)]
pub struct SymmetricHead {
    pub layer_index: usize,
    pub head_index: usize,
    pub weights: DMatrix<f64>,
    pub mass: f64,
}

fn check_finite_nonnegative(m: &DMatrix<f64>) -> Result<()> {
    if !m.is_square() {
        return Err(Error::Dimension(format!(
            "expected a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let n = m.nrows();
    for j in 0..n {
        for i in 0..n {
            let v = m[(i, j)];
            if !v.is_finite() {
                return Err(Error::InvalidPayload(format!("non-finite entry at ({i}, {j})")));
            }
            if v < 0.0 {
                return Err(Error::InvalidPayload(format!("negative entry {v} at ({i}, {j})")));
            }
        }
    }
    Ok(())
}

/// `(A + A^T) / 2`, written so the result is symmetric bit for bit.
pub fn symmetrize(attention: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_finite_nonnegative(attention)?;
    let n = attention.nrows();
    let mut out = DMatrix::zeros(n, n);
    for i in 0..n {
        out[(i, i)] = attention[(i, i)];
        for j in (i + 1)..n {
            let v = (attention[(i, j)] + attention[(j, i)]) / 2.0;
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    Ok(out)
}

/// Undirected, head-aggregated attention graph for one layer.
#[derive(Debug, Clone)]
pub struct AttentionGraph {
    layer_index: usize,
    weights: DMatrix<f64>,
    degrees: DVector<f64>,
}

impl AttentionGraph {
    /// Wraps an already-symmetric weight matrix. Rejects asymmetric input.
    pub fn from_weights(layer_index: usize, weights: DMatrix<f64>) -> Result<Self> {
        check_finite_nonnegative(&weights)?;
        if let Some((i, j)) = first_asymmetry(&weights) {
            return Err(Error::Contract(format!(
                "graph weights are not symmetric at ({i}, {j})"
            )));
        }
        let degrees = row_sums(&weights);
        Ok(Self {
            layer_index,
            weights,
            degrees,
        })
    }

    pub fn layer_index(&self) -> usize {
        self.layer_index
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn degrees(&self) -> &DVector<f64> {
        &self.degrees
    }

    pub fn len(&self) -> usize {
        self.weights.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn max_degree(&self) -> f64 {
        self.degrees.iter().cloned().fold(0.0, f64::max)
    }

    /// Connected components by graph traversal over positive-weight edges.
    pub fn component_count(&self) -> usize {
        let n = self.len();
        let mut seen = vec![false; n];
        let mut count = 0;
        let mut stack = Vec::new();
        for start in 0..n {
            if seen[start] {
                continue;
            }
            count += 1;
            seen[start] = true;
            stack.push(start);
            while let Some(v) = stack.pop() {
                for u in 0..n {
                    if !seen[u] && u != v && self.weights[(v, u)] > 0.0 {
                        seen[u] = true;
                        stack.push(u);
                    }
                }
            }
        }
        count
    }
}

fn row_sums(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(m.nrows(), m.row_iter().map(|r| r.sum()))
}

fn first_asymmetry(m: &DMatrix<f64>) -> Option<(usize, usize)> {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            if m[(i, j)] != m[(j, i)] {
                return Some((i, j));
            }
        }
    }
    None
}

/// Mixes the symmetrized heads of one layer, weighting each by its share of
/// the total pre-symmetrization attention mass.
pub fn aggregate_heads(heads: &[SymmetricHead]) -> Result<AttentionGraph> {
    let first = heads
        .first()
        .ok_or_else(|| Error::Contract("aggregate_heads needs at least one head".into()))?;
    let n = first.weights.nrows();
    for h in heads {
        if !h.weights.is_square() || h.weights.nrows() != n {
            return Err(Error::Dimension(format!(
                "head {} has shape {}x{}, expected {n}x{n}",
                h.head_index,
                h.weights.nrows(),
                h.weights.ncols()
            )));
        }
        if !h.mass.is_finite() || h.mass < 0.0 {
            return Err(Error::InvalidPayload(format!(
                "head {} has invalid mass {}",
                h.head_index, h.mass
            )));
        }
    }
    let total: f64 = heads.iter().map(|h| h.mass).sum();
    if total <= 0.0 {
        return Err(Error::DegenerateMass);
    }
    let mut weights = DMatrix::zeros(n, n);
    for h in heads {
        let alpha = h.mass / total;
        if alpha == 0.0 {
            continue;
        }
        // Accumulate the upper triangle and mirror it so symmetry stays exact.
        for i in 0..n {
            for j in i..n {
                weights[(i, j)] += alpha * h.weights[(i, j)];
            }
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            weights[(j, i)] = weights[(i, j)];
        }
    }
    AttentionGraph::from_weights(first.layer_index, weights)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LaplacianVariant {
    /// `D - W`
    Combinatorial,
    /// `I - D^{-1/2} W D^{-1/2}`
    SymmetricNormalized,
    /// `I - D^{-1} W`; not symmetric in general.
    RandomWalk,
}

#[derive(Debug, Clone)]
pub struct Laplacian {
    matrix: DMatrix<f64>,
    variant: LaplacianVariant,
    max_degree: f64,
    isolated: Vec<usize>,
}

impl Laplacian {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn variant(&self) -> LaplacianVariant {
        self.variant
    }

    /// Largest vertex degree of the graph the Laplacian was built from.
    pub fn max_degree(&self) -> f64 {
        self.max_degree
    }

    /// Zero-degree vertices whose normalized rows and columns were zeroed.
    pub fn isolated_vertices(&self) -> &[usize] {
        &self.isolated
    }

    pub fn len(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_symmetric(&self) -> bool {
        first_asymmetry(&self.matrix).is_none()
    }

    pub fn is_zero(&self) -> bool {
        self.matrix.iter().all(|&v| v == 0.0)
    }

    /// Wraps an arbitrary symmetric matrix as a combinatorial Laplacian.
    /// Used by tests and by callers that assemble `D - W` themselves.
    pub fn from_matrix(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::Dimension(format!(
                "expected a square matrix, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if let Some((i, j)) = first_asymmetry(&matrix) {
            return Err(Error::Contract(format!("matrix is not symmetric at ({i}, {j})")));
        }
        let max_degree = matrix.diagonal().iter().cloned().fold(0.0, f64::max);
        Ok(Self {
            matrix,
            variant: LaplacianVariant::Combinatorial,
            max_degree,
            isolated: Vec::new(),
        })
    }

    /// `x^T L x`
    pub fn quadratic_form(&self, x: &DVector<f64>) -> f64 {
        x.dot(&(&self.matrix * x))
    }
}

pub fn build_laplacian(graph: &AttentionGraph, variant: LaplacianVariant) -> Result<Laplacian> {
    let w = graph.weights();
    if let Some((i, j)) = first_asymmetry(w) {
        return Err(Error::Contract(format!(
            "Laplacian requires symmetric weights; mismatch at ({i}, {j})"
        )));
    }
    let n = graph.len();
    let d = graph.degrees();
    let isolated: Vec<usize> = (0..n).filter(|&i| d[i] <= 0.0).collect();
    let matrix = match variant {
        LaplacianVariant::Combinatorial => {
            let mut l = -w.clone();
            for i in 0..n {
                l[(i, i)] += d[i];
            }
            l
        }
        LaplacianVariant::SymmetricNormalized => {
            let inv_sqrt: Vec<f64> = d.iter().map(|&x| if x > 0.0 { 1.0 / x.sqrt() } else { 0.0 }).collect();
            let mut l = DMatrix::zeros(n, n);
            for i in 0..n {
                for j in i..n {
                    let v = -inv_sqrt[i] * w[(i, j)] * inv_sqrt[j];
                    l[(i, j)] = v;
                    l[(j, i)] = v;
                }
                l[(i, i)] += 1.0;
            }
            zero_rows_and_columns(&mut l, &isolated);
            l
        }
        LaplacianVariant::RandomWalk => {
            let mut l = DMatrix::zeros(n, n);
            for i in 0..n {
                let inv = if d[i] > 0.0 { 1.0 / d[i] } else { 0.0 };
                for j in 0..n {
                    l[(i, j)] = -inv * w[(i, j)];
                }
                l[(i, i)] += 1.0;
            }
            zero_rows_and_columns(&mut l, &isolated);
            l
        }
    };
    if !isolated.is_empty() && variant != LaplacianVariant::Combinatorial {
        log::warn!(
            "layer {}: {} zero-degree vertices zeroed in {:?} Laplacian",
            graph.layer_index(),
            isolated.len(),
            variant
        );
    }
    Ok(Laplacian {
        matrix,
        variant,
        max_degree: graph.max_degree(),
        isolated,
    })
}

fn zero_rows_and_columns(m: &mut DMatrix<f64>, idx: &[usize]) {
    for &i in idx {
        m.row_mut(i).fill(0.0);
        m.column_mut(i).fill(0.0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path3() -> AttentionGraph {
        let w = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
        AttentionGraph::from_weights(0, w).unwrap()
    }

    #[test]
    fn symmetrize_examples() {
        let i3 = DMatrix::<f64>::identity(3, 3);
        assert_eq!(symmetrize(&i3).unwrap(), i3);

        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let expected = DMatrix::from_row_slice(2, 2, &[0.0, 0.5, 0.5, 0.0]);
        assert_eq!(symmetrize(&a).unwrap(), expected);

        let u = DMatrix::from_element(3, 3, 1.0 / 3.0);
        assert_eq!(symmetrize(&u).unwrap(), u);
    }

    #[test]
    fn symmetrize_rejects_bad_input() {
        let rect = DMatrix::<f64>::zeros(2, 3);
        assert!(matches!(symmetrize(&rect), Err(Error::Dimension(_))));
        let mut nan = DMatrix::<f64>::zeros(2, 2);
        nan[(0, 1)] = f64::NAN;
        assert!(matches!(symmetrize(&nan), Err(Error::InvalidPayload(_))));
        let mut inf = DMatrix::<f64>::zeros(2, 2);
        inf[(1, 0)] = f64::INFINITY;
        assert!(matches!(symmetrize(&inf), Err(Error::InvalidPayload(_))));
    }

    fn head(w: DMatrix<f64>, mass: f64, h: usize) -> SymmetricHead {
        SymmetricHead {
            layer_index: 0,
            head_index: h,
            weights: w,
            mass,
        }
    }

    #[test]
    fn aggregate_identical_heads_is_identity_map() {
        let w = DMatrix::from_row_slice(3, 3, &[0.5, 0.25, 0.25, 0.25, 0.5, 0.25, 0.25, 0.25, 0.5]);
        let heads: Vec<_> = (0..4).map(|h| head(w.clone(), 3.0, h)).collect();
        let g = aggregate_heads(&heads).unwrap();
        assert!((g.weights() - &w).abs().max() < 1e-15);
    }

    #[test]
    fn aggregate_two_heads_by_mass() {
        let w1 = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let w2 = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let g = aggregate_heads(&[head(w1.clone(), 2.0, 0), head(w2.clone(), 2.0, 1)]).unwrap();
        // Scalar-loop evaluation of the mass-weighted sum.
        let masses = [2.0, 2.0];
        let total: f64 = masses.iter().sum();
        for i in 0..2 {
            for j in 0..2 {
                let expected = masses[0] / total * w1[(i, j)] + masses[1] / total * w2[(i, j)];
                assert_eq!(g.weights()[(i, j)], expected);
                assert_eq!(g.weights()[(i, j)], 0.5);
            }
        }
        assert_eq!(g.degrees().as_slice(), &[1.0, 1.0]);
    }

    #[test]
    fn aggregate_unequal_masses() {
        let w1 = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let w2 = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let g = aggregate_heads(&[head(w1, 3.0, 0), head(w2, 1.0, 1)]).unwrap();
        assert_eq!(g.weights()[(0, 0)], 0.75);
        assert_eq!(g.weights()[(0, 1)], 0.25);
    }

    #[test]
    fn aggregate_errors() {
        assert!(matches!(aggregate_heads(&[]), Err(Error::Contract(_))));
        let a = head(DMatrix::identity(2, 2), 2.0, 0);
        let b = head(DMatrix::identity(3, 3), 3.0, 1);
        assert!(matches!(aggregate_heads(&[a, b]), Err(Error::Dimension(_))));
        let z = head(DMatrix::zeros(2, 2), 0.0, 0);
        assert!(matches!(aggregate_heads(&[z]), Err(Error::DegenerateMass)));
    }

    #[test]
    fn laplacian_examples() {
        let u = AttentionGraph::from_weights(0, DMatrix::from_element(3, 3, 1.0 / 3.0)).unwrap();
        let l = build_laplacian(&u, LaplacianVariant::Combinatorial).unwrap();
        let expected = DMatrix::<f64>::identity(3, 3) - DMatrix::from_element(3, 3, 1.0 / 3.0);
        assert!((l.matrix() - expected).abs().max() < 1e-15);

        let i = AttentionGraph::from_weights(0, DMatrix::identity(4, 4)).unwrap();
        let l = build_laplacian(&i, LaplacianVariant::Combinatorial).unwrap();
        assert!(l.is_zero());

        let l = build_laplacian(&path3(), LaplacianVariant::Combinatorial).unwrap();
        let expected = DMatrix::from_row_slice(3, 3, &[1.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 1.0]);
        assert_eq!(l.matrix(), &expected);
    }

    #[test]
    fn normalized_variants() {
        let g = path3();
        let sym = build_laplacian(&g, LaplacianVariant::SymmetricNormalized).unwrap();
        assert!(sym.is_symmetric());
        let c = 1.0 / 2f64.sqrt();
        assert!((sym.matrix()[(0, 1)] + c).abs() < 1e-15);
        assert_eq!(sym.matrix()[(1, 1)], 1.0);

        let rw = build_laplacian(&g, LaplacianVariant::RandomWalk).unwrap();
        for r in rw.matrix().row_iter() {
            assert!(r.sum().abs() < 1e-15);
        }
        assert_eq!(rw.matrix()[(1, 0)], -0.5);
        assert_eq!(rw.matrix()[(0, 1)], -1.0);
    }

    #[test]
    fn isolated_vertices_are_zeroed_in_normalized_variants() {
        let mut w = DMatrix::zeros(3, 3);
        w[(0, 1)] = 1.0;
        w[(1, 0)] = 1.0;
        let g = AttentionGraph::from_weights(0, w).unwrap();
        for variant in [LaplacianVariant::SymmetricNormalized, LaplacianVariant::RandomWalk] {
            let l = build_laplacian(&g, variant).unwrap();
            assert_eq!(l.isolated_vertices(), &[2]);
            assert!(l.matrix().row(2).iter().all(|&v| v == 0.0));
            assert!(l.matrix().column(2).iter().all(|&v| v == 0.0));
        }
        assert_eq!(g.component_count(), 2);
    }

    #[test]
    fn asymmetric_weights_rejected() {
        let w = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.5, 0.0]);
        assert!(matches!(AttentionGraph::from_weights(0, w.clone()), Err(Error::Contract(_))));
        assert!(matches!(Laplacian::from_matrix(w), Err(Error::Contract(_))));
    }
}

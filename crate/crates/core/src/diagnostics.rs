//! The four per-layer spectral diagnostics.
//!
//! Hidden states are read as graph signals on the layer's attention graph.
//! Their graph Fourier coefficients give the per-mode energy distribution,
//! from which spectral entropy and the high-frequency energy ratio follow;
//! smoothness normalizes the Dirichlet energy by lambda_N; the Fiedler value
//! is read straight off the spectrum.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eigen::{eig_dense, Spectrum};
use crate::error::{Error, Result};
use crate::features::{FeatureKey, FeatureSource, Metric};
use crate::graph::{build_laplacian, AttentionGraph, Laplacian, LaplacianVariant};
use crate::trace::{Label, SampleTrace};

const SMOOTHNESS_SLACK: f64 = 1e-9;
const ENTROPY_SLACK: f64 = 1e-12;

/// Token representations of one layer, N x d.
#[derive(Debug, Clone)]
pub struct HiddenStates {
    pub layer_index: usize,
    pub matrix: DMatrix<f64>,
}

impl HiddenStates {
    pub fn new(layer_index: usize, matrix: DMatrix<f64>) -> Self {
        Self { layer_index, matrix }
    }
}

/// `U^T X` for a complete spectrum `U`.
pub fn graph_fourier_transform(spectrum: &Spectrum, states: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !spectrum.is_complete() {
        return Err(Error::Contract(
            "graph Fourier transform needs a complete eigenbasis".into(),
        ));
    }
    if states.nrows() != spectrum.dim() {
        return Err(Error::Dimension(format!(
            "hidden states have {} rows, graph has {} vertices",
            states.nrows(),
            spectrum.dim()
        )));
    }
    Ok(spectrum.eigenvectors().transpose() * states)
}

/// Squared norm of each coefficient row: the energy in each graph mode.
pub fn mode_energies(coefficients: &DMatrix<f64>) -> Vec<f64> {
    coefficients.row_iter().map(|r| r.norm_squared()).collect()
}

fn total_energy(energies: &[f64]) -> Result<f64> {
    let total: f64 = energies.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::DegenerateSignal(format!("signal energy is {total}")));
    }
    Ok(total)
}

/// Shannon entropy (nats) of a per-mode energy distribution.
pub fn entropy_of_energies(energies: &[f64]) -> Result<f64> {
    let total = total_energy(energies)?;
    let mut h = 0.0;
    for &e in energies {
        if e > 0.0 {
            let p = e / total;
            h -= p * p.ln();
        }
    }
    if h < 0.0 {
        if h >= -ENTROPY_SLACK {
            h = 0.0;
        } else {
            return Err(Error::Numerical(format!("negative spectral entropy {h}")));
        }
    }
    Ok(h)
}

pub fn spectral_entropy(coefficients: &DMatrix<f64>) -> Result<f64> {
    entropy_of_energies(&mode_energies(coefficients))
}

/// Share of energy in modes `m >= floor(N/2) + 1` (1-based, ascending eigenvalue).
pub fn hfer_of_energies(energies: &[f64]) -> Result<f64> {
    let total = total_energy(energies)?;
    let cut = energies.len() / 2;
    let high: f64 = energies[cut..].iter().sum();
    Ok((high / total).clamp(0.0, 1.0))
}

pub fn hfer(coefficients: &DMatrix<f64>) -> Result<f64> {
    hfer_of_energies(&mode_energies(coefficients))
}

pub fn fiedler_value(spectrum: &Spectrum) -> Result<f64> {
    if spectrum.dim() < 2 {
        return Err(Error::DegenerateGraph(format!(
            "Fiedler value needs at least 2 vertices, got {}",
            spectrum.dim()
        )));
    }
    if spectrum.smallest_count() < 2 {
        return Err(Error::Contract(
            "spectrum does not contain the two smallest eigenvalues".into(),
        ));
    }
    Ok(spectrum.eigenvalues()[1])
}

/// `Tr(X^T L X)`, computed without an eigendecomposition.
pub fn dirichlet_energy(laplacian: &Laplacian, states: &DMatrix<f64>) -> Result<f64> {
    if states.nrows() != laplacian.len() {
        return Err(Error::Dimension(format!(
            "hidden states have {} rows, Laplacian is {}x{}",
            states.nrows(),
            laplacian.len(),
            laplacian.len()
        )));
    }
    let lx = laplacian.matrix() * states;
    Ok(lx.component_mul(states).sum())
}

/// `1 - Tr(X^T L X) / (lambda_N ||X||_F^2)`, clamped to [0, 1] after a
/// rounding-tolerance check.
pub fn smoothness(laplacian: &Laplacian, states: &DMatrix<f64>, lambda_max: f64) -> Result<f64> {
    let norm_sq = states.norm_squared();
    if !(norm_sq > 0.0) || !norm_sq.is_finite() {
        return Err(Error::DegenerateSignal(format!("||X||_F^2 = {norm_sq}")));
    }
    if lambda_max.is_nan() {
        return Err(Error::Contract("lambda_max is NaN".into()));
    }
    let energy = dirichlet_energy(laplacian, states)?;
    if lambda_max <= 0.0 {
        log::warn!("zero Laplacian: smoothness defined as 1");
        return Ok(1.0);
    }
    let s = 1.0 - energy / (lambda_max * norm_sq);
    if s < 0.0 {
        if s >= -SMOOTHNESS_SLACK {
            return Ok(0.0);
        }
        return Err(Error::Numerical(format!("smoothness {s} below 0")));
    }
    if s > 1.0 {
        if s <= 1.0 + SMOOTHNESS_SLACK {
            return Ok(1.0);
        }
        return Err(Error::Numerical(format!("smoothness {s} above 1")));
    }
    Ok(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerDiagnostics {
    pub layer: usize,
    pub entropy: f64,
    pub fiedler: f64,
    pub smoothness: f64,
    pub hfer: f64,
}

impl LayerDiagnostics {
    pub fn get(&self, metric: Metric) -> f64 {
        match metric {
            Metric::Entropy => self.entropy,
            Metric::Fiedler => self.fiedler,
            Metric::Smoothness => self.smoothness,
            Metric::Hfer => self.hfer,
        }
    }
}

/// Diagnostics for every layer of one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralProfile {
    pub sample_id: String,
    pub label: Label,
    pub layers: Vec<LayerDiagnostics>,
}

impl SpectralProfile {
    pub fn layer(&self, layer: usize) -> Option<&LayerDiagnostics> {
        self.layers.iter().find(|l| l.layer == layer)
    }

    /// Feature keys in table order: layers ascending, metrics in canonical order.
    pub fn keys(&self) -> Vec<FeatureKey> {
        let mut layers: Vec<usize> = self.layers.iter().map(|l| l.layer).collect();
        layers.sort_unstable();
        layers
            .into_iter()
            .flat_map(|l| Metric::ALL.into_iter().map(move |m| FeatureKey::new(l, m)))
            .collect()
    }
}

impl FeatureSource for SpectralProfile {
    fn feature(&self, key: FeatureKey) -> Option<f64> {
        self.layer(key.layer).map(|l| l.get(key.metric))
    }
}

/// All four diagnostics for one layer's graph and hidden states.
pub fn profile_layer(graph: &AttentionGraph, states: &DMatrix<f64>) -> Result<LayerDiagnostics> {
    let laplacian = build_laplacian(graph, LaplacianVariant::Combinatorial)?;
    let spectrum = eig_dense(&laplacian)?;
    let coefficients = graph_fourier_transform(&spectrum, states)?;
    let energies = mode_energies(&coefficients);
    let entropy = entropy_of_energies(&energies)?;
    let high = hfer_of_energies(&energies)?;

    let mut fiedler = fiedler_value(&spectrum)?;
    let floor = -1e-8 * laplacian.max_degree().max(f64::MIN_POSITIVE);
    if fiedler < 0.0 {
        if fiedler >= floor {
            fiedler = 0.0;
        } else {
            return Err(Error::Numerical(format!("negative Fiedler value {fiedler}")));
        }
    }
    let lambda_max = spectrum.lambda_max().unwrap_or(0.0);
    let smooth = smoothness(&laplacian, states, lambda_max)?;
    Ok(LayerDiagnostics {
        layer: graph.layer_index(),
        entropy,
        fiedler,
        smoothness: smooth,
        hfer: high,
    })
}

/// Runs the full per-layer pipeline for one trace: aggregate heads, build
/// the Laplacian, decompose it and extract the diagnostics. Layers are
/// processed in parallel and returned in layer order.
pub fn profile_sample(trace: &SampleTrace) -> Result<SpectralProfile> {
    let layers = (0..trace.n_layers())
        .into_par_iter()
        .map(|layer| {
            let graph = trace.layer_graph(layer)?;
            let states = trace.hidden_states(layer)?;
            profile_layer(&graph, &states.matrix)
        })
        .enumerate()
        .map(|(layer, r)| r.map_err(|e| e.at_layer(layer)))
        .collect::<Result<Vec<_>>>()?;
    Ok(SpectralProfile {
        sample_id: trace.sample_id.clone(),
        label: trace.label,
        layers,
    })
}

//! Hallucination guardrails for tool-calling language models, built on the
//! spectra of attention graphs.
//!
//! Each layer's attention becomes a weighted undirected graph over tokens.
//! Its Laplacian eigenbasis gives a Fourier transform for the hidden states,
//! and four per-layer diagnostics (spectral entropy, Fiedler value,
//! smoothness, high-frequency energy ratio) feed small threshold detectors.

pub mod baselines;
pub mod cli;
pub mod detection;
pub mod diagnostics;
pub mod eigen;
pub mod error;
pub mod features;
pub mod graph;
pub mod metrics;
pub mod stamp;
pub mod synth;
pub mod trace;

pub use error::{Error, Result};
pub use features::{FeatureKey, FeatureTable, Metric};
pub use trace::{Label, SampleTrace};

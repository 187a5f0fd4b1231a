//! Synthetic trace corpora with a known spectral signal.
//!
//! Valid samples get block-structured attention (tokens attend mostly inside
//! their own contiguous block) and hidden states that are nearly constant on
//! each block, so their energy sits in the low graph frequencies. A
//! hallucinated sample mixes every attention row toward uniform by
//! `noise_level` and adds white noise of the same scale to its hidden states.
//! At `noise_level = 0` both classes come from the same distribution.
//!
//! Every sample also carries nuisance variation (block layout, block
//! strength, base noise) so intermediate noise levels give partial overlap.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::index;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stamp::Stamp;
use crate::trace::{
    write_trace_file, CorpusManifest, DType, Label, LayerPayload, ManifestEntry, PayloadKind, SampleTrace, MAX_DIM,
};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CAPTURE_CONVENTION: &str = "synthetic";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_tokens: usize,
    pub n_layers: usize,
    pub hidden_dim: usize,
    pub n_heads: usize,
    pub coherent_block_count: usize,
    /// 0 gives no signal, 1 gives uniform attention for hallucinations.
    pub noise_level: f64,
    pub hallucination_rate: f64,
    pub corpus_size: usize,
    pub seed: u64,
    pub dtype: DType,
    pub payload_kind: PayloadKind,
    /// Layers that carry the signal; `None` means all of them.
    #[serde(default)]
    pub signal_layers: Option<Vec<usize>>,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_tokens: 32,
            n_layers: 4,
            hidden_dim: 16,
            n_heads: 4,
            coherent_block_count: 4,
            noise_level: 0.5,
            hallucination_rate: 0.2,
            corpus_size: 200,
            seed: 0,
            dtype: DType::F32,
            payload_kind: PayloadKind::RawHeads,
            signal_layers: None,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("n_tokens", self.n_tokens),
            ("n_layers", self.n_layers),
            ("hidden_dim", self.hidden_dim),
            ("n_heads", self.n_heads),
            ("coherent_block_count", self.coherent_block_count),
        ];
        for (name, v) in dims {
            if v == 0 || v > MAX_DIM {
                return Err(Error::Contract(format!("{name} must be in 1..={MAX_DIM}, got {v}")));
            }
        }
        if self.n_tokens < 2 {
            return Err(Error::Contract("n_tokens must be at least 2".into()));
        }
        if self.coherent_block_count > self.n_tokens {
            return Err(Error::Contract(format!(
                "{} blocks cannot fit in {} tokens",
                self.coherent_block_count, self.n_tokens
            )));
        }
        if !(0.0..=1.0).contains(&self.noise_level) {
            return Err(Error::Contract(format!("noise_level {} outside [0, 1]", self.noise_level)));
        }
        if !(self.hallucination_rate > 0.0 && self.hallucination_rate < 1.0) {
            return Err(Error::Contract(format!(
                "hallucination_rate {} outside (0, 1)",
                self.hallucination_rate
            )));
        }
        if self.corpus_size == 0 {
            return Err(Error::Contract("corpus_size must be positive".into()));
        }
        if let Some(layers) = &self.signal_layers {
            if let Some(l) = layers.iter().find(|&&l| l >= self.n_layers) {
                return Err(Error::Contract(format!("signal layer {l} out of range")));
            }
        }
        Ok(())
    }

    fn carries_signal(&self, layer: usize) -> bool {
        self.signal_layers.as_ref().is_none_or(|ls| ls.contains(&layer))
    }

    pub fn hallucination_count(&self) -> usize {
        let n = (self.hallucination_rate * self.corpus_size as f64).round() as usize;
        if self.corpus_size >= 2 {
            n.clamp(1, self.corpus_size - 1)
        } else {
            n.min(self.corpus_size)
        }
    }
}

pub fn sample_id(index: usize) -> String {
    format!("synth-{index:05}")
}

/// Labels of the whole corpus: exactly `hallucination_count` hallucinations
/// at seeded random positions.
pub fn corpus_labels(spec: &SynthSpec) -> Vec<Label> {
    let mut labels = vec![Label::Valid; spec.corpus_size];
    for l in labels.iter_mut().take(spec.hallucination_count()) {
        *l = Label::Hallucination;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(0);
    labels.shuffle(&mut rng);
    labels
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// One sample. The random stream depends only on `(spec.seed, index)` and
/// draws the same numbers for both labels.
pub fn generate_sample(spec: &SynthSpec, index: usize, label: Label) -> Result<SampleTrace> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(index as u64 + 1);
    let n = spec.n_tokens;
    let d = spec.hidden_dim;
    let blocks = spec.coherent_block_count;

    let mut cuts: Vec<usize> = index::sample(&mut rng, n - 1, blocks - 1).into_iter().map(|c| c + 1).collect();
    cuts.sort_unstable();
    let mut block_of = vec![0usize; n];
    for (i, b) in block_of.iter_mut().enumerate() {
        *b = cuts.partition_point(|&c| c <= i);
    }
    let strength: f64 = rng.random_range(0.70..0.95);
    let base_noise: f64 = rng.random_range(0.15..0.60);
    let hallucinated = label == Label::Hallucination;

    let mut layers = Vec::with_capacity(spec.n_layers);
    for layer in 0..spec.n_layers {
        let eta = if hallucinated && spec.carries_signal(layer) {
            spec.noise_level
        } else {
            0.0
        };
        let layer_strength = (strength + rng.random_range(-0.05..0.05)).min(0.98);
        let mut attention = Vec::with_capacity(spec.n_heads * n * n);
        for _ in 0..spec.n_heads {
            for i in 0..n {
                let raw: Vec<f64> = (0..n).map(|_| (0.5 * normal(&mut rng)).exp()).collect();
                let inside: f64 = (0..n).filter(|&j| block_of[j] == block_of[i]).map(|j| raw[j]).sum();
                let outside: f64 = (0..n).filter(|&j| block_of[j] != block_of[i]).map(|j| raw[j]).sum();
                let s = if outside > 0.0 { layer_strength } else { 1.0 };
                let row: Vec<f64> = (0..n)
                    .map(|j| {
                        let w = if block_of[j] == block_of[i] {
                            s * raw[j] / inside
                        } else {
                            (1.0 - s) * raw[j] / outside
                        };
                        (1.0 - eta) * w + eta / n as f64
                    })
                    .collect();
                let total: f64 = row.iter().sum();
                attention.extend(row.iter().map(|w| (w / total) as f32));
            }
        }
        let means: Vec<f64> = (0..blocks * d).map(|_| normal(&mut rng)).collect();
        let mut hidden = Vec::with_capacity(n * d);
        for &b in block_of.iter() {
            for k in 0..d {
                let base = normal(&mut rng);
                let injected = normal(&mut rng);
                hidden.push((means[b * d + k] + base_noise * base + eta * injected) as f32);
            }
        }
        layers.push(LayerPayload { attention, hidden });
    }

    let scale: f64 = rng.random_range(0.2..1.0);
    let logprobs: Vec<f32> = (0..n - 1)
        .map(|_| {
            let u: f64 = rng.random_range(f64::EPSILON..1.0);
            (scale * u.ln()) as f32
        })
        .collect();

    let mut trace = SampleTrace {
        sample_id: sample_id(index),
        label,
        n_tokens: n,
        n_heads: spec.n_heads,
        hidden_dim: d,
        payload_kind: PayloadKind::RawHeads,
        dtype: spec.dtype,
        capture_convention: CAPTURE_CONVENTION.into(),
        layers,
        token_logprobs: Some(logprobs),
    };
    if spec.payload_kind == PayloadKind::Aggregated {
        trace = aggregate_payload(trace)?;
    }
    Ok(trace.quantized())
}

/// Replaces raw heads by the mass-weighted symmetric graph of each layer.
pub fn aggregate_payload(mut trace: SampleTrace) -> Result<SampleTrace> {
    if trace.payload_kind == PayloadKind::Aggregated {
        return Ok(trace);
    }
    let graphs = (0..trace.n_layers())
        .map(|l| trace.layer_graph(l))
        .collect::<Result<Vec<_>>>()?;
    for (payload, g) in trace.layers.iter_mut().zip(graphs) {
        let w: &DMatrix<f64> = g.weights();
        payload.attention = w.transpose().iter().map(|&v| v as f32).collect();
    }
    trace.payload_kind = PayloadKind::Aggregated;
    trace.n_heads = 0;
    Ok(trace)
}

/// The whole corpus in memory, generated in parallel.
pub fn generate_traces(spec: &SynthSpec) -> Result<Vec<SampleTrace>> {
    spec.validate()?;
    let labels = corpus_labels(spec);
    labels
        .par_iter()
        .enumerate()
        .map(|(i, &label)| generate_sample(spec, i, label))
        .collect()
}

/// Writes one trace file per sample and `manifest.json` into `out_dir`.
pub fn generate_corpus(spec: &SynthSpec, out_dir: &Path) -> Result<CorpusManifest> {
    spec.validate()?;
    fs::create_dir_all(out_dir)?;
    let labels = corpus_labels(spec);
    let entries = labels
        .par_iter()
        .enumerate()
        .map(|(i, &label)| {
            let trace = generate_sample(spec, i, label)?;
            let file = format!("{}.sptr", trace.sample_id);
            let bytes = write_trace_file(&trace, &out_dir.join(&file))?;
            Ok(ManifestEntry {
                id: trace.sample_id,
                path: file.into(),
                label,
                byte_length: bytes,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut manifest = CorpusManifest::new(format!("synth-{}", spec.seed), "synthetic", "synthetic", 0.0);
    for e in entries {
        manifest.push(e)?;
    }
    manifest.stamp = Some(Stamp::new("synth", Some(spec.seed), spec));
    manifest.save(&out_dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}

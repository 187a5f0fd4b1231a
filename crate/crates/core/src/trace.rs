//! Per-sample trace container ("SPTR") and corpus manifest.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "SPTR"            4 bytes magic
//! version           u16 (= 1)
//! flags             u16 (bit 0: raw heads, bit 1: has log-probs)
//! header length     u32
//! header            UTF-8 JSON object
//! per layer         attention (H x N x N raw, or N x N aggregated), then
//!                   hidden states (N x d); row-major, declared dtype
//! log-probs         (N - 1) x f32, only when flag bit 1 is set
//! crc32             u32 over every preceding byte
//! ```

use std::fmt;
use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use half::f16;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::diagnostics::HiddenStates;
use crate::error::{Error, Result};
use crate::graph::{aggregate_heads, symmetrize, AttentionGraph, HeadAttention};
use crate::stamp::Stamp;

pub const MAGIC: &[u8; 4] = b"SPTR";
pub const FORMAT_VERSION: u16 = 1;
pub const FLAG_RAW_HEADS: u16 = 1;
pub const FLAG_LOGPROBS: u16 = 1 << 1;

/// Cap on each of N, L, H and d.
pub const MAX_DIM: usize = 1 << 16;
/// Cap on the total tensor payload in bytes.
pub const MAX_PAYLOAD_BYTES: u64 = 1 << 34;
/// Cap on the JSON header.
pub const MAX_HEADER_BYTES: u32 = 1 << 20;

/// Row sums of raw-head payloads further than this from 1 are reported.
pub const STOCHASTIC_WARN_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Valid,
    Hallucination,
    Unlabeled,
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Valid => "valid",
            Label::Hallucination => "hallucination",
            Label::Unlabeled => "unlabeled",
        })
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "valid" => Ok(Label::Valid),
            "hallucination" => Ok(Label::Hallucination),
            "unlabeled" => Ok(Label::Unlabeled),
            other => Err(Error::InvalidPayload(format!("unknown label '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PayloadKind {
    RawHeads,
    Aggregated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    F16,
    F32,
}

impl DType {
    pub fn size(self) -> usize {
        match self {
            DType::F16 => 2,
            DType::F32 => 4,
        }
    }
}

/// Attention and hidden-state tensors of one layer, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerPayload {
    /// `H*N*N` values for raw heads, `N*N` for an aggregated graph.
    pub attention: Vec<f32>,
    /// `N*d` values.
    pub hidden: Vec<f32>,
}

/// One tool call's captured internals.
///
/// Tensors are held at storage precision; accessors upcast to f64.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleTrace {
    pub sample_id: String,
    pub label: Label,
    pub n_tokens: usize,
    /// 0 for aggregated payloads.
    pub n_heads: usize,
    pub hidden_dim: usize,
    pub payload_kind: PayloadKind,
    pub dtype: DType,
    pub capture_convention: String,
    pub layers: Vec<LayerPayload>,
    /// Log-probabilities of the N - 1 generated tokens.
    pub token_logprobs: Option<Vec<f32>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    sample_id: String,
    label: Label,
    n_tokens: usize,
    n_layers: usize,
    n_heads: usize,
    hidden_dim: usize,
    payload_kind: PayloadKind,
    dtype: DType,
    capture_convention: String,
    logprob_count: usize,
}

impl Header {
    fn attention_len(&self) -> u64 {
        let nn = (self.n_tokens as u64) * (self.n_tokens as u64);
        match self.payload_kind {
            PayloadKind::RawHeads => self.n_heads as u64 * nn,
            PayloadKind::Aggregated => nn,
        }
    }

    fn hidden_len(&self) -> u64 {
        self.n_tokens as u64 * self.hidden_dim as u64
    }

    /// Checks caps and internal consistency before anything is allocated.
    fn check(&self) -> std::result::Result<u64, String> {
        for (name, v) in [
            ("n_tokens", self.n_tokens),
            ("n_layers", self.n_layers),
            ("n_heads", self.n_heads),
            ("hidden_dim", self.hidden_dim),
        ] {
            if v > MAX_DIM {
                return Err(format!("{name} = {v} exceeds cap {MAX_DIM}"));
            }
        }
        if self.n_tokens == 0 || self.n_layers == 0 || self.hidden_dim == 0 {
            return Err("n_tokens, n_layers and hidden_dim must be positive".into());
        }
        match self.payload_kind {
            PayloadKind::RawHeads if self.n_heads == 0 => return Err("raw-heads payload with 0 heads".into()),
            PayloadKind::Aggregated if self.n_heads != 0 => {
                return Err("aggregated payload must declare 0 heads".into())
            }
            _ => {}
        }
        if self.logprob_count != 0 && self.logprob_count != self.n_tokens - 1 {
            return Err(format!(
                "logprob_count {} should be n_tokens - 1 = {}",
                self.logprob_count,
                self.n_tokens - 1
            ));
        }
        let per_layer = (self.attention_len() + self.hidden_len()) * self.dtype.size() as u64;
        let total = per_layer
            .checked_mul(self.n_layers as u64)
            .and_then(|t| t.checked_add(4 * self.logprob_count as u64))
            .ok_or("payload size overflows")?;
        if total > MAX_PAYLOAD_BYTES {
            return Err(format!("declared payload {total} bytes exceeds cap {MAX_PAYLOAD_BYTES}"));
        }
        Ok(total)
    }
}

impl SampleTrace {
    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    fn header(&self) -> Header {
        Header {
            sample_id: self.sample_id.clone(),
            label: self.label,
            n_tokens: self.n_tokens,
            n_layers: self.layers.len(),
            n_heads: self.n_heads,
            hidden_dim: self.hidden_dim,
            payload_kind: self.payload_kind,
            dtype: self.dtype,
            capture_convention: self.capture_convention.clone(),
            logprob_count: self.token_logprobs.as_ref().map_or(0, |v| v.len()),
        }
    }

    /// Dimension and value checks shared by the writer and reader.
    pub fn validate(&self) -> Result<()> {
        let h = self.header();
        h.check().map_err(Error::Dimension)?;
        if let Some(lp) = &self.token_logprobs {
            if lp.len() != self.n_tokens - 1 {
                return Err(Error::Dimension(format!(
                    "{} log-probs for {} tokens",
                    lp.len(),
                    self.n_tokens
                )));
            }
            if let Some(bad) = lp.iter().find(|v| !(**v <= 0.0)) {
                return Err(Error::InvalidPayload(format!("log-prob {bad} is not <= 0")));
            }
        }
        for (l, layer) in self.layers.iter().enumerate() {
            if layer.attention.len() as u64 != h.attention_len() {
                return Err(Error::Dimension(format!(
                    "layer {l}: attention has {} values, expected {}",
                    layer.attention.len(),
                    h.attention_len()
                )));
            }
            if layer.hidden.len() as u64 != h.hidden_len() {
                return Err(Error::Dimension(format!(
                    "layer {l}: hidden states have {} values, expected {}",
                    layer.hidden.len(),
                    h.hidden_len()
                )));
            }
        }
        Ok(())
    }

    fn layer_payload(&self, layer: usize) -> Result<&LayerPayload> {
        self.layers.get(layer).ok_or_else(|| {
            Error::Dimension(format!("layer {layer} out of range (trace has {})", self.layers.len()))
        })
    }

    /// Per-head attention matrices of a raw-heads trace.
    pub fn layer_heads(&self, layer: usize) -> Result<Vec<HeadAttention>> {
        if self.payload_kind != PayloadKind::RawHeads {
            return Err(Error::Contract("trace carries an aggregated payload, not raw heads".into()));
        }
        let p = self.layer_payload(layer)?;
        let n = self.n_tokens;
        Ok(p.attention
            .chunks_exact(n * n)
            .enumerate()
            .map(|(h, block)| {
                let m = DMatrix::from_row_iterator(n, n, block.iter().map(|&v| v as f64));
                HeadAttention::new(layer, h, m)
            })
            .collect())
    }

    /// The aggregated attention graph of `layer`.
    ///
    /// Raw heads are symmetrized and mass-weighted. An aggregated payload is
    /// passed through the symmetrization, which leaves an already symmetric
    /// matrix unchanged.
    pub fn layer_graph(&self, layer: usize) -> Result<AttentionGraph> {
        match self.payload_kind {
            PayloadKind::RawHeads => {
                let heads = self
                    .layer_heads(layer)?
                    .iter()
                    .map(HeadAttention::symmetrized)
                    .collect::<Result<Vec<_>>>()?;
                aggregate_heads(&heads)
            }
            PayloadKind::Aggregated => {
                let p = self.layer_payload(layer)?;
                let n = self.n_tokens;
                let m = DMatrix::from_row_iterator(n, n, p.attention.iter().map(|&v| v as f64));
                AttentionGraph::from_weights(layer, symmetrize(&m)?)
            }
        }
    }

    pub fn hidden_states(&self, layer: usize) -> Result<HiddenStates> {
        let p = self.layer_payload(layer)?;
        let m = DMatrix::from_row_iterator(self.n_tokens, self.hidden_dim, p.hidden.iter().map(|&v| v as f64));
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidPayload(format!("layer {layer}: non-finite hidden state")));
        }
        Ok(HiddenStates::new(layer, m))
    }

    /// `(layer, head, max row-sum deviation)` for raw heads whose rows stray
    /// from 1 by more than `tolerance`.
    pub fn stochasticity_violations(&self, tolerance: f64) -> Vec<(usize, usize, f64)> {
        if self.payload_kind != PayloadKind::RawHeads {
            return Vec::new();
        }
        let mut out = Vec::new();
        for layer in 0..self.layers.len() {
            if let Ok(heads) = self.layer_heads(layer) {
                for h in heads {
                    let dev = h.row_stochastic_deviation();
                    if dev > tolerance {
                        out.push((layer, h.head_index, dev));
                    }
                }
            }
        }
        out
    }

    /// Rounds every tensor to the declared storage precision.
    pub fn quantized(mut self) -> Self {
        if self.dtype == DType::F16 {
            for l in &mut self.layers {
                for v in l.attention.iter_mut().chain(l.hidden.iter_mut()) {
                    *v = f16::from_f32(*v).to_f32();
                }
            }
        }
        self
    }
}

struct CrcWriter<W> {
    inner: W,
    hasher: crc32fast::Hasher,
    written: u64,
}

impl<W: Write> Write for CrcWriter<W> {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        let n = self.inner.write(buf)?;
        self.hasher.update(&buf[..n]);
        self.written += n as u64;
        Ok(n)
    }

    fn flush(&mut self) -> io::Result<()> {
        self.inner.flush()
    }
}

fn write_tensor<W: Write>(w: &mut W, values: &[f32], dtype: DType) -> io::Result<()> {
    let mut buf = Vec::with_capacity(values.len() * dtype.size());
    match dtype {
        DType::F32 => values.iter().for_each(|v| buf.extend_from_slice(&v.to_le_bytes())),
        DType::F16 => values
            .iter()
            .for_each(|v| buf.extend_from_slice(&f16::from_f32(*v).to_le_bytes())),
    }
    w.write_all(&buf)
}

/// Serializes `trace`. Returns the number of bytes written.
pub fn write_trace<W: Write>(trace: &SampleTrace, out: W) -> Result<u64> {
    trace.validate()?;
    let header = serde_json::to_vec(&trace.header())?;
    if header.len() > MAX_HEADER_BYTES as usize {
        return Err(Error::Dimension(format!("header is {} bytes", header.len())));
    }
    let mut flags = 0u16;
    if trace.payload_kind == PayloadKind::RawHeads {
        flags |= FLAG_RAW_HEADS;
    }
    if trace.token_logprobs.is_some() {
        flags |= FLAG_LOGPROBS;
    }
    let mut w = CrcWriter {
        inner: out,
        hasher: crc32fast::Hasher::new(),
        written: 0,
    };
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&flags.to_le_bytes())?;
    w.write_all(&(header.len() as u32).to_le_bytes())?;
    w.write_all(&header)?;
    for layer in &trace.layers {
        write_tensor(&mut w, &layer.attention, trace.dtype)?;
        write_tensor(&mut w, &layer.hidden, trace.dtype)?;
    }
    if let Some(lp) = &trace.token_logprobs {
        write_tensor(&mut w, lp, DType::F32)?;
    }
    let crc = w.hasher.clone().finalize();
    let mut inner = w.inner;
    inner.write_all(&crc.to_le_bytes())?;
    inner.flush()?;
    Ok(w.written + 4)
}

pub fn trace_to_bytes(trace: &SampleTrace) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_trace(trace, &mut buf)?;
    Ok(buf)
}

struct CrcReader<R> {
    inner: R,
    hasher: crc32fast::Hasher,
    offset: u64,
}

impl<R: Read> CrcReader<R> {
    fn read_exact_at(&mut self, buf: &mut [u8]) -> Result<()> {
        let start = self.offset;
        match self.inner.read_exact(buf) {
            Ok(()) => {
                self.hasher.update(buf);
                self.offset += buf.len() as u64;
                Ok(())
            }
            Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => Err(Error::format(
                start,
                format!("stream truncated while reading {} bytes", buf.len()),
            )),
            Err(e) => Err(e.into()),
        }
    }

    fn u16(&mut self) -> Result<u16> {
        let mut b = [0u8; 2];
        self.read_exact_at(&mut b)?;
        Ok(u16::from_le_bytes(b))
    }

    fn u32(&mut self) -> Result<u32> {
        let mut b = [0u8; 4];
        self.read_exact_at(&mut b)?;
        Ok(u32::from_le_bytes(b))
    }

    /// Reads `count` values, growing the buffer as bytes actually arrive.
    fn tensor(&mut self, count: u64, dtype: DType) -> Result<Vec<f32>> {
        const CHUNK: u64 = 1 << 16;
        let mut out = Vec::with_capacity(count.min(CHUNK) as usize);
        let mut remaining = count;
        let mut buf = vec![0u8; (CHUNK as usize) * dtype.size()];
        while remaining > 0 {
            let take = remaining.min(CHUNK) as usize;
            let bytes = &mut buf[..take * dtype.size()];
            self.read_exact_at(bytes)?;
            match dtype {
                DType::F32 => out.extend(
                    bytes
                        .chunks_exact(4)
                        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])),
                ),
                DType::F16 => out.extend(
                    bytes
                        .chunks_exact(2)
                        .map(|c| f16::from_le_bytes([c[0], c[1]]).to_f32()),
                ),
            }
            remaining -= take as u64;
        }
        Ok(out)
    }
}

/// Parses and verifies one trace. The stream must end right after the checksum.
pub fn read_trace<R: Read>(input: R) -> Result<SampleTrace> {
    let mut r = CrcReader {
        inner: input,
        hasher: crc32fast::Hasher::new(),
        offset: 0,
    };
    let mut magic = [0u8; 4];
    r.read_exact_at(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::format(0, format!("bad magic {magic:02x?}")));
    }
    let version = r.u16()?;
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let flags = r.u16()?;
    if flags & !(FLAG_RAW_HEADS | FLAG_LOGPROBS) != 0 {
        return Err(Error::format(6, format!("unknown flag bits {flags:#06x}")));
    }
    let header_len = r.u32()?;
    if header_len > MAX_HEADER_BYTES {
        return Err(Error::format(8, format!("header length {header_len} exceeds cap {MAX_HEADER_BYTES}")));
    }
    let header_offset = r.offset;
    let mut raw = vec![0u8; header_len as usize];
    r.read_exact_at(&mut raw)?;
    let header: Header = serde_json::from_slice(&raw)
        .map_err(|e| Error::format(header_offset, format!("bad header: {e}")))?;
    header.check().map_err(|m| Error::format(header_offset, m))?;
    let raw_flag = flags & FLAG_RAW_HEADS != 0;
    if raw_flag != (header.payload_kind == PayloadKind::RawHeads) {
        return Err(Error::format(6, "flags disagree with header payload kind"));
    }
    if (flags & FLAG_LOGPROBS != 0) != (header.logprob_count > 0) {
        return Err(Error::format(6, "flags disagree with header log-prob count"));
    }

    let mut layers = Vec::with_capacity(header.n_layers.min(1024));
    for _ in 0..header.n_layers {
        let attention = r.tensor(header.attention_len(), header.dtype)?;
        let hidden = r.tensor(header.hidden_len(), header.dtype)?;
        layers.push(LayerPayload { attention, hidden });
    }
    let token_logprobs = if header.logprob_count > 0 {
        Some(r.tensor(header.logprob_count as u64, DType::F32)?)
    } else {
        None
    };
    let computed = r.hasher.clone().finalize();
    let crc_offset = r.offset;
    let mut stored = [0u8; 4];
    r.inner
        .read_exact(&mut stored)
        .map_err(|_| Error::format(crc_offset, "stream truncated before checksum"))?;
    let stored = u32::from_le_bytes(stored);
    if stored != computed {
        return Err(Error::Checksum { stored, computed });
    }
    let mut extra = [0u8; 1];
    if r.inner.read(&mut extra)? != 0 {
        return Err(Error::format(crc_offset + 4, "trailing bytes after checksum"));
    }

    let trace = SampleTrace {
        sample_id: header.sample_id,
        label: header.label,
        n_tokens: header.n_tokens,
        n_heads: header.n_heads,
        hidden_dim: header.hidden_dim,
        payload_kind: header.payload_kind,
        dtype: header.dtype,
        capture_convention: header.capture_convention,
        layers,
        token_logprobs,
    };
    trace.validate()?;
    for (layer, head, dev) in trace.stochasticity_violations(STOCHASTIC_WARN_TOLERANCE) {
        log::warn!(
            "trace {}: layer {layer} head {head} rows deviate from 1 by {dev:.2e}",
            trace.sample_id
        );
    }
    Ok(trace)
}

pub fn read_trace_file(path: &Path) -> Result<SampleTrace> {
    let f = fs::File::open(path)?;
    read_trace(io::BufReader::new(f))
}

pub fn write_trace_file(trace: &SampleTrace, path: &Path) -> Result<u64> {
    let f = fs::File::create(path)?;
    let mut w = io::BufWriter::new(f);
    let n = write_trace(trace, &mut w)?;
    w.flush()?;
    Ok(n)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    /// Relative to the manifest's directory.
    pub path: PathBuf,
    pub label: Label,
    pub byte_length: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCounts {
    pub valid: usize,
    pub hallucination: usize,
    pub unlabeled: usize,
}

impl LabelCounts {
    pub fn tally<'a>(labels: impl IntoIterator<Item = &'a Label>) -> Self {
        let mut c = Self::default();
        for l in labels {
            match l {
                Label::Valid => c.valid += 1,
                Label::Hallucination => c.hallucination += 1,
                Label::Unlabeled => c.unlabeled += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.valid + self.hallucination + self.unlabeled
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub corpus_id: String,
    pub model_name: String,
    pub domain: String,
    pub temperature: f64,
    pub entries: Vec<ManifestEntry>,
    pub counts: LabelCounts,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stamp: Option<Stamp>,
}

impl CorpusManifest {
    pub fn new(corpus_id: impl Into<String>, model_name: impl Into<String>, domain: impl Into<String>, temperature: f64) -> Self {
        Self {
            corpus_id: corpus_id.into(),
            model_name: model_name.into(),
            domain: domain.into(),
            temperature,
            entries: Vec::new(),
            counts: LabelCounts::default(),
            stamp: None,
        }
    }

    pub fn push(&mut self, entry: ManifestEntry) -> Result<()> {
        if self.entries.iter().any(|e| e.id == entry.id) {
            return Err(Error::InvalidPayload(format!("duplicate sample id '{}'", entry.id)));
        }
        self.entries.push(entry);
        self.counts = LabelCounts::tally(self.entries.iter().map(|e| &e.label));
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Writes to a sibling temp file and renames it over `path`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        atomic_write(path, text.as_bytes())
    }

    pub fn resolve(&self, manifest_path: &Path, entry: &ManifestEntry) -> PathBuf {
        manifest_path.parent().unwrap_or(Path::new(".")).join(&entry.path)
    }
}

pub(crate) fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp-{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub sample_id: Option<String>,
    pub reason: String,
}

/// Dimensions every trace in a corpus is expected to share.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusShape {
    pub n_layers: usize,
    pub n_heads: usize,
    pub hidden_dim: usize,
    pub payload_kind: PayloadKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub corpus_id: String,
    pub entries: usize,
    pub readable: usize,
    pub declared_counts: LabelCounts,
    pub recomputed_counts: LabelCounts,
    pub shape: Option<CorpusShape>,
    pub findings: Vec<Finding>,
    pub warnings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.findings.is_empty()
    }
}

/// Checks that every trace a manifest references is present and intact and
/// that the manifest's bookkeeping matches the traces.
pub fn validate_corpus(manifest_path: &Path) -> Result<ValidationReport> {
    let manifest = CorpusManifest::load(manifest_path)?;
    let mut findings = Vec::new();
    let mut warnings = Vec::new();
    let mut readable = 0;
    let mut shape: Option<CorpusShape> = None;
    let mut seen = std::collections::HashSet::new();

    for entry in &manifest.entries {
        let id = Some(entry.id.clone());
        let mut finding = |reason: String| findings.push(Finding { sample_id: id.clone(), reason });
        if !seen.insert(entry.id.as_str()) {
            finding("duplicate sample id".into());
        }
        let path = manifest.resolve(manifest_path, entry);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) => {
                finding(format!("cannot read {}: {e}", path.display()));
                continue;
            }
        };
        if bytes.len() as u64 != entry.byte_length {
            finding(format!(
                "file is {} bytes, manifest says {}",
                bytes.len(),
                entry.byte_length
            ));
        }
        let trace = match read_trace(bytes.as_slice()) {
            Ok(t) => t,
            Err(e) => {
                finding(e.to_string());
                continue;
            }
        };
        readable += 1;
        if trace.sample_id != entry.id {
            finding(format!("trace id '{}' differs from manifest id", trace.sample_id));
        }
        if trace.label != entry.label {
            finding(format!("trace label {} differs from manifest label {}", trace.label, entry.label));
        }
        let this = CorpusShape {
            n_layers: trace.n_layers(),
            n_heads: trace.n_heads,
            hidden_dim: trace.hidden_dim,
            payload_kind: trace.payload_kind,
        };
        match shape {
            None => shape = Some(this),
            Some(s) if s != this => finding(format!("shape {this:?} differs from corpus shape {s:?}")),
            _ => {}
        }
        for (layer, head, dev) in trace.stochasticity_violations(STOCHASTIC_WARN_TOLERANCE) {
            warnings.push(Finding {
                sample_id: Some(entry.id.clone()),
                reason: format!("layer {layer} head {head}: row sums deviate from 1 by {dev:.2e}"),
            });
        }
    }
    let recomputed = LabelCounts::tally(manifest.entries.iter().map(|e| &e.label));
    if recomputed != manifest.counts {
        findings.push(Finding {
            sample_id: None,
            reason: format!("declared counts {:?} differ from entries {:?}", manifest.counts, recomputed),
        });
    }
    Ok(ValidationReport {
        corpus_id: manifest.corpus_id,
        entries: manifest.entries.len(),
        readable,
        declared_counts: manifest.counts,
        recomputed_counts: recomputed,
        shape,
        findings,
        warnings,
    })
}

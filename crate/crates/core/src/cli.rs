//! The `spectral-guard` command line.
//!
//! Exit codes: 0 success, 2 a sample failed under `--strict`, 64 usage
//! error, 65 data error.

use std::collections::HashMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{baseline_eval, corpus_baseline_scores, flag_everything, BaselineReport};
use crate::detection::{
    calibrate_config, evaluate_config, search_features, CalibrationInfo, Combinator, DetectorConfig, JointCalibration,
    Objective, RankedConfig, SearchOptions, SplitInfo, Strategy, DEFAULT_BEAM_WIDTH,
};
use crate::diagnostics::profile_sample;
use crate::error::Error;
use crate::features::{FeatureKey, FeatureTable, Metric};
use crate::metrics::{render_table, BootstrapOptions, EvalReport};
use crate::stamp::Stamp;
use crate::synth::{generate_corpus, SynthSpec, MANIFEST_FILE};
use crate::trace::{
    atomic_write, read_trace_file, validate_corpus, CorpusManifest, DType, Label, PayloadKind, SampleTrace,
    STOCHASTIC_WARN_TOLERANCE,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_STRICT: i32 = 2;
pub const EXIT_USAGE: i32 = 64;
pub const EXIT_DATA: i32 = 65;

pub const THREADS_ENV: &str = "SPECTRAL_GUARD_THREADS";

#[derive(Debug, Parser)]
#[command(name = "spectral-guard", version, about = "Spectral hallucination guardrails for tool calls")]
pub struct Cli {
    /// Worker threads (defaults to one per core).
    #[arg(long, global = true, env = THREADS_ENV)]
    pub threads: Option<usize>,

    /// More log output; repeat for debug level.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus of trace files and a manifest.
    Synth(SynthArgs),
    /// Compute the per-sample spectral feature table of a corpus.
    Diagnose(DiagnoseArgs),
    /// Fit thresholds for a fixed set of features.
    Calibrate(CalibrateArgs),
    /// Search feature subsets for the best detectors.
    Search(SearchArgs),
    /// Evaluate a stored detector configuration.
    Evaluate(EvaluateArgs),
    /// Evaluate the perplexity and mean log-probability baselines.
    Baseline(BaselineArgs),
    /// Check a corpus manifest and its trace files.
    Validate(ValidateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObjectiveArg {
    Auc,
    Recall,
    Youden,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CombinatorArg {
    Any,
    All,
}

impl From<CombinatorArg> for Combinator {
    fn from(c: CombinatorArg) -> Self {
        match c {
            CombinatorArg::Any => Combinator::AnyFires,
            CombinatorArg::All => Combinator::AllFire,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyArg {
    Exhaustive,
    Greedy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DTypeArg {
    F16,
    F32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PayloadArg {
    RawHeads,
    Aggregated,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ObjectiveOpts {
    #[arg(long, value_enum, default_value = "recall")]
    pub objective: ObjectiveArg,
    /// Minimum precision for the recall objective.
    #[arg(long, default_value_t = 0.20)]
    pub precision_floor: f64,
    #[arg(long, value_enum, default_value = "any")]
    pub combinator: CombinatorArg,
}

impl ObjectiveOpts {
    fn objective(&self) -> Result<Objective, CliError> {
        if !(0.0..=1.0).contains(&self.precision_floor) {
            return Err(CliError::Usage(format!("--precision-floor {} outside [0, 1]", self.precision_floor)));
        }
        Ok(match self.objective {
            ObjectiveArg::Auc => Objective::Auc,
            ObjectiveArg::Youden => Objective::Youden,
            ObjectiveArg::Recall => Objective::RecallAtPrecision {
                floor: self.precision_floor,
            },
        })
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SplitOpts {
    #[arg(long)]
    pub seed: u64,
    /// Samples used for calibration; the rest are held out.
    #[arg(long, default_value_t = 100)]
    pub calibration_size: usize,
    #[arg(long, default_value_t = 1000)]
    pub bootstrap: usize,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 200)]
    pub samples: usize,
    #[arg(long, default_value_t = 32)]
    pub tokens: usize,
    #[arg(long, default_value_t = 4)]
    pub layers: usize,
    #[arg(long, default_value_t = 16)]
    pub hidden_dim: usize,
    #[arg(long, default_value_t = 4)]
    pub heads: usize,
    #[arg(long, default_value_t = 4)]
    pub blocks: usize,
    #[arg(long, default_value_t = 0.5)]
    pub noise: f64,
    #[arg(long, default_value_t = 0.2)]
    pub rate: f64,
    #[arg(long, value_enum, default_value = "f32")]
    pub dtype: DTypeArg,
    #[arg(long, value_enum, default_value = "raw-heads")]
    pub payload: PayloadArg,
    /// Comma-separated layers that carry the signal (default: all).
    #[arg(long, value_delimiter = ',')]
    pub signal_layers: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct DiagnoseArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Feature table (CSV). Rows already present are kept and skipped.
    #[arg(long)]
    pub out: PathBuf,
    /// Exit with status 2 if any sample fails.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub table: PathBuf,
    /// Detector configuration (JSON).
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated features, e.g. `L3_entropy,L5_hfer`.
    #[arg(long, value_delimiter = ',', required = true)]
    pub features: Vec<String>,
    #[command(flatten)]
    pub objective: ObjectiveOpts,
    #[command(flatten)]
    pub split: SplitOpts,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SearchArgs {
    #[arg(long)]
    pub table: PathBuf,
    /// Ranked results (JSON).
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the best configuration here.
    #[arg(long)]
    pub config_out: Option<PathBuf>,
    #[arg(long, default_value_t = 2)]
    pub max_rules: usize,
    #[arg(long, value_enum, default_value = "exhaustive")]
    pub strategy: StrategyArg,
    #[arg(long, default_value_t = DEFAULT_BEAM_WIDTH)]
    pub beam: usize,
    /// Configurations evaluated on the held-out split.
    #[arg(long, default_value_t = 10)]
    pub top: usize,
    /// Only these layers.
    #[arg(long, value_delimiter = ',')]
    pub layers: Option<Vec<usize>>,
    /// Only these metrics.
    #[arg(long, value_delimiter = ',')]
    pub metrics: Option<Vec<String>>,
    #[command(flatten)]
    pub objective: ObjectiveOpts,
    #[command(flatten)]
    pub split: SplitOpts,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub table: PathBuf,
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Evaluate on every row instead of the held-out split recorded in the config.
    #[arg(long)]
    pub all: bool,
    /// Bootstrap seed when the config records none.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 1000)]
    pub bootstrap: usize,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct BaselineArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1000)]
    pub bootstrap: usize,
    #[command(flatten)]
    pub objective: ObjectiveOpts,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ValidateArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Write the full report (JSON) here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(Error),
    Strict(usize),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
            CliError::Strict(_) => EXIT_STRICT,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(e) => write!(f, "{e}"),
            CliError::Strict(n) => write!(f, "{n} sample(s) failed under --strict"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Unsupported(m) => CliError::Usage(m),
            other => CliError::Data(other),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Parses `args` and runs the command, returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .try_init();
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("spectral-guard: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: &Cli) -> CliResult<()> {
    match cli.threads {
        Some(0) => Err(CliError::Usage("--threads must be positive".into())),
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
            pool.install(|| dispatch(&cli.command))
        }
        None => dispatch(&cli.command),
    }
}

fn dispatch(cmd: &Command) -> CliResult<()> {
    match cmd {
        Command::Synth(a) => cmd_synth(a),
        Command::Diagnose(a) => cmd_diagnose(a),
        Command::Calibrate(a) => cmd_calibrate(a),
        Command::Search(a) => cmd_search(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Baseline(a) => cmd_baseline(a),
        Command::Validate(a) => cmd_validate(a),
    }
}

fn require_file(path: &Path, what: &str) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("{what} '{}' does not exist", path.display())))
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    text.push('\n');
    atomic_write(path, text.as_bytes())?;
    Ok(())
}

fn stamp_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".stamp.json");
    out.with_file_name(name)
}

/// Seeded split into (calibration, evaluation) row indices, each ascending.
pub fn calibration_split(n: usize, calibration_size: usize, seed: u64) -> crate::Result<(Vec<usize>, Vec<usize>)> {
    if calibration_size == 0 || calibration_size >= n {
        return Err(Error::Contract(format!(
            "calibration size {calibration_size} must be in 1..{n}"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut cal = idx[..calibration_size].to_vec();
    let mut eval = idx[calibration_size..].to_vec();
    cal.sort_unstable();
    eval.sort_unstable();
    Ok((cal, eval))
}

fn load_labeled_table(path: &Path) -> CliResult<FeatureTable> {
    require_file(path, "feature table")?;
    let table = FeatureTable::read_csv(fs::File::open(path).map_err(Error::from)?)?;
    let labeled = table.labeled();
    if labeled.len() < table.len() {
        warn!("ignoring {} unlabeled rows", table.len() - labeled.len());
    }
    Ok(labeled)
}

fn split_table(table: &FeatureTable, opts: &SplitOpts) -> CliResult<(FeatureTable, FeatureTable, SplitInfo)> {
    if !(50..=100).contains(&opts.calibration_size) {
        warn!("calibration size {} is outside the usual 50 to 100", opts.calibration_size);
    }
    let (cal, eval) = calibration_split(table.len(), opts.calibration_size, opts.seed).map_err(|e| CliError::Usage(e.to_string()))?;
    let info = SplitInfo {
        calibration_size: cal.len(),
        total: table.len(),
    };
    Ok((table.subset(&cal), table.subset(&eval), info))
}

fn bootstrap_opts(resamples: usize, seed: u64) -> BootstrapOptions {
    BootstrapOptions {
        resamples,
        seed,
        ..BootstrapOptions::default()
    }
}

fn cmd_synth(a: &SynthArgs) -> CliResult<()> {
    let spec = SynthSpec {
        n_tokens: a.tokens,
        n_layers: a.layers,
        hidden_dim: a.hidden_dim,
        n_heads: a.heads,
        coherent_block_count: a.blocks,
        noise_level: a.noise,
        hallucination_rate: a.rate,
        corpus_size: a.samples,
        seed: a.seed,
        dtype: match a.dtype {
            DTypeArg::F16 => DType::F16,
            DTypeArg::F32 => DType::F32,
        },
        payload_kind: match a.payload {
            PayloadArg::RawHeads => PayloadKind::RawHeads,
            PayloadArg::Aggregated => PayloadKind::Aggregated,
        },
        signal_layers: a.signal_layers.clone(),
    };
    spec.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let manifest = generate_corpus(&spec, &a.out)?;
    println!(
        "wrote {} samples ({} hallucinations) to {}",
        manifest.entries.len(),
        manifest.counts.hallucination,
        a.out.join(MANIFEST_FILE).display()
    );
    Ok(())
}

/// Samples processed between checkpoints of the output table.
const DIAGNOSE_CHUNK: usize = 64;

fn diagnose_one(manifest: &CorpusManifest, manifest_path: &Path, idx: usize) -> crate::Result<(usize, Vec<FeatureKey>, Vec<f64>)> {
    let entry = &manifest.entries[idx];
    let trace: SampleTrace = read_trace_file(&manifest.resolve(manifest_path, entry))?;
    if trace.sample_id != entry.id {
        return Err(Error::InvalidPayload(format!(
            "file holds sample '{}', manifest says '{}'",
            trace.sample_id, entry.id
        )));
    }
    for (layer, head, dev) in trace.stochasticity_violations(STOCHASTIC_WARN_TOLERANCE) {
        warn!("{}: layer {layer} head {head} rows deviate from 1 by {dev:.2e}", entry.id);
    }
    let profile = profile_sample(&trace)?;
    let keys = profile.keys();
    let values = keys
        .iter()
        .map(|&k| crate::features::FeatureSource::feature(&profile, k).unwrap_or(f64::NAN))
        .collect();
    Ok((idx, keys, values))
}

fn cmd_diagnose(a: &DiagnoseArgs) -> CliResult<()> {
    require_file(&a.manifest, "manifest")?;
    let manifest = CorpusManifest::load(&a.manifest)?;
    let mut done: HashMap<String, Vec<f64>> = HashMap::new();
    let mut keys: Option<Vec<FeatureKey>> = None;
    if a.out.is_file() {
        let existing = FeatureTable::read_csv(fs::File::open(&a.out).map_err(Error::from)?)?;
        for i in 0..existing.len() {
            let row: Vec<f64> = (0..existing.keys().len()).map(|c| existing.column_at(c)[i]).collect();
            done.insert(existing.sample_ids()[i].clone(), row);
        }
        keys = Some(existing.keys().to_vec());
        info!("resuming: {} rows already present", done.len());
    }
    let pending: Vec<usize> = (0..manifest.entries.len())
        .filter(|&i| !done.contains_key(&manifest.entries[i].id))
        .collect();
    let mut failures = 0usize;
    for chunk in pending.chunks(DIAGNOSE_CHUNK) {
        let results: Vec<_> = chunk
            .par_iter()
            .map(|&i| diagnose_one(&manifest, &a.manifest, i).map_err(|e| (i, e)))
            .collect();
        for r in results {
            match r {
                Ok((i, k, values)) => {
                    match &keys {
                        None => keys = Some(k),
                        Some(existing) if *existing != k => {
                            warn!("{}: feature columns differ from the rest of the corpus", manifest.entries[i].id);
                            failures += 1;
                            continue;
                        }
                        Some(_) => {}
                    }
                    done.insert(manifest.entries[i].id.clone(), values);
                }
                Err((i, e)) => {
                    warn!("{}: {e}", manifest.entries[i].id);
                    failures += 1;
                }
            }
        }
        write_table(&manifest, keys.clone().unwrap_or_default(), &done, &a.out)?;
    }
    write_table(&manifest, keys.unwrap_or_default(), &done, &a.out)?;
    write_json(&stamp_path(&a.out), &Stamp::new("diagnose", None, a))?;
    println!(
        "{} of {} samples in {} ({} failed)",
        done.len(),
        manifest.entries.len(),
        a.out.display(),
        failures
    );
    if failures > 0 && a.strict {
        return Err(CliError::Strict(failures));
    }
    Ok(())
}

/// Writes the rows computed so far in manifest order.
fn write_table(manifest: &CorpusManifest, keys: Vec<FeatureKey>, done: &HashMap<String, Vec<f64>>, out: &Path) -> CliResult<()> {
    let mut table = FeatureTable::new(keys);
    for e in &manifest.entries {
        if let Some(v) = done.get(&e.id) {
            table.push_row(e.id.clone(), e.label, v.clone())?;
        }
    }
    let mut buf = Vec::new();
    table.write_csv(&mut buf)?;
    atomic_write(out, &buf)?;
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StampedConfig {
    #[serde(flatten)]
    pub config: DetectorConfig,
    pub stamp: Stamp,
}

fn parse_features(names: &[String]) -> CliResult<Vec<FeatureKey>> {
    names
        .iter()
        .map(|n| FeatureKey::parse_column(n.trim()).map_err(|e| CliError::Usage(e.to_string())))
        .collect()
}

fn cmd_calibrate(a: &CalibrateArgs) -> CliResult<()> {
    let objective = a.objective.objective()?;
    let keys = parse_features(&a.features)?;
    let table = load_labeled_table(&a.table)?;
    if let Some(k) = keys.iter().find(|k| table.column(**k).is_none()) {
        return Err(CliError::Usage(format!("table has no column {}", k.column_name())));
    }
    let (cal, _, split) = split_table(&table, &a.split)?;
    let mode = if keys.len() == 2 {
        JointCalibration::ExactPair
    } else {
        JointCalibration::CoordinateAscent
    };
    let (mut config, confusion, value) = calibrate_config(&cal, &keys, a.objective.combinator.into(), &objective, mode)?;
    config.calibration = Some(CalibrationInfo {
        objective,
        seed: Some(a.split.seed),
        split: Some(split),
    });
    println!(
        "{}: objective {value:.4}, recall {:.3}, precision {:.3} on {} calibration samples",
        config.describe(),
        confusion.recall(),
        confusion.precision(),
        cal.len()
    );
    let stamp = Stamp::new("calibrate", Some(a.split.seed), a);
    write_json(&a.out, &StampedConfig { config, stamp })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SearchResult {
    pub rank: usize,
    pub calibration: RankedConfig,
    pub evaluation: EvalReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SearchOutput {
    pub stamp: Stamp,
    pub split: SplitInfo,
    pub candidates: usize,
    pub results: Vec<SearchResult>,
}

fn cmd_search(a: &SearchArgs) -> CliResult<()> {
    let objective = a.objective.objective()?;
    let metrics = match &a.metrics {
        Some(ms) => Some(
            ms.iter()
                .map(|m| m.parse::<Metric>().map_err(|e| CliError::Usage(e.to_string())))
                .collect::<CliResult<Vec<_>>>()?,
        ),
        None => None,
    };
    let strategy = match a.strategy {
        StrategyArg::Exhaustive => Strategy::Exhaustive,
        StrategyArg::Greedy => Strategy::Greedy { beam: a.beam },
    };
    let opts = SearchOptions {
        max_rules: a.max_rules,
        objective,
        strategy,
        combinator: a.objective.combinator.into(),
        joint: JointCalibration::CoordinateAscent,
    };
    let table = load_labeled_table(&a.table)?.select_columns(|k| {
        a.layers.as_ref().is_none_or(|ls| ls.contains(&k.layer)) && metrics.as_ref().is_none_or(|ms| ms.contains(&k.metric))
    });
    if table.keys().is_empty() {
        return Err(CliError::Usage("no feature columns left after filtering".into()));
    }
    let (cal, eval, split) = split_table(&table, &a.split)?;
    let ranked = search_features(&cal, &opts)?;
    let candidates = ranked.len();
    let boot = bootstrap_opts(a.split.bootstrap, a.split.seed);
    let results = ranked
        .into_iter()
        .take(a.top.max(1))
        .enumerate()
        .map(|(i, mut r)| {
            r.config.calibration = Some(CalibrationInfo {
                objective,
                seed: Some(a.split.seed),
                split: Some(split.clone()),
            });
            let evaluation = evaluate_config(&r.config, &eval, &boot)?;
            Ok(SearchResult {
                rank: i + 1,
                calibration: r,
                evaluation,
            })
        })
        .collect::<crate::Result<Vec<_>>>()?;
    let reports: Vec<EvalReport> = results.iter().map(|r| r.evaluation.clone()).collect();
    println!(
        "{candidates} configurations searched on {} samples; top {} on {} held-out samples:",
        cal.len(),
        results.len(),
        eval.len()
    );
    print!("{}", render_table(&reports));
    let stamp = Stamp::new("search", Some(a.split.seed), a);
    if let (Some(path), Some(best)) = (&a.config_out, results.first()) {
        write_json(
            path,
            &StampedConfig {
                config: best.calibration.config.clone(),
                stamp: stamp.clone(),
            },
        )?;
    }
    write_json(
        &a.out,
        &SearchOutput {
            stamp,
            split,
            candidates,
            results,
        },
    )
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvaluateOutput {
    pub stamp: Stamp,
    pub samples: usize,
    pub report: EvalReport,
}

fn cmd_evaluate(a: &EvaluateArgs) -> CliResult<()> {
    require_file(&a.config, "detector config")?;
    let text = fs::read_to_string(&a.config).map_err(Error::from)?;
    let config = DetectorConfig::from_json(&text)?;
    let table = load_labeled_table(&a.table)?;
    let recorded = config.calibration.as_ref();
    let seed = a.seed.or(recorded.and_then(|c| c.seed)).unwrap_or(0);
    let rows = match recorded.and_then(|c| c.split.as_ref().zip(c.seed)) {
        Some((split, split_seed)) if !a.all => {
            if split.total != table.len() {
                return Err(CliError::Data(Error::Contract(format!(
                    "config was calibrated on a {}-row table, this one has {} rows",
                    split.total,
                    table.len()
                ))));
            }
            calibration_split(table.len(), split.calibration_size, split_seed)?.1
        }
        _ => (0..table.len()).collect(),
    };
    let eval = table.subset(&rows);
    let report = evaluate_config(&config, &eval, &bootstrap_opts(a.bootstrap, seed))?;
    print!("{}", render_table(std::slice::from_ref(&report)));
    let out = EvaluateOutput {
        stamp: Stamp::new("evaluate", Some(seed), &(a, &config)),
        samples: eval.len(),
        report,
    };
    write_json(&a.out, &out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BaselineOutput {
    pub stamp: Stamp,
    pub samples: usize,
    pub reports: Vec<BaselineReport>,
    pub flag_everything: EvalReport,
}

fn cmd_baseline(a: &BaselineArgs) -> CliResult<()> {
    let objective = a.objective.objective()?;
    require_file(&a.manifest, "manifest")?;
    let manifest = CorpusManifest::load(&a.manifest)?;
    let traces = manifest
        .entries
        .par_iter()
        .filter(|e| e.label != Label::Unlabeled)
        .map(|e| read_trace_file(&manifest.resolve(&a.manifest, e)))
        .collect::<crate::Result<Vec<_>>>()?;
    let scores = corpus_baseline_scores(&traces)?;
    let boot = bootstrap_opts(a.bootstrap, a.seed);
    let reports = baseline_eval(&scores, &objective, &boot)?;
    let labels: Vec<Label> = scores.iter().map(|s| s.label).collect();
    let everything = flag_everything(&labels, &boot)?;
    let mut rows: Vec<EvalReport> = reports.iter().map(|r| r.report.clone()).collect();
    rows.push(everything.clone());
    print!("{}", render_table(&rows));
    write_json(
        &a.out,
        &BaselineOutput {
            stamp: Stamp::new("baseline", Some(a.seed), a),
            samples: scores.len(),
            reports,
            flag_everything: everything,
        },
    )
}

fn cmd_validate(a: &ValidateArgs) -> CliResult<()> {
    require_file(&a.manifest, "manifest")?;
    let report = validate_corpus(&a.manifest)?;
    for w in &report.warnings {
        warn!("{}: {}", w.sample_id.as_deref().unwrap_or("corpus"), w.reason);
    }
    for f in &report.findings {
        eprintln!("{}: {}", f.sample_id.as_deref().unwrap_or("corpus"), f.reason);
    }
    println!(
        "{}: {}/{} readable, {} problem(s), {} warning(s)",
        report.corpus_id,
        report.readable,
        report.entries,
        report.findings.len(),
        report.warnings.len()
    );
    if let Some(out) = &a.out {
        #[derive(Serialize)]
        struct Out<'a> {
            stamp: Stamp,
            #[serde(flatten)]
            report: &'a crate::trace::ValidationReport,
        }
        write_json(
            out,
            &Out {
                stamp: Stamp::new("validate", None, a),
                report: &report,
            },
        )?;
    }
    if report.is_ok() {
        Ok(())
    } else {
        Err(CliError::Data(Error::InvalidPayload(format!(
            "{} problem(s) in corpus",
            report.findings.len()
        ))))
    }
}

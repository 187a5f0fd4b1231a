//! Calibrates a pair of rules on one split and reports on the other.

use spectral_guard::cli::calibration_split;
use spectral_guard::detection::{calibrate_config, evaluate_config, Combinator, JointCalibration, Objective};
use spectral_guard::diagnostics::profile_sample;
use spectral_guard::metrics::{render_table, BootstrapOptions};
use spectral_guard::synth::{generate_traces, SynthSpec};
use spectral_guard::{FeatureKey, FeatureTable, Metric};

fn main() -> spectral_guard::Result<()> {
    let spec = SynthSpec {
        corpus_size: 300,
        noise_level: 0.35,
        seed: 21,
        ..SynthSpec::default()
    };
    let profiles = generate_traces(&spec)?
        .iter()
        .map(profile_sample)
        .collect::<spectral_guard::Result<Vec<_>>>()?;
    let table = FeatureTable::from_profiles(&profiles)?;
    let (cal, eval) = calibration_split(table.len(), 80, 5)?;
    let (cal, eval) = (table.subset(&cal), table.subset(&eval));

    let keys = [FeatureKey::new(1, Metric::Entropy), FeatureKey::new(2, Metric::Hfer)];
    let boot = BootstrapOptions::default();
    let mut reports = Vec::new();
    for combinator in [Combinator::AnyFires, Combinator::AllFire] {
        let (config, _, _) = calibrate_config(&cal, &keys, combinator, &Objective::Youden, JointCalibration::ExactPair)?;
        reports.push(evaluate_config(&config, &eval, &boot)?);
        println!("{}", config.to_json()?);
    }
    print!("{}", render_table(&reports));
    Ok(())
}

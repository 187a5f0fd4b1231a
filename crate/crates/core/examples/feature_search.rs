//! Searches single features and pairs on a synthetic feature table.

use spectral_guard::detection::{search_features, Objective, SearchOptions, Strategy};
use spectral_guard::diagnostics::profile_sample;
use spectral_guard::synth::{generate_traces, SynthSpec};
use spectral_guard::FeatureTable;

fn main() -> spectral_guard::Result<()> {
    let spec = SynthSpec {
        corpus_size: 150,
        noise_level: 0.4,
        seed: 3,
        ..SynthSpec::default()
    };
    let profiles = generate_traces(&spec)?
        .iter()
        .map(profile_sample)
        .collect::<spectral_guard::Result<Vec<_>>>()?;
    let table = FeatureTable::from_profiles(&profiles)?;

    for (name, opts) in [
        ("AUC, exhaustive pairs", SearchOptions::default()),
        (
            "recall at precision 0.2, greedy up to 3 rules",
            SearchOptions {
                max_rules: 3,
                objective: Objective::recall_default(),
                strategy: Strategy::Greedy { beam: 4 },
                ..SearchOptions::default()
            },
        ),
    ] {
        let ranked = search_features(&table, &opts)?;
        println!("{name}: {} configurations", ranked.len());
        for r in ranked.iter().take(5) {
            println!(
                "  {:<48} objective {:.3}  recall {:.3}  precision {:.3}  auc {:.3}",
                r.config.describe(),
                r.objective_value,
                r.recall,
                r.precision,
                r.auc
            );
        }
    }
    Ok(())
}

//! Scores a corpus with the log-probability baselines and shows how
//! flagging everything collapses precision to the base rate.

use spectral_guard::baselines::{baseline_eval, corpus_baseline_scores, flag_everything};
use spectral_guard::detection::Objective;
use spectral_guard::metrics::{render_table, BootstrapOptions};
use spectral_guard::synth::{generate_traces, SynthSpec};

fn main() -> spectral_guard::Result<()> {
    let spec = SynthSpec {
        corpus_size: 250,
        seed: 4,
        ..SynthSpec::default()
    };
    let traces = generate_traces(&spec)?;
    let scores = corpus_baseline_scores(&traces)?;
    for s in scores.iter().take(3) {
        println!("{} {}: mean logprob {:.4}, perplexity {:.4}", s.sample_id, s.label, s.mean_logprob, s.perplexity);
    }

    let boot = BootstrapOptions::default();
    let mut rows: Vec<_> = baseline_eval(&scores, &Objective::recall_default(), &boot)?
        .into_iter()
        .map(|r| r.report)
        .collect();
    let labels: Vec<_> = scores.iter().map(|s| s.label).collect();
    rows.push(flag_everything(&labels, &boot)?);
    print!("{}", render_table(&rows));
    Ok(())
}

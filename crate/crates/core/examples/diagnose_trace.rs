//! Profiles one valid and one hallucinated synthetic sample layer by layer.

use spectral_guard::diagnostics::profile_sample;
use spectral_guard::synth::{generate_sample, SynthSpec};
use spectral_guard::Label;

fn main() -> spectral_guard::Result<()> {
    let spec = SynthSpec {
        noise_level: 0.6,
        ..SynthSpec::default()
    };
    for label in [Label::Valid, Label::Hallucination] {
        let trace = generate_sample(&spec, 1, label)?;
        let profile = profile_sample(&trace)?;
        println!("{} ({label}):", trace.sample_id);
        println!("  layer  entropy  fiedler  smoothness   hfer");
        for d in &profile.layers {
            println!(
                "  {:>5}  {:>7.4}  {:>7.4}  {:>10.4}  {:>5.3}",
                d.layer, d.entropy, d.fiedler, d.smoothness, d.hfer
            );
        }
    }
    Ok(())
}

//! Writes a trace in both precisions, reads it back, and shows what a
//! single flipped byte does to the reader.

use spectral_guard::synth::{generate_sample, SynthSpec};
use spectral_guard::trace::{read_trace, trace_to_bytes, DType, PayloadKind};
use spectral_guard::Label;

fn main() -> spectral_guard::Result<()> {
    for (dtype, kind) in [(DType::F32, PayloadKind::RawHeads), (DType::F16, PayloadKind::Aggregated)] {
        let spec = SynthSpec {
            dtype,
            payload_kind: kind,
            ..SynthSpec::default()
        };
        let trace = generate_sample(&spec, 0, Label::Hallucination)?;
        let bytes = trace_to_bytes(&trace)?;
        let back = read_trace(bytes.as_slice())?;
        println!(
            "{dtype:?} {kind:?}: {} bytes, round trip {}",
            bytes.len(),
            if back == trace { "identical" } else { "DIFFERS" }
        );
    }

    let trace = generate_sample(&SynthSpec::default(), 0, Label::Valid)?;
    let mut bytes = trace_to_bytes(&trace)?;
    let at = bytes.len() / 2;
    bytes[at] ^= 0x01;
    match read_trace(bytes.as_slice()) {
        Ok(_) => println!("corrupted trace accepted"),
        Err(e) => println!("corrupted trace rejected: {e}"),
    }
    Ok(())
}

//! Runs the command-line pipeline end to end in a temporary directory:
//! synth, validate, diagnose, search, evaluate, baseline.

use std::path::Path;

use spectral_guard::cli::run;

fn sg(args: &[&str]) {
    println!("\n$ spectral-guard {}", args.join(" "));
    let code = run(std::iter::once("spectral-guard").chain(args.iter().copied()));
    if code != 0 {
        eprintln!("exit code {code}");
        std::process::exit(code);
    }
}

fn main() {
    let dir = std::env::temp_dir().join(format!("spectral-guard-demo-{}", std::process::id()));
    let p = |name: &str| dir.join(name).to_string_lossy().into_owned();
    let corpus = p("corpus");
    let manifest = Path::new(&corpus).join("manifest.json").to_string_lossy().into_owned();
    let table = p("features.csv");

    sg(&["synth", "--out", &corpus, "--seed", "7", "--samples", "400", "--noise", "0.5"]);
    sg(&["validate", "--manifest", &manifest]);
    sg(&["diagnose", "--manifest", &manifest, "--out", &table]);
    sg(&[
        "search", "--table", &table, "--out", &p("search.json"), "--config-out", &p("best.json"), "--seed", "7",
        "--objective", "auc", "--top", "5",
    ]);
    sg(&["evaluate", "--table", &table, "--config", &p("best.json"), "--out", &p("eval.json")]);
    sg(&["baseline", "--manifest", &manifest, "--out", &p("baseline.json"), "--seed", "7"]);

    println!("\noutputs left in {}", dir.display());
}

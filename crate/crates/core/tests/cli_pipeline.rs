use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use spectral_guard::cli::{run, SearchOutput, EXIT_DATA, EXIT_OK, EXIT_STRICT, EXIT_USAGE};
use spectral_guard::synth::MANIFEST_FILE;
use spectral_guard::trace::CorpusManifest;
use spectral_guard::FeatureTable;

fn sg(args: &[&str]) -> i32 {
    run(std::iter::once("spectral-guard").chain(args.iter().copied()))
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth(dir: &Path, extra: &[&str]) -> PathBuf {
    let mut args = vec!["synth", "--out", p(dir), "--seed", "5"];
    args.extend_from_slice(extra);
    // Small defaults unless the caller overrides them.
    for (flag, value) in [("--tokens", "16"), ("--layers", "3"), ("--hidden-dim", "6")] {
        if !extra.contains(&flag) {
            args.extend([flag, value]);
        }
    }
    assert_eq!(sg(&args), EXIT_OK);
    dir.join(MANIFEST_FILE)
}

fn read_table(path: &Path) -> FeatureTable {
    FeatureTable::read_csv(fs::File::open(path).unwrap()).unwrap()
}

#[test]
fn three_sample_corpus_gives_three_rows_and_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(&dir.path().join("corpus"), &["--samples", "3", "--rate", "0.34"]);
    let out = dir.path().join("features.csv");
    assert_eq!(sg(&["diagnose", "--manifest", p(&manifest), "--out", p(&out)]), EXIT_OK);
    let table = read_table(&out);
    assert_eq!(table.len(), 3);
    assert_eq!(table.keys().len(), 3 * 4);
    let first = fs::read(&out).unwrap();

    // Resuming over a complete table changes nothing; a fresh run matches too.
    assert_eq!(sg(&["diagnose", "--manifest", p(&manifest), "--out", p(&out)]), EXIT_OK);
    assert_eq!(fs::read(&out).unwrap(), first);
    fs::remove_file(&out).unwrap();
    assert_eq!(sg(&["diagnose", "--manifest", p(&manifest), "--out", p(&out)]), EXIT_OK);
    assert_eq!(fs::read(&out).unwrap(), first);
    assert!(dir.path().join("features.csv.stamp.json").is_file());
}

#[test]
fn resume_fills_in_missing_rows() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(&dir.path().join("corpus"), &["--samples", "6"]);
    let out = dir.path().join("features.csv");
    assert_eq!(sg(&["diagnose", "--manifest", p(&manifest), "--out", p(&out)]), EXIT_OK);
    let full = fs::read(&out).unwrap();
    let table = read_table(&out);
    let partial = table.subset(&[0, 2, 5]);
    let mut buf = Vec::new();
    partial.write_csv(&mut buf).unwrap();
    fs::write(&out, buf).unwrap();
    assert_eq!(sg(&["diagnose", "--manifest", p(&manifest), "--out", p(&out)]), EXIT_OK);
    assert_eq!(fs::read(&out).unwrap(), full);
}

#[test]
fn corrupt_sample_fails_only_under_strict() {
    let dir = tempfile::tempdir().unwrap();
    let manifest_path = synth(&dir.path().join("corpus"), &["--samples", "4"]);
    let manifest = CorpusManifest::load(&manifest_path).unwrap();
    let victim = manifest.resolve(&manifest_path, &manifest.entries[2]);
    let mut bytes = fs::read(&victim).unwrap();
    let at = bytes.len() - 10;
    bytes[at] ^= 0xff;
    fs::write(&victim, bytes).unwrap();

    let out = dir.path().join("features.csv");
    assert_eq!(sg(&["diagnose", "--manifest", p(&manifest_path), "--out", p(&out)]), EXIT_OK);
    assert_eq!(read_table(&out).len(), 3);
    fs::remove_file(&out).unwrap();
    assert_eq!(
        sg(&["diagnose", "--manifest", p(&manifest_path), "--out", p(&out), "--strict"]),
        EXIT_STRICT
    );
    assert_eq!(sg(&["validate", "--manifest", p(&manifest_path)]), EXIT_DATA);
}

#[test]
fn usage_and_data_errors_have_distinct_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    let out = dir.path().join("out.json");
    assert_eq!(sg(&["diagnose", "--manifest", p(&missing), "--out", p(&out)]), EXIT_USAGE);
    assert_eq!(sg(&["search", "--table", "x.csv"]), EXIT_USAGE);
    assert_eq!(sg(&["synth", "--out", p(dir.path()), "--seed", "1", "--rate", "1.5"]), EXIT_USAGE);
    assert_eq!(sg(&["--help"]), EXIT_OK);

    let garbage = dir.path().join("garbage.csv");
    fs::write(&garbage, "not,a\nfeature,table\n").unwrap();
    assert_eq!(
        sg(&["search", "--table", p(&garbage), "--out", p(&out), "--seed", "1"]),
        EXIT_DATA
    );
    let broken = dir.path().join("manifest.json");
    fs::write(&broken, "{").unwrap();
    assert_eq!(sg(&["validate", "--manifest", p(&broken)]), EXIT_DATA);
}

#[test]
fn planted_layer_wins_and_evaluation_reproduces() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(
        &dir.path().join("corpus"),
        &["--samples", "160", "--signal-layers", "1", "--noise", "0.8", "--tokens", "24"],
    );
    let table = dir.path().join("features.csv");
    assert_eq!(sg(&["diagnose", "--manifest", p(&manifest), "--out", p(&table)]), EXIT_OK);
    let search = dir.path().join("search.json");
    let config = dir.path().join("best.json");
    assert_eq!(
        sg(&[
            "search", "--table", p(&table), "--out", p(&search), "--config-out", p(&config), "--seed", "3",
            "--calibration-size", "80", "--max-rules", "1", "--objective", "youden", "--bootstrap", "200",
        ]),
        EXIT_OK
    );
    let found: SearchOutput = serde_json::from_str(&fs::read_to_string(&search).unwrap()).unwrap();
    assert_eq!(found.split.calibration_size, 80);
    let best = &found.results[0];
    assert_eq!(best.calibration.config.rules[0].key().layer, 1);
    let c = best.evaluation.confusion;
    assert_eq!(c.tp + c.fp + c.tn + c.fn_, 80);

    let eval_out = dir.path().join("eval.json");
    let args = ["evaluate", "--table", p(&table), "--config", p(&config), "--out", p(&eval_out), "--bootstrap", "200"];
    assert_eq!(sg(&args), EXIT_OK);
    let once = fs::read(&eval_out).unwrap();
    assert_eq!(sg(&args), EXIT_OK);
    assert_eq!(fs::read(&eval_out).unwrap(), once);
    let report: serde_json::Value = serde_json::from_slice(&once).unwrap();
    assert_eq!(report["samples"], 80);
    assert_eq!(report["report"]["recall"], serde_json::to_value(best.evaluation.recall).unwrap());

    let baseline = dir.path().join("baseline.json");
    assert_eq!(sg(&["baseline", "--manifest", p(&manifest), "--out", p(&baseline), "--bootstrap", "100"]), EXIT_OK);
    assert_eq!(sg(&["calibrate", "--table", p(&table), "--out", p(&dir.path().join("cal.json")), "--seed", "3",
        "--features", "L1_entropy,L1_fiedler"]), EXIT_OK);
    assert_eq!(sg(&["calibrate", "--table", p(&table), "--out", p(&dir.path().join("cal.json")), "--seed", "3",
        "--features", "L9_entropy"]), EXIT_USAGE);
}

#[test]
fn full_pipeline_on_two_hundred_samples_is_quick() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(&dir.path().join("corpus"), &["--samples", "200", "--tokens", "32", "--layers", "4", "--hidden-dim", "16"]);
    let table = dir.path().join("features.csv");
    assert_eq!(sg(&["diagnose", "--manifest", p(&manifest), "--out", p(&table)]), EXIT_OK);
    let search = dir.path().join("search.json");
    assert_eq!(
        sg(&["search", "--table", p(&table), "--out", p(&search), "--seed", "1", "--bootstrap", "200"]),
        EXIT_OK
    );
    assert!(start.elapsed().as_secs() < 300);
}

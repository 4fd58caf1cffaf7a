use std::collections::BTreeMap;
use std::path::Path;

/// Runs the CLI in-process, panicking with the argv on a non-zero exit.
pub fn ok(args: &[&str]) {
    let mut argv = vec!["burstkit"];
    argv.extend_from_slice(args);
    let code = burstkit_cli::run(&argv);
    assert_eq!(code, 0, "burstkit {}", args.join(" "));
}

fn p(root: &Path, rel: &str) -> String {
    root.join(rel).display().to_string()
}

/// synth-corpus, extract, sample, split, train-baseline, predict, eval and
/// analyze under `root`.
pub fn pipeline(root: &Path, seed: u64) {
    let s = seed.to_string();
    let f = |rel: &str| p(root, rel);
    ok(&["synth-corpus", "--out-dir", &f("corpus"), "--corpora", "alpha,beta,gamma", "--speakers", "3",
        "--recordings", "3", "--stops", "30", "--seed", &s]);
    ok(&["extract", "--corpus", &f("corpus"), "--out", &f("manifest.jsonl"), "--context-ms", "10"]);
    ok(&["sample", "--manifest", &f("manifest.jsonl"), "--out", &f("balanced.jsonl"), "--scheme", "balanced",
        "--n-per-voicing", "300", "--labeled-only", "--seed", &s]);
    ok(&["split", "--manifest", &f("balanced.jsonl"), "--train", &f("train.jsonl"), "--test", &f("test.jsonl"),
        "--train-frac", "0.5", "--seed", &s]);
    ok(&["train-baseline", "--manifest", &f("train.jsonl"), "--out", &f("baseline.json"), "--seed", &s]);
    ok(&["predict", "--manifest", &f("test.jsonl"), "--out", &f("pred.jsonl"), "--backend",
        &format!("baseline:{}", f("baseline.json")), "--seed", &s]);
    ok(&["eval", "--pred", &f("pred.jsonl"), "--gold", &f("test.jsonl"), "--out", &f("eval.json"), "--csv",
        &f("eval.csv"), "--model-name", "baseline", "--train-size", "300", "--bootstrap", "2000", "--seed", &s]);
    ok(&["analyze", "--source", &format!("manual={}", f("test.jsonl")), "--source",
        &format!("baseline={}", f("pred.jsonl")), "--out-dir", &f("analysis"), "--seed", &s]);
}

/// Every file under `root` with `root` itself masked out, keyed by
/// relative path.
pub fn snapshot(root: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(dir: &Path, root: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        let mut entries: Vec<_> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
        entries.sort();
        for path in entries {
            if path.is_dir() {
                walk(&path, root, out);
            } else {
                let rel = path.strip_prefix(root).unwrap().display().to_string();
                let bytes = std::fs::read(&path).unwrap();
                let masked = match String::from_utf8(bytes) {
                    Ok(text) => text.replace(&root.display().to_string(), "<root>").into_bytes(),
                    Err(e) => e.into_bytes(),
                };
                out.insert(rel, masked);
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

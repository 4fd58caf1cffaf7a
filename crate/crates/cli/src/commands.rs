use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context};
use burstkit::analysis::{analyze, rows_from_manifests, SplineConfig};
use burstkit::baseline::{featurize_all, train_baseline, BaselineClassifier, BaselineModel};
use burstkit::classifier::ClassifierBackend;
use burstkit::corpus::{emit_annotated_textgrid, extract_corpus, parse_textgrid, serialize_textgrid, ScanConfig, VoicingMap};
use burstkit::dataset::{
    annotation_sample, build_ladder, sample_balanced, split_train_test, stratified_validation, Manifest,
};
use burstkit::eval::{curve_csv, evaluate, BcaConfig, Item};
use burstkit::fixtures::{write_fixture_corpus, FixtureConfig};
use burstkit::token::{Burst, LabelSource, StopToken};
use burstkit_infer::NeuralModel;
use burstkit_service::{AppState, ServiceConfig, Strategy};
use serde_json::json;

use crate::clips::token_clips;
use crate::*;

const PREDICT_CHUNK: usize = 256;

struct Run<'a> {
    cli: &'a Cli,
    argv: &'a [String],
}

impl Run<'_> {
    fn provenance_text(&self) -> String {
        format!("burstkit {}", self.argv.join(" "))
    }

    fn record(&self, target: &Path, summary: serde_json::Value) -> anyhow::Result<()> {
        let p = Provenance {
            tool: "burstkit",
            version: env!("CARGO_PKG_VERSION"),
            command: self.cli.command.name(),
            argv: self.argv,
            seed: self.cli.seed,
            config: self.cli,
            summary,
        };
        let path = provenance_path(target);
        let text = serde_json::to_string_pretty(&p).expect("provenance serializes");
        std::fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))
    }

    fn write_manifest(&self, m: &Manifest, path: &Path, summary: serde_json::Value) -> anyhow::Result<()> {
        create_parent(path)?;
        m.write(path)?;
        self.record(path, summary)
    }
}

fn create_parent(path: &Path) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    create_parent(path)?;
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn read_manifest(path: &Path) -> anyhow::Result<Manifest> {
    Manifest::read(path).with_context(|| format!("reading manifest {}", path.display()))
}

fn label_summary(m: &Manifest) -> serde_json::Value {
    json!({
        "tokens": m.len(),
        "present": m.count_label(Burst::Present),
        "absent": m.count_label(Burst::Absent),
        "unknown": m.count_label(Burst::Unknown),
        "unsure": m.count_label(Burst::Unsure),
    })
}

/// Parses `baseline:<model.json>` or `neural:<model.onnx>`.
pub fn load_backend(spec: &str) -> anyhow::Result<Arc<dyn ClassifierBackend>> {
    match spec.split_once(':') {
        Some(("baseline", path)) => {
            let model = BaselineModel::<f64>::load(Path::new(path))?;
            Ok(Arc::new(BaselineClassifier { model }))
        }
        Some(("neural", path)) => Ok(Arc::new(NeuralModel::load(Path::new(path))?)),
        _ => bail!("backend must be baseline:<model.json> or neural:<model.onnx>, got {spec:?}"),
    }
}

pub fn dispatch(cli: &Cli, argv: &[String]) -> anyhow::Result<()> {
    let run = Run { cli, argv };
    let seed = cli.seed;
    match &cli.command {
        Command::Extract(a) => extract(&run, a),
        Command::Sample(a) => sample(&run, a, seed),
        Command::Split(a) => {
            let m = read_manifest(&a.manifest)?;
            let (train, test) = split_train_test(&m, a.train_frac, seed)?;
            run.write_manifest(&train, &a.train, label_summary(&train))?;
            run.write_manifest(&test, &a.test, label_summary(&test))
        }
        Command::Ladder(a) => ladder(&run, a, seed),
        Command::Serve(a) => serve(&run, a, seed),
        Command::TrainBaseline(a) => train(&run, a, seed),
        Command::Predict(a) => predict(&run, a),
        Command::Eval(a) => eval(&run, a, seed),
        Command::Analyze(a) => analyze_cmd(&run, a),
        Command::ExportTextgrid(a) => export(&run, a),
        Command::SynthCorpus(a) => synth(&run, a, seed),
    }
}

fn extract(run: &Run, a: &ExtractArgs) -> anyhow::Result<()> {
    let inventory = match &a.voicing_map {
        Some(p) => VoicingMap::load(p)?,
        None => VoicingMap::default(),
    };
    let cfg = ScanConfig {
        tier: a.tier.clone(),
        closure_marker: a.closure_marker.clone(),
        inventory,
        context: a.context_ms / 1000.0,
    };
    let (tokens, warnings) = extract_corpus(&a.corpus, &cfg)?;
    let m = Manifest::new(tokens, run.provenance_text())?;
    let clamped = m.records.iter().filter(|t| t.clamped).count();
    for w in &warnings {
        eprintln!("warning: tier {} interval {} at {:.3} s: {:?}", w.tier, w.interval, w.time, w.kind);
    }
    let mut summary = label_summary(&m);
    summary["clamped"] = json!(clamped);
    summary["warnings"] = json!(warnings.len());
    run.write_manifest(&m, &a.out, summary)
}

fn sample(run: &Run, a: &SampleArgs, seed: u64) -> anyhow::Result<()> {
    let mut m = read_manifest(&a.manifest)?;
    if a.labeled_only {
        m = m.training_view();
    }
    let picked = match a.scheme {
        Scheme::Balanced => {
            let n = a.n_per_voicing.ok_or_else(|| anyhow!("--scheme balanced needs --n-per-voicing"))?;
            sample_balanced(&m, n, seed)?
        }
        Scheme::Annotation => annotation_sample(&m, a.frac, a.cap, seed)?,
        Scheme::Validation => {
            let n = a.n_total.ok_or_else(|| anyhow!("--scheme validation needs --n-total"))?;
            let (val, rest) = stratified_validation(&m, n, a.min_per_corpus, seed)?;
            if let Some(path) = &a.remainder {
                run.write_manifest(&rest, path, label_summary(&rest))?;
            }
            val
        }
    };
    run.write_manifest(&picked, &a.out, label_summary(&picked))
}

fn ladder(run: &Run, a: &LadderArgs, seed: u64) -> anyhow::Result<()> {
    let m = read_manifest(&a.manifest)?;
    let ladder = build_ladder(&m, &a.sizes, seed)?;
    write_text(&a.out, &(serde_json::to_string_pretty(&ladder)? + "\n"))?;
    if let Some(dir) = &a.manifests_dir {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for (size, ids) in &ladder.subsets {
            let sub = m.subset(ids, &format!("ladder[{size}]"));
            run.write_manifest(&sub, &dir.join(format!("train_{size}.jsonl")), label_summary(&sub))?;
        }
    }
    run.record(&a.out, json!({"sizes": ladder.sizes}))
}

fn serve(run: &Run, a: &ServeArgs, seed: u64) -> anyhow::Result<()> {
    let initial = a.manifest.as_deref().map(read_manifest).transpose()?;
    let backend = a.backend.as_deref().map(load_backend).transpose()?;
    let cfg = ServiceConfig {
        seed,
        default_strategy: match a.strategy {
            StrategyArg::Sequential => Strategy::Sequential,
            StrategyArg::Random => Strategy::Random,
            StrategyArg::Uncertainty => Strategy::Uncertainty,
        },
        annotation_context: a.annotation_context_ms / 1000.0,
        prediction_context: a.prediction_context_ms / 1000.0,
        static_dir: a.static_dir.clone(),
    };
    let app = AppState::open(&a.store, initial.as_ref(), cfg, backend)?;
    run.record(&a.store, json!({"addr": a.addr}))?;
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(&a.addr).await.with_context(|| format!("binding {}", a.addr))?;
        eprintln!("serving on http://{}", listener.local_addr()?);
        burstkit_service::serve(listener, app).await?;
        Ok(())
    })
}

fn train(run: &Run, a: &TrainArgs, seed: u64) -> anyhow::Result<()> {
    let m = read_manifest(&a.manifest)?.training_view();
    if m.is_empty() {
        bail!("{} has no present/absent tokens to train on", a.manifest.display());
    }
    let clips: Vec<_> = token_clips(&m.records, a.context_ms / 1000.0)?.iter().map(|c| c.cast::<f64>()).collect();
    let features = featurize_all(&clips)?;
    let data: Vec<_> = features
        .into_iter()
        .zip(&m.records)
        .map(|(f, r)| (f, r.burst.as_binary().expect("training view is binary")))
        .collect();
    let model = train_baseline(&data, a.l2, seed)?;
    create_parent(&a.out)?;
    model.save(&a.out)?;
    run.record(&a.out, json!({"n": model.meta.n, "iterations": model.meta.iterations, "final_loss": model.meta.final_loss}))
}

fn predict(run: &Run, a: &PredictArgs) -> anyhow::Result<()> {
    if !(0.0..=1.0).contains(&a.threshold) {
        bail!("--threshold must lie in [0, 1]");
    }
    let backend = load_backend(&a.backend)?;
    let m = read_manifest(&a.manifest)?;
    let mut records: Vec<StopToken> = m.records.clone();
    for chunk in records.chunks_mut(PREDICT_CHUNK) {
        let clips = token_clips(chunk, a.context_ms / 1000.0)?;
        let p = backend.classify_batch(&clips)?;
        for (r, p) in chunk.iter_mut().zip(p) {
            r.burst = Burst::from_binary(p >= a.threshold);
            r.label_source = LabelSource::Model;
            r.confidence = Some(p);
        }
    }
    let out = Manifest::new(records, format!("{} <- {}", run.provenance_text(), m.provenance))?;
    let mut summary = label_summary(&out);
    summary["backend"] = json!(backend.name());
    run.write_manifest(&out, &a.out, summary)
}

/// Pairs gold and predicted labels by token id, in gold order; tokens
/// without a binary label on either side are skipped.
pub fn paired_items(pred: &Manifest, gold: &Manifest) -> (Vec<Item>, usize) {
    let predicted: HashMap<&str, bool> =
        pred.records.iter().filter_map(|r| r.burst.as_binary().map(|b| (r.token_id.as_str(), b))).collect();
    let mut skipped = 0;
    let mut items = Vec::new();
    for r in gold.records.iter().filter(|r| !r.excluded) {
        match (r.burst.as_binary(), predicted.get(r.token_id.as_str())) {
            (Some(label), Some(&p)) => items.push(Item { label, predicted: p }),
            _ => skipped += 1,
        }
    }
    (items, skipped)
}

fn eval(run: &Run, a: &EvalArgs, seed: u64) -> anyhow::Result<()> {
    let pred = read_manifest(&a.pred)?;
    let gold = read_manifest(&a.gold)?;
    let (items, skipped) = paired_items(&pred, &gold);
    let report = evaluate(&items, &BcaConfig { level: a.level, b: a.bootstrap, seed })?;
    write_text(&a.out, &(serde_json::to_string_pretty(&report)? + "\n"))?;
    if let Some(csv) = &a.csv {
        write_text(csv, &curve_csv(&report.rows(&a.model_name, a.train_size))?)?;
        run.record(csv, json!({"n": items.len()}))?;
    }
    run.record(&a.out, json!({"n": items.len(), "skipped": skipped, "accuracy": report.accuracy}))
}

fn analyze_cmd(run: &Run, a: &AnalyzeArgs) -> anyhow::Result<()> {
    let mut sources = Vec::new();
    for s in &a.sources {
        let (name, path) = s.split_once('=').ok_or_else(|| anyhow!("--source must be name=path, got {s:?}"))?;
        sources.push((name.to_string(), read_manifest(Path::new(path))?));
    }
    let (rows, summary) = rows_from_manifests(&sources)?;
    let cfg = SplineConfig { k: a.k, ..SplineConfig::default() };
    let report = analyze(&rows, &cfg, a.level, a.grid, a.bins)?;
    let dir = &a.out_dir;
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    write_text(&dir.join("curves.csv"), &report.curves_csv()?)?;
    write_text(&dir.join("contrasts.csv"), &report.contrasts_csv()?)?;
    write_text(&dir.join("tests.csv"), &report.tests_csv()?)?;
    write_text(&dir.join("bins.csv"), &report.bins_csv()?)?;
    write_text(&dir.join("plot.json"), &report.plot_json())?;
    let summary = json!({
        "rows": summary,
        "test": report.test,
        "contrasts": report.contrasts,
        "lambda": report.full.blocks.iter().map(|b| b.lambda).collect::<Vec<_>>(),
    });
    write_text(&dir.join("summary.json"), &(serde_json::to_string_pretty(&summary)? + "\n"))?;
    run.record(dir, json!({"tokens": summary["rows"]["tokens"]}))
}

fn export(run: &Run, a: &ExportArgs) -> anyhow::Result<()> {
    let m = read_manifest(&a.manifest)?;
    let mut by_file: BTreeMap<&str, Vec<StopToken>> = BTreeMap::new();
    for r in &m.records {
        by_file.entry(r.audio_path.as_str()).or_default().push(r.clone());
    }
    std::fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
    let mut written = Vec::new();
    for (audio, tokens) in by_file {
        let tg = Path::new(audio).with_extension("TextGrid");
        let bytes = std::fs::read(&tg).with_context(|| format!("reading {}", tg.display()))?;
        let grid = parse_textgrid(&bytes).with_context(|| tg.display().to_string())?;
        let annotated = emit_annotated_textgrid(&grid, &tokens).with_context(|| tg.display().to_string())?;
        let stem = tg.file_name().expect("file path");
        let out: PathBuf = a.out_dir.join(&tokens[0].corpus).join(stem);
        write_text(&out, &serialize_textgrid(&annotated)?)?;
        written.push(out.display().to_string());
    }
    run.record(&a.out_dir, json!({"files": written}))
}

fn synth(run: &Run, a: &SynthArgs, seed: u64) -> anyhow::Result<()> {
    let cfg = FixtureConfig {
        corpora: a.corpora.clone(),
        speakers_per_corpus: a.speakers,
        recordings_per_speaker: a.recordings,
        stops_per_recording: a.stops,
        snr_db: a.snr_db,
        bare_fraction: a.bare_fraction,
        seed,
    };
    std::fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
    let summary = write_fixture_corpus(&a.out_dir, &cfg)?;
    run.record(&a.out_dir, serde_json::to_value(summary)?)
}

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use graph_ttt::config::ExperimentConfig;
use graph_ttt::graphdata::{parse_tudataset, write_tudataset, Dataset, Graph, SplitSpec};
use graph_ttt::models::{load_checkpoint, save_checkpoint, ParamSnapshot};
use graph_ttt::ssl::SslWeights;
use graph_ttt::synth::synth_dataset;
use graph_ttt::theory::{self, VerifyOptions};
use graph_ttt::ttt::{
    evaluate, task_cka, train_joint, train_task_models, EvalMode, EvalReport, EvalSettings, TrainOutcome,
    MAX_PROBE_GRAPHS,
};
use serde::Serialize;

use crate::output::{self, EvalSummary, SplitSizes};
use crate::settings::{self, InputError, Violation};
use crate::{Command, ConfigArgs};

pub fn dispatch(command: Command, jobs: Option<usize>) -> Result<()> {
    match command {
        Command::Ingest { dir, name, validate_only, out } => ingest(&dir, &name, validate_only, &out),
        Command::Synth { config, out, name } => synth(&load(&config)?, &out, &name),
        Command::Split { config, kind, seed, out } => {
            let mut cfg = load(&config)?;
            if let Some(k) = kind {
                cfg.split.kind = k;
            }
            if let Some(s) = seed {
                cfg.split.seed = s;
            }
            split(&cfg, out)
        }
        Command::Train { config, raw, split, checkpoint } => {
            train(&load(&config)?, raw, split.as_deref(), checkpoint).map(|_| ())
        }
        Command::Eval { config, mode, checkpoint, split } => {
            eval(&load(&config)?, mode, &checkpoint, split.as_deref(), jobs).map(|_| ())
        }
        Command::Cka { config, split } => cka(&load(&config)?, split.as_deref()),
        Command::Verify { theorem, trials, epsilon, surrogate, seed, out } => {
            verify(&theorem, VerifyOptions { trials, epsilon, surrogate, seed }, out.as_deref())
        }
        Command::Run { config } => run(&load(&config)?, jobs),
    }
}

fn load(args: &ConfigArgs) -> Result<ExperimentConfig> {
    settings::load(args.config.as_deref(), &args.overrides)
}

#[derive(Debug, Serialize)]
struct DatasetSummary<'a> {
    name: &'a str,
    graphs: usize,
    classes: usize,
    attr_dim: usize,
    class_counts: Vec<usize>,
    min_nodes: usize,
    max_nodes: usize,
}

fn describe(d: &Dataset) -> String {
    format!("{} graphs, {} classes, F={}", d.len(), d.num_classes(), d.attr_dim())
}

fn ingest(dir: &Path, name: &str, validate_only: bool, out: &Path) -> Result<()> {
    let d = parse_tudataset(dir, name)?;
    println!("{}", describe(&d));
    if validate_only {
        return Ok(());
    }
    let sizes = d.graphs().iter().map(Graph::num_nodes);
    let summary = DatasetSummary {
        name,
        graphs: d.len(),
        classes: d.num_classes(),
        attr_dim: d.attr_dim(),
        class_counts: d.class_counts(),
        min_nodes: sizes.clone().min().unwrap_or(0),
        max_nodes: sizes.max().unwrap_or(0),
    };
    output::write_json(&out.join(format!("{name}.dataset.json")), &summary)
}

fn synth(cfg: &ExperimentConfig, out: &Path, name: &str) -> Result<()> {
    let d = synth_dataset(&cfg.dataset.synth)?;
    write_tudataset(&d, out, name)?;
    println!("{} -> {}", describe(&d), out.display());
    Ok(())
}

fn load_split(cfg: &ExperimentConfig, d: &Dataset, path: Option<&Path>) -> Result<SplitSpec> {
    let s = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading split {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing split {}", p.display()))?
        }
        None => cfg.make_split(d)?,
    };
    s.validate(d.len())?;
    for w in &s.warnings {
        log::warn!("split: {w}");
    }
    Ok(s)
}

fn split(cfg: &ExperimentConfig, out: Option<PathBuf>) -> Result<()> {
    let d = cfg.load_dataset()?;
    let s = load_split(cfg, &d, None)?;
    let path = out.unwrap_or_else(|| cfg.output_dir.join("split.json"));
    output::write_json(&path, &s)?;
    let sizes = SplitSizes::from(&s);
    println!("train {} / val {} / test {} -> {}", sizes.train, sizes.val, sizes.test, path.display());
    Ok(())
}

fn graphs<'a>(d: &'a Dataset, idx: &[usize]) -> Vec<&'a Graph> {
    idx.iter().map(|&i| d.graph(i)).collect()
}

fn train_model(cfg: &ExperimentConfig, d: &Dataset, s: &SplitSpec, raw: bool) -> Result<TrainOutcome> {
    let gnn = cfg.gnn_for(d)?;
    let weights = if raw { SslWeights { gamma: 0.0, ..cfg.ssl } } else { cfg.ssl };
    Ok(train_joint(&graphs(d, &s.train), &graphs(d, &s.val), &gnn, &cfg.train, &weights, &cfg.views)?)
}

fn default_checkpoint(cfg: &ExperimentConfig, raw: bool) -> PathBuf {
    cfg.output_dir.join(if raw { "raw.ckpt.json" } else { "joint.ckpt.json" })
}

fn train(cfg: &ExperimentConfig, raw: bool, split_path: Option<&Path>, checkpoint: Option<PathBuf>) -> Result<ParamSnapshot> {
    let d = cfg.load_dataset()?;
    let s = load_split(cfg, &d, split_path)?;
    let out = train_model(cfg, &d, &s, raw)?;
    let path = checkpoint.unwrap_or_else(|| default_checkpoint(cfg, raw));
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        output::ensure_dir(parent)?;
    }
    save_checkpoint(&out.snapshot, &path)?;
    output::write_history(&path.with_extension("history.csv"), &out.history)?;
    println!(
        "kept epoch {} (val accuracy {}) -> {}",
        out.snapshot.meta.epoch,
        out.snapshot.meta.val_accuracy.map_or("n/a".into(), |a| format!("{a:.4}")),
        path.display()
    );
    Ok(out.snapshot)
}

fn settings_for(cfg: &ExperimentConfig, jobs: Option<usize>) -> EvalSettings {
    EvalSettings {
        ttt: cfg.ttt.clone(),
        weights: cfg.ssl,
        spec: cfg.views.clone(),
        jobs,
    }
}

fn write_eval(cfg: &ExperimentConfig, d: &Dataset, s: &SplitSpec, report: &EvalReport) -> Result<()> {
    output::ensure_dir(&cfg.output_dir)?;
    output::write_predictions(&output::predictions_path(&cfg.output_dir, report.mode), report)?;
    let summary = EvalSummary::new(report, &settings::config_hash(cfg), &d.name, s);
    output::write_json(&output::summary_path(&cfg.output_dir, report.mode), &summary)
}

fn print_report(r: &EvalReport) {
    let auc = r.roc_auc.map_or(String::new(), |a| format!(", ROC-AUC {a:.4}"));
    println!("{:<20} accuracy {:.4}{auc} over {} graphs", r.mode.as_str(), r.accuracy, r.num_samples);
}

fn eval(
    cfg: &ExperimentConfig,
    mode: EvalMode,
    checkpoint: &Path,
    split_path: Option<&Path>,
    jobs: Option<usize>,
) -> Result<EvalReport> {
    let snap = load_checkpoint(checkpoint).map_err(|e| InputError(format!("{}: {e}", checkpoint.display())))?;
    let d = cfg.load_dataset()?;
    if (snap.config.num_classes, snap.config.attr_dim) != (d.num_classes(), d.attr_dim()) {
        bail!(InputError(format!(
            "checkpoint expects {} classes and {} attributes, dataset has {} and {}",
            snap.config.num_classes,
            snap.config.attr_dim,
            d.num_classes(),
            d.attr_dim()
        )));
    }
    let s = load_split(cfg, &d, split_path)?;
    let report = evaluate(&d, &s.test, &snap, mode, &settings_for(cfg, jobs))?;
    write_eval(cfg, &d, &s, &report)?;
    print_report(&report);
    Ok(report)
}

fn cka(cfg: &ExperimentConfig, split_path: Option<&Path>) -> Result<()> {
    let d = cfg.load_dataset()?;
    let s = load_split(cfg, &d, split_path)?;
    let gnn = cfg.gnn_for(&d)?;
    let train = graphs(&d, &s.train);
    let val = graphs(&d, &s.val);
    let models = train_task_models(&train, &val, &gnn, &cfg.train, &cfg.ssl, &cfg.views)?;
    let probe = &val[..val.len().min(MAX_PROBE_GRAPHS)];
    let rows = task_cka(probe, &models)?;
    output::ensure_dir(&cfg.output_dir)?;
    let path = cfg.output_dir.join("cka.csv");
    output::write_cka(&path, &rows)?;
    for r in &rows {
        println!("{} layer {}: {:.4}", r.pair, r.layer, r.value);
    }
    Ok(())
}

fn verify(theorem: &str, opts: VerifyOptions, out: Option<&Path>) -> Result<()> {
    let v = theory::verifier(theorem).map_err(|e| InputError(e.to_string()))?;
    let report = v.run(&opts).map_err(|e| InputError(e.to_string()))?;
    match out {
        Some(p) => output::write_json(p, &report)?,
        None => println!("{}", serde_json::to_string_pretty(&report)?),
    }
    eprintln!(
        "theorem {}: {} trials, {} skipped, {} violations, worst margin {:e}",
        report.theorem, report.trials, report.skipped, report.violations, report.worst_margin
    );
    if !report.passed() {
        return Err(Violation(format!("theorem {theorem}: {} violations ({})", report.violations, v.describe())).into());
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct RunSummary {
    config_hash: String,
    dataset: String,
    split: SplitSizes,
    results: Vec<RunResult>,
}

#[derive(Debug, Serialize)]
struct RunResult {
    mode: EvalMode,
    accuracy: f64,
    roc_auc: Option<f64>,
    fallbacks: usize,
}

fn run(cfg: &ExperimentConfig, jobs: Option<usize>) -> Result<()> {
    let d = cfg.load_dataset()?;
    let s = load_split(cfg, &d, None)?;
    output::ensure_dir(&cfg.output_dir)?;
    output::write_json(&cfg.output_dir.join("split.json"), &s)?;
    output::write_json(&cfg.output_dir.join("config.json"), cfg)?;
    let mut raw = None;
    let mut joint = None;
    let mut results = Vec::new();
    for &mode in &cfg.modes {
        let is_raw = mode == EvalMode::Raw;
        let slot = if is_raw { &mut raw } else { &mut joint };
        if slot.is_none() {
            let out = train_model(cfg, &d, &s, is_raw)?;
            save_checkpoint(&out.snapshot, default_checkpoint(cfg, is_raw))?;
            *slot = Some(out.snapshot);
        }
        let snap = slot.as_ref().expect("trained above");
        let report = evaluate(&d, &s.test, snap, mode, &settings_for(cfg, jobs))?;
        write_eval(cfg, &d, &s, &report)?;
        print_report(&report);
        results.push(RunResult {
            mode,
            accuracy: report.accuracy,
            roc_auc: report.roc_auc,
            fallbacks: report.fallbacks,
        });
    }
    let summary = RunSummary {
        config_hash: settings::config_hash(cfg),
        dataset: d.name.clone(),
        split: (&s).into(),
        results,
    };
    output::write_json(&cfg.output_dir.join("summary.json"), &summary)
}

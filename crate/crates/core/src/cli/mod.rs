//! Batch front end: `explain`, `sweep`, `baseline` and `synth`.

mod io;
mod manifest;

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use crate::error::Error;
use crate::metrics::evaluate_model;
use crate::preprocess::derive_tags;
use crate::repid::{fit_tree_with, tree_prediction_error, TreeCohortModel, TreeOptions};
use crate::selection::{sweep, CohortMethod, SweepReport};
use crate::solver::{solve, SolveMode, SolveResult};
use crate::synthetic::{default_tag_config, generate, TwoRegionSpec};
use crate::types::{CohortModel, ImportanceMatrix, Partition, TagMatrix};

pub use manifest::{RunManifest, SweepSettings};

const BASELINE_METHOD: &str = "best-first decision tree on tag columns (REPID-style approximation)";

#[derive(Debug, Parser)]
#[command(name = "cohort-explain", version, about = "Tag-described cohorts of local feature importances")]
pub struct Cli {
    /// Worker threads; defaults to one per core.
    #[arg(long, env = "COHORT_THREADS", global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit cohorts for a single k.
    Explain(RunArgs),
    /// Choose k by cross-validation, then fit at the chosen k.
    Sweep(RunArgs),
    /// Fit the decision-tree baseline for a single k.
    Baseline(RunArgs),
    /// Write the two-region synthetic fixture and a manifest for it.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// JSON run manifest.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Number of cohorts; for `sweep`, candidates are 1..=k.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub folds: Option<usize>,
    /// Seed for the solver restarts and the fold split.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Solver budget in seconds.
    #[arg(long)]
    pub time_limit: Option<f64>,
    /// exact, heuristic or auto.
    #[arg(long)]
    pub mode: Option<SolveMode>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// JSON fixture parameters; flags below override them.
    #[arg(long)]
    pub fixture: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub n_per_region: Option<usize>,
    /// Standard deviation of importance noise.
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub spread: Option<f64>,
}

/// Parses arguments, runs the command and returns the process exit code:
/// 0 on success, 1 on input or validation errors, 2 when the solver hit its
/// time limit without any feasible partition.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    if let Some(n) = cli.threads {
        // A pool may already exist when called repeatedly in one process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let result = match &cli.command {
        Command::Explain(a) => explain(a),
        Command::Sweep(a) => run_sweep(a),
        Command::Baseline(a) => baseline(a),
        Command::Synth(a) => synth(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            let timeout = e
                .chain()
                .any(|c| c.downcast_ref::<Error>() == Some(&Error::Timeout));
            if timeout {
                2
            } else {
                1
            }
        }
    }
}

struct Inputs {
    manifest: RunManifest,
    ids: Vec<String>,
    w: ImportanceMatrix,
    d: TagMatrix,
    out: PathBuf,
}

fn load(args: &RunArgs) -> Result<Inputs> {
    let mut m = RunManifest::load(&args.manifest)?;
    if let Some(k) = args.k {
        m.k = Some(k);
        m.sweep.k_values = (1..=k).collect();
    }
    if let Some(f) = args.folds {
        m.sweep.folds = f;
    }
    if let Some(s) = args.seed {
        m.solver.rng_seed = s;
        m.sweep.rng_seed = s;
    }
    if let Some(t) = args.time_limit {
        m.solver.time_limit = Some(t);
    }
    if let Some(mode) = args.mode {
        m.solver.mode = mode;
    }
    if let Some(o) = &args.out {
        m.out = Some(o.clone());
    }
    m.solver.validate()?;
    let out = m
        .out
        .clone()
        .ok_or_else(|| anyhow!("no output directory: pass --out or set `out` in the manifest"))?;

    let (ids, w) = io::read_importances(&m.importances)?;
    let table = io::read_descriptors(&m.descriptors, &m.descriptor_rules, &ids)?;
    let d = derive_tags(&table, &m.descriptor_rules).context("deriving tags")?;
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    Ok(Inputs { manifest: m, ids, w, d, out })
}

fn require_k(m: &RunManifest) -> Result<usize> {
    m.k.ok_or_else(|| anyhow!("no k: pass --k or set `k` in the manifest"))
}

fn write_assignments(path: &Path, ids: &[String], partition: &Partition) -> Result<()> {
    let rows = ids
        .iter()
        .zip(partition.to_one_based())
        .map(|(id, c)| vec![id.clone(), c.to_string()]);
    io::write_csv(path, &[io::ID_COLUMN, "cohort"], rows)
}

fn cohorts_json(model: &CohortModel) -> Value {
    let relative = model.relative_means();
    let sizes = model.partition.sizes();
    let cohorts: Vec<Value> = (0..model.k())
        .map(|t| {
            json!({
                "cohort": t + 1,
                "size": sizes[t],
                "tags": model.cohort_tags(t),
                "mean_importance": io::nums(&model.cohort_means[t]),
                "relative_importance": io::nums(&relative[t]),
            })
        })
        .collect();
    json!({
        "k": model.k(),
        "features": model.feature_names,
        "dataset_mean_importance": io::nums(&model.dataset_mean),
        "cohorts": cohorts,
    })
}

fn write_cohort_importance(path: &Path, model: &CohortModel) -> Result<()> {
    let relative = model.relative_means();
    let mut rows = Vec::new();
    for t in 0..model.k() {
        for (j, name) in model.feature_names.iter().enumerate() {
            rows.push(vec![
                (t + 1).to_string(),
                name.clone(),
                io::cell(model.cohort_means[t][j]),
                io::cell(relative[t][j]),
            ]);
        }
    }
    io::write_csv(path, &["cohort", "feature", "mean_importance", "relative_importance"], rows)
}

/// Writes assignments, cohort descriptions and tidy importance data for a
/// fitted model; returns its report fragment.
fn write_model(inp: &Inputs, res: &SolveResult) -> Result<Value> {
    let model = &res.model;
    write_assignments(&inp.out.join("assignments.csv"), &inp.ids, &model.partition)?;
    io::write_json(&inp.out.join("cohorts.json"), &cohorts_json(model))?;
    write_cohort_importance(&inp.out.join("cohort_importance.csv"), model)?;
    let eval = evaluate_model(model, &inp.w, &inp.d)?;
    Ok(json!({
        "k": model.k(),
        "objectives": {
            "descriptiveness": model.descriptiveness,
            "phase1_descriptiveness": res.phase1_descriptiveness,
            "compactness": io::num(model.compactness),
        },
        "proven_optimal": res.proven_optimal,
        "timed_out": res.timed_out,
        "engine": res.engine,
        "nodes_explored": res.nodes_explored,
        "cohort_sizes": eval.cohort_sizes,
        "coverage": {
            "training_fallback_rate": io::num(eval.fallback_rate),
            "training_prediction_error_sum": io::num(eval.prediction_error.total),
            "training_prediction_error_mean": io::num(eval.prediction_error.mean),
        },
    }))
}

fn timeout_warning(timed_out: bool) -> Value {
    if timed_out {
        json!("time limit reached; the reported partition is the best found and is not proven optimal")
    } else {
        Value::Null
    }
}

fn tree_summary(tree: &TreeCohortModel, w: &ImportanceMatrix, d: &TagMatrix) -> Result<Value> {
    let err = tree_prediction_error(tree, w, d)?;
    Ok(json!({
        "method": BASELINE_METHOD,
        "leaves": tree.k(),
        "leaf_sizes": tree.leaf_sizes(),
        "early_stop": tree.early_stop,
        "training_prediction_error_sum": io::num(err.total),
        "training_prediction_error_mean": io::num(err.mean),
    }))
}

fn finish_report(inp: &Inputs, command: &str, mut body: Value, start: Instant) -> Result<()> {
    let obj = body.as_object_mut().expect("report body is an object");
    obj.insert("tool_version".into(), json!(env!("CARGO_PKG_VERSION")));
    obj.insert("command".into(), json!(command));
    obj.insert("samples".into(), json!(inp.w.n_rows()));
    obj.insert("features".into(), json!(inp.w.feature_names()));
    obj.insert("tags".into(), json!(inp.d.labels()));
    obj.insert("solver".into(), serde_json::to_value(&inp.manifest.solver)?);
    // Only this field varies between identical runs.
    obj.insert("timing".into(), json!({ "wall_seconds": start.elapsed().as_secs_f64() }));
    io::write_json(&inp.out.join("report.json"), &body)
}

fn explain(args: &RunArgs) -> Result<()> {
    let start = Instant::now();
    let inp = load(args)?;
    let k = require_k(&inp.manifest)?;
    let res = solve(&inp.w, &inp.d, k, &inp.manifest.solver)?;
    let mut body = write_model(&inp, &res)?;
    body["selected_k"] = json!(k);
    body["warning"] = timeout_warning(res.timed_out);
    body["baseline"] = if inp.manifest.compare_baseline {
        let opts = TreeOptions { min_leaf: inp.manifest.baseline_min_leaf };
        let tree = fit_tree_with(&inp.w, &inp.d, k, &opts)?;
        tree_summary(&tree, &inp.w, &inp.d)?
    } else {
        Value::Null
    };
    finish_report(&inp, "explain", body, start)
}

fn sweep_rows(report: &SweepReport, label: &str) -> Vec<Vec<String>> {
    report
        .runs
        .iter()
        .map(|r| {
            vec![
                label.to_string(),
                r.k.to_string(),
                (r.fold + 1).to_string(),
                r.train_size.to_string(),
                r.validation_size.to_string(),
                r.cohorts.to_string(),
                io::cell(r.train_compactness),
                r.train_descriptiveness.to_string(),
                io::cell(r.validation_error_sum),
                io::cell(r.validation_error_mean),
                io::cell(r.fallback_rate),
                r.proven_optimal.to_string(),
            ]
        })
        .collect()
}

fn summary_rows(report: &SweepReport, label: &str) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for s in &report.summary {
        for (metric, stat) in [
            ("validation_error_mean", s.validation_error),
            ("validation_error_sum", s.validation_error_sum),
            ("train_compactness", s.train_compactness),
            ("train_descriptiveness", s.train_descriptiveness),
            ("fallback_rate", s.fallback_rate),
        ] {
            rows.push(vec![
                label.to_string(),
                s.k.to_string(),
                metric.to_string(),
                io::cell(stat.mean),
                io::cell(stat.std),
            ]);
        }
    }
    rows
}

fn sweep_json(report: &SweepReport) -> Value {
    let per_k: Vec<Value> = report
        .summary
        .iter()
        .map(|s| {
            json!({
                "k": s.k,
                "validation_error_mean": io::num(s.validation_error.mean),
                "validation_error_std": io::num(s.validation_error.std),
                "train_descriptiveness_mean": io::num(s.train_descriptiveness.mean),
                "fallback_rate_mean": io::num(s.fallback_rate.mean),
            })
        })
        .collect();
    json!({ "selected_k": report.selected_k, "folds": report.folds, "per_k": per_k })
}

fn run_sweep(args: &RunArgs) -> Result<()> {
    let start = Instant::now();
    let inp = load(args)?;
    let m = &inp.manifest;
    let tags = sweep(&inp.w, &inp.d, &m.sweep_config(CohortMethod::Tags))?;
    let tree = if m.compare_baseline {
        let method = CohortMethod::Tree { min_leaf: m.baseline_min_leaf };
        Some(sweep(&inp.w, &inp.d, &m.sweep_config(method))?)
    } else {
        None
    };

    let header = [
        "method",
        "k",
        "fold",
        "train_size",
        "validation_size",
        "cohorts",
        "train_compactness",
        "train_descriptiveness",
        "validation_error_sum",
        "validation_error_mean",
        "fallback_rate",
        "proven_optimal",
    ];
    let mut rows = sweep_rows(&tags, "tags");
    let mut summary = summary_rows(&tags, "tags");
    if let Some(t) = &tree {
        rows.extend(sweep_rows(t, "tree"));
        summary.extend(summary_rows(t, "tree"));
    }
    io::write_csv(&inp.out.join("sweep.csv"), &header, rows)?;
    io::write_csv(&inp.out.join("sweep_summary.csv"), &["method", "k", "metric", "mean", "std"], summary)?;

    let res = solve(&inp.w, &inp.d, tags.selected_k, &m.solver)?;
    let mut body = write_model(&inp, &res)?;
    let sweep_timed_out = tags.runs.iter().any(|r| r.timed_out);
    body["selected_k"] = json!(tags.selected_k);
    body["selection_metric"] = json!("mean over folds of per-sample validation importance prediction error");
    body["warning"] = timeout_warning(res.timed_out || sweep_timed_out);
    body["sweep"] = sweep_json(&tags);
    body["baseline"] = match &tree {
        Some(t) => {
            let mut v = sweep_json(t);
            v["method"] = json!(BASELINE_METHOD);
            v
        }
        None => Value::Null,
    };
    finish_report(&inp, "sweep", body, start)
}

fn baseline(args: &RunArgs) -> Result<()> {
    let start = Instant::now();
    let inp = load(args)?;
    let k = require_k(&inp.manifest)?;
    let opts = TreeOptions { min_leaf: inp.manifest.baseline_min_leaf };
    let tree = fit_tree_with(&inp.w, &inp.d, k, &opts)?;
    write_assignments(&inp.out.join("assignments.csv"), &inp.ids, &tree.partition())?;
    let leaves: Vec<Value> = tree
        .leaves
        .iter()
        .enumerate()
        .map(|(t, leaf)| {
            let rel: Vec<f64> = leaf.mean.iter().zip(&tree.dataset_mean).map(|(a, b)| a - b).collect();
            json!({
                "cohort": t + 1,
                "size": leaf.members.len(),
                "conditions": tree.leaf_description(t),
                "mean_importance": io::nums(&leaf.mean),
                "relative_importance": io::nums(&rel),
            })
        })
        .collect();
    io::write_json(
        &inp.out.join("tree.json"),
        &json!({
            "method": BASELINE_METHOD,
            "features": tree.feature_names,
            "dataset_mean_importance": io::nums(&tree.dataset_mean),
            "split_gains": io::nums(&tree.split_gains),
            "leaves": leaves,
        }),
    )?;
    let mut body = json!({ "k": k, "selected_k": k, "warning": Value::Null });
    body["baseline"] = tree_summary(&tree, &inp.w, &inp.d)?;
    if tree.early_stop {
        body["warning"] = json!(format!("no split improved the fit; stopped at {} leaves", tree.k()));
    }
    finish_report(&inp, "baseline", body, start)
}

fn synth(args: &SynthArgs) -> Result<()> {
    let mut spec = match &args.fixture {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => TwoRegionSpec::default(),
    };
    if let Some(s) = args.seed {
        spec.rng_seed = s;
    }
    if let Some(n) = args.n_per_region {
        spec.n_per_region = n;
    }
    if let Some(x) = args.noise {
        spec.noise = x;
    }
    if let Some(x) = args.spread {
        spec.spread = x;
    }
    let data = generate(&spec)?;
    let out = &args.out;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;

    let names = data.importances.feature_names().to_vec();
    let mut header = vec![io::ID_COLUMN.to_string()];
    header.extend(names.iter().cloned());
    let rows = data.sample_ids.iter().enumerate().map(|(i, id)| {
        let mut row = vec![id.clone()];
        row.extend(data.importances.row(i).iter().map(|&v| io::cell(v)));
        row
    });
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    io::write_csv(&out.join("importances.csv"), &header_refs, rows)?;

    let mut header = vec![io::ID_COLUMN.to_string()];
    header.extend(data.table.names().iter().cloned());
    let mut rows = Vec::with_capacity(data.sample_ids.len());
    for (i, id) in data.sample_ids.iter().enumerate() {
        let mut row = vec![id.clone()];
        for (_, col) in data.table.columns() {
            row.push(match col {
                crate::preprocess::Column::Continuous(v) => io::cell(v[i]),
                crate::preprocess::Column::Categorical(v) => v[i].clone(),
                crate::preprocess::Column::Binary(v) => u8::from(v[i]).to_string(),
            });
        }
        rows.push(row);
    }
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    io::write_csv(&out.join("descriptors.csv"), &header_refs, rows)?;

    let truth = data
        .sample_ids
        .iter()
        .zip(&data.labels)
        .map(|(id, r)| vec![id.clone(), (r + 1).to_string()]);
    io::write_csv(&out.join("truth.csv"), &[io::ID_COLUMN, "region"], truth)?;

    let manifest = RunManifest {
        importances: "importances.csv".into(),
        descriptors: "descriptors.csv".into(),
        descriptor_rules: default_tag_config(&spec),
        k: Some(2),
        solver: Default::default(),
        sweep: SweepSettings::default(),
        compare_baseline: true,
        baseline_min_leaf: 1,
        out: Some("results".into()),
    };
    io::write_json(&out.join("manifest.json"), &serde_json::to_value(&manifest)?)?;
    io::write_json(&out.join("fixture.json"), &serde_json::to_value(&spec)?)?;
    Ok(())
}

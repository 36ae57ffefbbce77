//! `metaview` command-line tool.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use metaview::autodiff::{load_checkpoint, save_checkpoint};
use metaview::benchbuild::{build_benchmark, resolve_benchmark, BenchmarkManifest, CorpusSpec};
use metaview::config::{RunConfig, DATA_DIR_ENV};
use metaview::graph::preprocess;
use metaview::meta::{evaluate, meta_train, EvalTask, MetricsReport, Model, TaskData};
use metaview::synthetic::{cross_domain_suite, SyntheticConfig, TargetFeatures};
use metaview::tudataset::load_dataset;
use metaview::verify::{self, Check, CorpusExpectation, TransferSetup};
use metaview::views::{diffusion_spectrum, DiffusionKind};
use metaview::{Error, Result};
use rayon::prelude::*;
use serde_json::json;

#[derive(Parser, Debug)]
#[command(name = "metaview", version, about = "Multi-view meta-learning for cross-domain few-shot graph classification")]
struct Cli {
    /// Run configuration (`key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory (a file for `spectra`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build a benchmark manifest from datasets on disk.
    Benchbuild {
        /// Corpus description (JSON).
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        data_dir: Option<PathBuf>,
    },
    /// Write the diffusion spectrum of every graph of a dataset.
    Spectra {
        /// Dataset directory; the dataset name defaults to its last component.
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        name: Option<String>,
        #[arg(long, default_value = "ppr")]
        kind: String,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        t: Option<f64>,
        /// Number of eigenvalues per graph.
        #[arg(long)]
        k: Option<usize>,
    },
    /// Meta-train and write a checkpoint and the training history.
    Train(RunArgs),
    /// Evaluate a checkpoint on the meta-test tasks.
    Eval {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Train and evaluate one model per view set under one seed.
    Ablate {
        #[command(flatten)]
        run: RunArgs,
        /// View sets to compare (repeatable); default X, X,U, X,Z, X,U,Z.
        #[arg(long = "view-set")]
        view_sets: Vec<String>,
    },
    /// Run the property suites.
    Verify {
        /// Skip the training-based transfer and determinism checks.
        #[arg(long)]
        quick: bool,
        /// Directory with corpus.json, corpus_expected.json and corpus/.
        #[arg(long)]
        fixtures: Option<PathBuf>,
    },
}

#[derive(Args, Debug, Clone)]
struct RunArgs {
    /// Benchmark manifest; without it the synthetic suite is used.
    #[arg(long)]
    benchmark: Option<PathBuf>,
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Synthetic target graphs carry all-ones features.
    #[arg(long)]
    featureless: bool,
    /// proto, match or relation.
    #[arg(long)]
    head: Option<String>,
    /// Enabled views, e.g. `X,U,Z`.
    #[arg(long)]
    views: Option<String>,
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| io_err(path, e))
}

struct Ctx {
    cfg: RunConfig,
    out: PathBuf,
    seed_flag: Option<u64>,
}

impl Ctx {
    fn out_file(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn data_dir(&self, flag: &Option<PathBuf>) -> Result<PathBuf> {
        flag.clone()
            .or_else(|| self.cfg.data_root())
            .ok_or_else(|| Error::Config(format!("no data directory: pass --data-dir, set data_dir or {DATA_DIR_ENV}")))
    }
}

struct Tasks {
    name: String,
    train: Vec<TaskData>,
    dev: Vec<TaskData>,
    test: Vec<EvalTask>,
}

fn apply_run_args(cfg: &mut RunConfig, args: &RunArgs) -> Result<()> {
    if let Some(h) = &args.head {
        cfg.set("head", h)?;
    }
    if let Some(v) = &args.views {
        cfg.set("views", v)?;
    }
    cfg.validate()
}

fn load_tasks(ctx: &Ctx, args: &RunArgs) -> Result<Tasks> {
    match &args.benchmark {
        Some(path) => {
            let m = BenchmarkManifest::from_json(&read(path)?)?;
            m.check_integrity()?;
            let data = ctx.data_dir(&args.data_dir)?;
            let r = resolve_benchmark(&m, &data, &ctx.cfg.views, &ctx.cfg.limits)?;
            Ok(Tasks {
                name: m.name,
                train: r.train,
                dev: r.dev,
                test: r.test,
            })
        }
        None => {
            let syn = SyntheticConfig {
                seed: ctx.cfg.seed,
                target_features: if args.featureless {
                    TargetFeatures::Featureless
                } else {
                    TargetFeatures::Gaussian
                },
                ..Default::default()
            };
            let s = cross_domain_suite(&syn, &ctx.cfg.views)?;
            let name = if args.featureless {
                "synthetic-featureless"
            } else {
                "synthetic"
            };
            Ok(Tasks {
                name: name.into(),
                train: s.train,
                dev: s.dev,
                test: s.test,
            })
        }
    }
}

fn checkpoint_meta(cfg: &RunConfig, benchmark: &str) -> BTreeMap<String, String> {
    BTreeMap::from([
        ("tool_version".into(), env!("CARGO_PKG_VERSION").into()),
        ("config_hash".into(), cfg.hash()),
        ("config".into(), cfg.canonical()),
        ("seed".into(), cfg.seed.to_string()),
        ("benchmark".into(), benchmark.into()),
    ])
}

fn train_model(cfg: &RunConfig, tasks: &Tasks) -> Result<(Model, metaview::meta::TrainOutcome)> {
    let mut model = Model::new(&cfg.views, &cfg.encoder, cfg.train.head, cfg.seed)?;
    let out = meta_train(&mut model, &tasks.train, &tasks.dev, &cfg.train)?;
    Ok((model, out))
}

fn eval_report(cfg: &RunConfig, model: &Model, tasks: &Tasks) -> Result<MetricsReport> {
    let outcome = evaluate(model, &tasks.test, &cfg.eval)?;
    Ok(MetricsReport::new(
        &tasks.name,
        &cfg.train.head.to_string(),
        &model.encoder.cfg.views_label(),
        cfg.eval.shots,
        &outcome,
        &cfg.hash(),
    ))
}

fn cmd_benchbuild(ctx: &Ctx, corpus: &Path, data_dir: &Option<PathBuf>) -> Result<()> {
    let mut spec = CorpusSpec::from_json(&read(corpus)?)?;
    if let Some(seed) = ctx.seed_flag {
        spec.seed = seed;
    }
    let data = ctx.data_dir(data_dir)?;
    let m = build_benchmark(&spec, &data, &ctx.cfg.limits)?;
    for w in &m.warnings {
        log::warn!("{} {}: {}", w.dataset, w.task, w.reason);
    }
    let path = ctx.out_file("manifest.json");
    write(&path, &m.to_json())?;
    let (tr, dv, te) = m.counts();
    println!(
        "{}: train {tr}, dev {dv}, test {te}, {} warning(s), hash {} -> {}",
        m.name,
        m.warnings.len(),
        m.hash(),
        path.display()
    );
    Ok(())
}

/// `v` with 12 significant digits in plain decimal notation.
fn sig12(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let magnitude = v.abs().log10().floor() as i32;
    let decimals = (11 - magnitude).max(0) as usize;
    format!("{v:.decimals$}")
}

fn cmd_spectra(
    ctx: &Ctx,
    dataset: &Path,
    name: &Option<String>,
    kind: &str,
    alpha: Option<f64>,
    t: Option<f64>,
    k: Option<usize>,
    out: Option<&Path>,
) -> Result<()> {
    let name = match name {
        Some(n) => n.clone(),
        None => dataset
            .file_name()
            .and_then(|s| s.to_str())
            .ok_or_else(|| Error::Config(format!("cannot infer dataset name from {}", dataset.display())))?
            .to_string(),
    };
    let mut views = ctx.cfg.views.clone();
    views.diffusion_kind = kind.parse::<DiffusionKind>()?;
    if let Some(a) = alpha {
        views.teleport = a;
    }
    if let Some(t) = t {
        views.heat_time = t;
    }
    if let Some(k) = k {
        views.d_z = k;
    }
    views.validate()?;
    let ds = load_dataset(dataset, &name)?;
    let lines = ds
        .graphs
        .par_iter()
        .enumerate()
        .map(|(i, g)| match preprocess(g, &ctx.cfg.limits) {
            Ok(g) => {
                let z = diffusion_spectrum(&g, &views)?;
                let mut line = format!("{}", i + 1);
                for v in z {
                    let _ = write!(line, ", {}", sig12(v));
                }
                Ok(Some(line))
            }
            Err(reason) => {
                log::warn!("graph {} skipped: {reason:?}", i + 1);
                Ok(None)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let body: String = lines.into_iter().flatten().map(|l| l + "\n").collect();
    match out {
        Some(path) => write(path, &body),
        None => {
            print!("{body}");
            Ok(())
        }
    }
}

fn cmd_train(ctx: &Ctx, args: &RunArgs) -> Result<()> {
    let tasks = load_tasks(ctx, args)?;
    let t = Instant::now();
    let (model, out) = train_model(&ctx.cfg, &tasks)?;
    let meta = checkpoint_meta(&ctx.cfg, &tasks.name);
    let ckpt = ctx.out_file("checkpoint.json");
    if let Some(dir) = ckpt.parent() {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    save_checkpoint(&ckpt, &model.store, Some(&out.adam), &meta)?;
    let history = json!({
        "tool_version": env!("CARGO_PKG_VERSION"),
        "config_hash": ctx.cfg.hash(),
        "seed": ctx.cfg.seed,
        "benchmark": tasks.name,
        "history": out.history,
    });
    write(&ctx.out_file("history.json"), &serde_json::to_string_pretty(&history)?)?;
    let h = &out.history;
    println!(
        "trained {} epochs in {:.1} s; final loss {:.4}; best dev epoch {:?}; checkpoint {}",
        h.epoch_loss.len(),
        t.elapsed().as_secs_f64(),
        h.epoch_loss.last().copied().unwrap_or(f64::NAN),
        h.best_epoch,
        ckpt.display()
    );
    Ok(())
}

fn cmd_eval(ctx: &mut Ctx, args: &RunArgs, checkpoint: &Path) -> Result<()> {
    // The architecture comes from the configuration stored in the checkpoint;
    // evaluation settings from the current configuration.
    let doc: serde_json::Value = serde_json::from_str(&read(checkpoint)?)?;
    let trained = match doc["meta"]["config"].as_str() {
        Some(c) => RunConfig::from_str_checked(c)?,
        None => ctx.cfg.clone(),
    };
    ctx.cfg.views = trained.views.clone();
    ctx.cfg.encoder = trained.encoder.clone();
    ctx.cfg.train.head = trained.train.head;
    if let Some(v) = &args.views {
        ctx.cfg.set("views", v)?;
    }
    let tasks = load_tasks(ctx, args)?;
    let mut model = Model::new(&ctx.cfg.views, &ctx.cfg.encoder, ctx.cfg.train.head, trained.seed)?;
    load_checkpoint(checkpoint, &mut model.store)?;
    let report = eval_report(&ctx.cfg, &model, &tasks)?;
    write(&ctx.out_file("metrics.json"), &report.to_json())?;
    print!("{}", report.render_table());
    Ok(())
}

const DEFAULT_VIEW_SETS: [&str; 4] = ["X", "X,U", "X,Z", "X,U,Z"];

fn cmd_ablate(ctx: &Ctx, args: &RunArgs, sets: &[String]) -> Result<()> {
    let sets: Vec<String> = if sets.is_empty() {
        DEFAULT_VIEW_SETS.iter().map(|s| s.to_string()).collect()
    } else {
        sets.to_vec()
    };
    let tasks = load_tasks(ctx, args)?;
    let mut reports = Vec::new();
    for set in &sets {
        let mut cfg = ctx.cfg.clone();
        cfg.set("views", set)?;
        let (model, _) = train_model(&cfg, &tasks)?;
        let r = eval_report(&cfg, &model, &tasks)?;
        log::info!("views {set}: {:.4}", r.aggregate.mean);
        reports.push(r);
    }
    let width = sets.iter().map(String::len).chain(["views".len()]).max().unwrap_or(5);
    let mut table = format!("{:<width$}  {:>8}  {:>8}  {:>6}\n", "views", "mean", "std", "seed");
    for r in &reports {
        let _ = writeln!(
            table,
            "{:<width$}  {:>8.4}  {:>8.4}  {:>6}",
            r.views, r.aggregate.mean, r.aggregate.std, ctx.cfg.seed
        );
    }
    let doc = json!({
        "tool_version": env!("CARGO_PKG_VERSION"),
        "config_hash": ctx.cfg.hash(),
        "seed": ctx.cfg.seed,
        "benchmark": tasks.name,
        "reports": reports,
    });
    write(&ctx.out_file("ablation.json"), &serde_json::to_string_pretty(&doc)?)?;
    print!("{table}");
    Ok(())
}

fn default_fixtures() -> Option<PathBuf> {
    [
        PathBuf::from("crates/core/tests/fixtures"),
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures"),
    ]
    .into_iter()
    .find(|p| p.join("corpus.json").exists())
}

fn cmd_verify(ctx: &Ctx, quick: bool, fixtures: &Option<PathBuf>) -> Result<bool> {
    let seed = ctx.cfg.seed;
    let mut checks: Vec<Check> = vec![
        verify::spectral_oracle(200, seed.wrapping_add(1))?,
        verify::small_spectra()?,
        verify::gradient_suite(10)?,
        verify::permutation_invariance(50, 20, seed.wrapping_add(4))?,
        verify::overfit_fixture(seed.wrapping_add(5))?,
    ];
    for c in &checks {
        println!("{c}");
    }
    let mut skipped = Vec::new();
    let push = |c: Check, checks: &mut Vec<Check>| {
        println!("{c}");
        checks.push(c);
    };
    if quick {
        skipped.push("criteria 6 and 9 (synthetic transfer and determinism): skipped with --quick".to_string());
    } else {
        let setup = TransferSetup::standard(seed);
        let t = Instant::now();
        let (full, _) = setup.run("X,U,Z")?;
        let (x_only, _) = setup.run("X")?;
        push(verify::transfer_check(&full, &x_only, t.elapsed().as_secs_f64()), &mut checks);
        let t = Instant::now();
        let (again, _) = setup.run("X,U,Z")?;
        push(verify::determinism_check(&full, &again, t.elapsed().as_secs_f64()), &mut checks);
    }
    match fixtures.clone().or_else(default_fixtures) {
        Some(dir) => {
            let spec = CorpusSpec::from_json(&read(&dir.join("corpus.json"))?)?;
            let expected = CorpusExpectation::from_json(&read(&dir.join("corpus_expected.json"))?)?;
            push(verify::fixture_counts(&dir.join("corpus"), &spec, &expected)?, &mut checks);
        }
        None => skipped.push("criterion 7 (benchmark factory counts): fixtures not found, pass --fixtures".into()),
    }
    push(verify::head_correctness(1000, seed.wrapping_add(8))?, &mut checks);
    for s in &skipped {
        println!("{s}");
    }
    let passed = checks.iter().all(|c| c.passed);
    let doc = json!({
        "tool_version": env!("CARGO_PKG_VERSION"),
        "config_hash": ctx.cfg.hash(),
        "seed": seed,
        "passed": passed,
        "checks": checks.iter().map(|c| json!({
            "criterion": c.criterion,
            "name": c.name,
            "passed": c.passed,
            "detail": c.detail,
            "seconds": c.seconds,
        })).collect::<Vec<_>>(),
        "skipped": skipped,
    });
    write(&ctx.out_file("verify.json"), &serde_json::to_string_pretty(&doc)?)?;
    println!(
        "{} of {} checks passed",
        checks.iter().filter(|c| c.passed).count(),
        checks.len()
    );
    Ok(passed)
}

fn run(cli: Cli) -> Result<bool> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.set("seed", &seed.to_string())?;
    }
    if let Some(j) = cli.jobs {
        if j == 0 {
            return Err(Error::Config("--jobs must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .map_err(|e| Error::Config(format!("cannot set up {j} workers: {e}")))?;
    }
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
    let mut ctx = Ctx {
        cfg,
        out,
        seed_flag: cli.seed,
    };
    match &cli.command {
        Command::Benchbuild { corpus, data_dir } => cmd_benchbuild(&ctx, corpus, data_dir)?,
        Command::Spectra {
            dataset,
            name,
            kind,
            alpha,
            t,
            k,
        } => cmd_spectra(&ctx, dataset, name, kind, *alpha, *t, *k, cli.out.as_deref())?,
        Command::Train(args) => {
            apply_run_args(&mut ctx.cfg, args)?;
            cmd_train(&ctx, args)?
        }
        Command::Eval { run, checkpoint } => cmd_eval(&mut ctx, run, checkpoint)?,
        Command::Ablate { run, view_sets } => {
            apply_run_args(&mut ctx.cfg, run)?;
            cmd_ablate(&ctx, run, view_sets)?
        }
        Command::Verify { quick, fixtures } => return cmd_verify(&ctx, *quick, fixtures),
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            let kind = match &e {
                Error::Config(_) => "config",
                Error::MissingFile(_) | Error::Io { .. } => "io",
                Error::Malformed { .. } | Error::Json(_) => "input",
                Error::Benchmark(_) => "benchmark",
                Error::Numerical(_) => "numerical",
                _ => "runtime",
            };
            eprintln!("{}", json!({ "error": kind, "message": e.to_string() }));
            if matches!(e, Error::Config(_)) {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

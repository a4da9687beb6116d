use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use adg_core::config::{self, ConfigError, DatasetKind, LoadedData, Resolved, RunConfig};
use adg_core::data::{cache, make_loso_splits, DataError};
use adg_core::diffcore::{checkpoint, OpKind, Precision, Real};
use adg_core::graphs::GraphSet;
use adg_core::model::GnnAdgModel;
use adg_core::train::{
    self, confusion_svg, fold_dims, mean_accuracy, render_text, Experiment, ExperimentReport, TrainError, TrainMode,
};
use adg_core::verify::{run_gradcheck, GradcheckConfig};
use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "adg", version, about = "Anatomical sensor-graph activity recognition with domain adversarial training")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct ConfigArgs {
    /// TOML configuration file.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override a key, e.g. `--set train.epochs=40`. Repeatable; applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Dataset kind: synth, dsads or oppt.
    #[arg(long)]
    dataset: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Train every requested mode on every leave-one-cluster-out fold.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Output directory.
        #[arg(long, short, default_value = "runs/latest")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        jobs: Option<usize>,
        /// Restrict to these modes (fusion, single:I, single:A, single:L, baseline).
        #[arg(long = "mode")]
        modes: Vec<TrainMode>,
    },
    /// Re-score the checkpoints of a finished run.
    Eval {
        /// Directory written by `adg train`.
        dir: PathBuf,
    },
    /// Check every differentiable op against finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 10)]
        instances: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, hide = true, value_name = "OP")]
        sign_flip: Option<String>,
    },
    /// Write a synthetic sample cache.
    GenSynth {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Read a raw dataset tree into a sample cache.
    Ingest {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Raw dataset directory; overrides `dataset.root`.
        #[arg(long)]
        root: Option<PathBuf>,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Print the text report of a finished run.
    Report { dir: PathBuf },
}

fn resolve_config(args: &ConfigArgs, extra: &[String]) -> Result<Resolved> {
    let mut overrides = Vec::new();
    if let Some(d) = &args.dataset {
        let kind: DatasetKind = d.parse().map_err(|e: String| ConfigError::Invalid(e))?;
        overrides.push(format!("dataset.kind=\"{}\"", kind.name()));
    }
    overrides.extend(args.set.iter().cloned());
    overrides.extend(extra.iter().cloned());
    Ok(config::resolve(args.config.as_deref(), std::env::vars(), &overrides)?)
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn file_stem(mode: TrainMode) -> String {
    mode.to_string().replace(':', "-")
}

fn load_data(cfg: &RunConfig) -> Result<LoadedData> {
    let data = cfg.dataset.load(&cfg.synth)?;
    for w in &data.warnings {
        log::warn!("{w}");
    }
    log::info!(
        "{} windows, {} nodes x {} channels x {} steps, {} classes",
        data.set.len(),
        data.set.nodes,
        data.set.channels,
        data.set.length,
        data.set.classes()
    );
    Ok(data)
}

fn cmd_train(args: ConfigArgs, out: PathBuf, seed: Option<u64>, jobs: Option<usize>, modes: Vec<TrainMode>) -> Result<()> {
    let mut extra = Vec::new();
    if let Some(s) = seed {
        extra.push(format!("train.seed={s}"));
    }
    if let Some(j) = jobs {
        extra.push(format!("jobs={j}"));
    }
    if !modes.is_empty() {
        let list: Vec<String> = modes.iter().map(|m| format!("\"{m}\"")).collect();
        extra.push(format!("modes=[{}]", list.join(",")));
    }
    let resolved = resolve_config(&args, &extra)?;
    let cfg = &resolved.config;
    let data = load_data(cfg)?;
    let ex = Experiment {
        dataset: cfg.dataset.kind.name(),
        set: &data.set,
        layout: &data.layout,
        clusters: &data.clusters,
    };
    write(&out.join("config.resolved.toml"), resolved.snapshot())?;
    let progress = |done: usize, total: usize, r: &train::FoldReport| {
        log::info!("[{done}/{total}] fold {} {}: {:.2}%", r.fold, r.mode, 100.0 * r.accuracy);
    };
    let output = match train::run_experiment(&ex, &cfg.modes, &cfg.train, &cfg.model, cfg.jobs, &progress) {
        Err(TrainError::Divergence { snapshot, fold, epoch, batch, detail }) => {
            write(&out.join("divergence.txt"), &snapshot)?;
            return Err(TrainError::Divergence { fold, epoch, batch, detail, snapshot: String::new() }.into());
        }
        r => r?,
    };
    let report = &output.report;
    for (run, ckpt) in report.runs.iter().zip(&output.checkpoints) {
        write(&out.join("folds").join(&run.fold).join(format!("{}.ckpt", file_stem(run.mode))), ckpt)?;
    }
    for c in &report.confusion {
        let name = format!("{}-{}.svg", file_stem(c.mode), c.graph);
        let title = format!("{} / {} ({:.1}%)", c.mode.title(), c.graph, 100.0 * c.accuracy);
        write(&out.join("confusion").join(name), confusion_svg(&c.confusion, &report.activity_names, &title))?;
    }
    let text = render_text(report);
    write(&out.join("report.json"), report.to_json())?;
    write(&out.join("report.txt"), &text)?;
    print!("{text}");
    println!("wrote {}", out.display());
    Ok(())
}

fn rescore<T: Real>(report: &ExperimentReport, cfg: &RunConfig, data: &LoadedData, dir: &Path) -> Result<Vec<f64>> {
    let splits = make_loso_splits(&data.set, &data.clusters)?;
    let graphs = GraphSet::new(&data.layout, cfg.train.self_loops)?;
    let mut out = Vec::with_capacity(report.runs.len());
    for run in &report.runs {
        let fold = splits
            .iter()
            .position(|s| s.fold == run.fold)
            .ok_or_else(|| anyhow!("fold {} is not produced by the current data", run.fold))?;
        let split = &splits[fold];
        let mut model = GnnAdgModel::<T>::new(cfg.model.clone(), fold_dims(&data.set, split), 0)?;
        let path = dir.join("folds").join(&run.fold).join(format!("{}.ckpt", file_stem(run.mode)));
        let bytes = fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
        checkpoint::load_into(model.params_mut(), &bytes).with_context(|| format!("loading {}", path.display()))?;
        let tcfg = train::TrainConfig { mode: run.mode, ..cfg.train.clone() };
        out.push(mean_accuracy(&train::score(&model, &data.set, split, fold, &graphs, &tcfg)?));
    }
    Ok(out)
}

fn cmd_eval(dir: PathBuf) -> Result<()> {
    let report = read_report(&dir)?;
    let snap = dir.join("config.resolved.toml");
    let text = fs::read_to_string(&snap).map_err(|e| ConfigError::Io {
        path: snap.display().to_string(),
        detail: e.to_string(),
    })?;
    let cfg = config::from_toml_str(&text)?;
    let data = load_data(&cfg)?;
    let scores = match cfg.train.precision {
        Precision::F32 => rescore::<f32>(&report, &cfg, &data, &dir)?,
        Precision::F64 => rescore::<f64>(&report, &cfg, &data, &dir)?,
    };
    let mut worst = 0.0f64;
    println!("{:8} {:12} {:>10} {:>10}", "fold", "mode", "reported", "rescored");
    for (run, s) in report.runs.iter().zip(&scores) {
        worst = worst.max((run.accuracy - s).abs());
        println!("{:8} {:12} {:>9.2}% {:>9.2}%", run.fold, run.mode.to_string(), 100.0 * run.accuracy, 100.0 * s);
    }
    println!("max |reported - rescored| = {worst:.3e}");
    if worst > 1e-9 {
        bail!("rescored accuracies differ from {}", dir.join("report.json").display());
    }
    Ok(())
}

fn cmd_gradcheck(instances: usize, seed: u64, sign_flip: Option<String>) -> Result<ExitCode> {
    let sign_flip = match sign_flip {
        Some(name) => Some(
            OpKind::ALL
                .iter()
                .copied()
                .find(|k| k.name() == name)
                .ok_or_else(|| ConfigError::Invalid(format!("unknown op {name:?}")))?,
        ),
        None => None,
    };
    let cfg = GradcheckConfig { instances, seed, sign_flip, ..GradcheckConfig::default() };
    let report = run_gradcheck(&cfg)?;
    print!("{}", report.render());
    if report.passed() {
        println!("all gradient checks passed");
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("gradient check failed: {}", report.failures().join(", "));
        Ok(ExitCode::from(1))
    }
}

fn cmd_gen_synth(args: ConfigArgs, out: PathBuf) -> Result<()> {
    let resolved = resolve_config(&args, &["dataset.kind=\"synth\"".to_string()])?;
    let cfg = &resolved.config;
    let data = cfg.dataset.ingest(&cfg.synth)?;
    write_cache(&data, &out)
}

fn cmd_ingest(args: ConfigArgs, root: Option<PathBuf>, out: PathBuf) -> Result<()> {
    let resolved = resolve_config(&args, &[])?;
    let mut cfg = resolved.config;
    if cfg.dataset.kind == DatasetKind::Synth {
        return Err(ConfigError::Invalid("ingest reads dsads or oppt; use gen-synth for synthetic data".into()).into());
    }
    if root.is_some() {
        cfg.dataset.root = root;
    }
    let data = cfg.dataset.ingest(&cfg.synth)?;
    for w in &data.warnings {
        log::warn!("{w}");
    }
    write_cache(&data, &out)
}

fn write_cache(data: &LoadedData, out: &Path) -> Result<()> {
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    cache::save(&data.set, out)?;
    let counts = data.set.class_counts();
    println!(
        "wrote {} windows ({} nodes, {} channels, length {}) to {}",
        data.set.len(),
        data.set.nodes,
        data.set.channels,
        data.set.length,
        out.display()
    );
    for (name, n) in data.set.activity_names.iter().zip(counts) {
        println!("  {name:24} {n}");
    }
    Ok(())
}

fn read_report(dir: &Path) -> Result<ExperimentReport> {
    let path = dir.join("report.json");
    let text = fs::read_to_string(&path).map_err(|e| ConfigError::Io {
        path: path.display().to_string(),
        detail: e.to_string(),
    })?;
    ExperimentReport::from_json(&text).map_err(|e| anyhow!(ConfigError::Parse { origin: path.display().to_string(), detail: e }))
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(c) = cause.downcast_ref::<ConfigError>() {
            return match c {
                ConfigError::Data(DataError::Config(_)) => 2,
                ConfigError::Data(_) => 1,
                _ => 2,
            };
        }
        if let Some(t) = cause.downcast_ref::<TrainError>() {
            return match t {
                TrainError::Divergence { .. } => 3,
                TrainError::Config(_) => 2,
                _ => 1,
            };
        }
        if let Some(DataError::Config(_)) = cause.downcast_ref::<DataError>() {
            return 2;
        }
    }
    1
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train { cfg, out, seed, jobs, modes } => cmd_train(cfg, out, seed, jobs, modes).map(|_| ExitCode::SUCCESS),
        Command::Eval { dir } => cmd_eval(dir).map(|_| ExitCode::SUCCESS),
        Command::Gradcheck { instances, seed, sign_flip } => cmd_gradcheck(instances, seed, sign_flip),
        Command::GenSynth { cfg, out } => cmd_gen_synth(cfg, out).map(|_| ExitCode::SUCCESS),
        Command::Ingest { cfg, root, out } => cmd_ingest(cfg, root, out).map(|_| ExitCode::SUCCESS),
        Command::Report { dir } => read_report(&dir).map(|r| {
            print!("{}", render_text(&r));
            ExitCode::SUCCESS
        }),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

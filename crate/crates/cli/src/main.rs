use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use chrono::{DateTime, NaiveDate, Utc};
use clap::{Args, Parser, Subcommand};
use libexpert::learn::{ClassifierKind, Scheme};
use libexpert::pipeline::{
    self, IdentityMode, LibraryConfig, PipelineConfig, RepoSource, RunOptions, Stage, StageStatus,
};
use libexpert::Error;

#[derive(Parser)]
#[command(
    name = "libexpert",
    version,
    about = "Find library experts from the git histories of client projects"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    #[command(flatten)]
    overrides: Overrides,

    /// Log level (error, warn, info, debug, trace)
    #[arg(long, default_value = "warn", global = true)]
    log_level: String,
}

/// Every config value can be set or overridden from the command line.
#[derive(Args, Default)]
struct Overrides {
    /// Pipeline config file (TOML)
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Target library id; repeat for several (replaces the config list)
    #[arg(long = "library", global = true)]
    libraries: Vec<String>,
    /// Directory of local git clones (replaces the configured source)
    #[arg(long, global = true)]
    repos: Option<PathBuf>,
    /// Snapshot date, RFC 3339 or YYYY-MM-DD
    #[arg(long, global = true, value_parser = parse_snapshot)]
    snapshot: Option<DateTime<Utc>>,
    /// Ground-truth CSV (developer,library,score)
    #[arg(long, global = true)]
    ground_truth: Option<PathBuf>,
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Class scheme: ternary or five
    #[arg(long, global = true)]
    scheme: Option<Scheme>,
    /// Classifier (rf, svm, zeror); repeat for several
    #[arg(long = "classifier", global = true)]
    classifiers: Vec<ClassifierKind>,
    /// Largest k tried when searching for an expert cluster
    #[arg(long, global = true)]
    kmax: Option<usize>,
    /// Expert-fraction threshold for the expert cluster
    #[arg(long, global = true)]
    threshold: Option<f64>,
    /// k-means restarts per k
    #[arg(long, global = true)]
    restarts: Option<usize>,
    /// Resolve developers through the hosting API instead of by email
    #[arg(long, global = true)]
    remote_identity: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Find client projects of each target library
    Corpus,
    /// Extract per-commit events from client projects
    Mine,
    /// Compute per-developer feature vectors
    Features,
    /// Impute, prune, transform and standardize features
    Preprocess,
    /// Train and cross-validate classifiers
    Train,
    /// Search for the expert cluster and flag candidates
    Cluster,
    /// Effect sizes and quintile tables for the expert cluster
    Stats,
    /// Run every stage
    Run {
        /// Reuse checkpointed stages whose inputs did not change
        #[arg(long)]
        resume: bool,
    },
    /// Flag one developer with a saved cluster model
    Predict {
        /// clusters.json written by the cluster stage
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        developer: String,
    },
    /// Print a summary of an output directory
    Report,
}

fn parse_snapshot(s: &str) -> Result<DateTime<Utc>, String> {
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Ok(t.with_timezone(&Utc));
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .map(|d| d.and_hms_opt(0, 0, 0).expect("midnight").and_utc())
        .map_err(|_| format!("`{s}` is neither RFC 3339 nor YYYY-MM-DD"))
}

fn load_config(o: &Overrides) -> Result<PipelineConfig, Error> {
    let mut cfg = match &o.config {
        Some(path) => PipelineConfig::load(path)?,
        None => {
            let missing = |flag: &str| Error::Config(format!("without --config, {flag} is required"));
            if o.libraries.is_empty() {
                return Err(missing("--library"));
            }
            let repos = o.repos.clone().ok_or_else(|| missing("--repos"))?;
            let snapshot = o.snapshot.ok_or_else(|| missing("--snapshot"))?;
            PipelineConfig::new(Vec::new(), RepoSource::Directory { path: repos }, snapshot)
        }
    };
    if !o.libraries.is_empty() {
        cfg.libraries = o.libraries.iter().map(|id| LibraryConfig::builtin(id)).collect();
    }
    if let Some(path) = &o.repos {
        cfg.source = RepoSource::Directory { path: path.clone() };
    }
    if let Some(s) = o.snapshot {
        cfg.snapshot = s;
    }
    if let Some(p) = &o.ground_truth {
        cfg.ground_truth = Some(p.clone());
    }
    if let Some(p) = &o.output_dir {
        cfg.output_dir = p.clone();
    }
    if let Some(s) = o.seed {
        cfg.seed = Some(s);
    }
    if let Some(s) = o.scheme {
        cfg.scheme = s;
    }
    if !o.classifiers.is_empty() {
        cfg.classifiers = o.classifiers.clone();
    }
    if let Some(k) = o.kmax {
        cfg.k_max = k;
    }
    if o.threshold.is_some() {
        cfg.threshold = o.threshold;
    }
    if let Some(r) = o.restarts {
        cfg.restarts = r;
    }
    if o.remote_identity {
        cfg.identity = IdentityMode::Remote;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_summary(summary: &pipeline::RunSummary) {
    for lib in &summary.libraries {
        for (stage, status) in &lib.stages {
            let what = match status {
                StageStatus::Ran => "done".to_string(),
                StageStatus::Resumed => "unchanged (checkpoint)".to_string(),
                StageStatus::Skipped(why) => format!("skipped: {why}"),
            };
            println!("{:<14} {:<11} {what}", lib.library, stage.name());
        }
        println!("{:<14} outputs in {}", lib.library, lib.dir.display());
    }
    if let Some(p) = &summary.intersection {
        println!("cross-library experts: {}", p.display());
    }
    println!("manifest: {}", summary.manifest.display());
}

fn run_stages(o: &Overrides, opts: RunOptions) -> anyhow::Result<()> {
    let cfg = load_config(o)?;
    let summary = pipeline::run(&cfg, &opts)?;
    print_summary(&summary);
    Ok(())
}

fn model_path(o: &Overrides, model: Option<PathBuf>) -> anyhow::Result<PathBuf> {
    if let Some(m) = model {
        return Ok(m);
    }
    let cfg = load_config(o).context("pass --model or a config naming the output directory")?;
    let lib = cfg.library_specs()?.remove(0);
    Ok(cfg
        .output_dir
        .join(pipeline::library_dir_name(&lib.id))
        .join(pipeline::CLUSTERS_JSON))
}

fn output_dir(o: &Overrides) -> anyhow::Result<PathBuf> {
    if let Some(d) = &o.output_dir {
        return Ok(d.clone());
    }
    Ok(load_config(o)?.output_dir)
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    let o = &cli.overrides;
    let until = RunOptions::stage;
    match cli.command {
        Command::Corpus => run_stages(o, until(Stage::Corpus)),
        Command::Mine => run_stages(o, until(Stage::Mine)),
        Command::Features => run_stages(o, until(Stage::Features)),
        Command::Preprocess => run_stages(o, until(Stage::Preprocess)),
        Command::Train => run_stages(o, until(Stage::Train)),
        Command::Cluster => run_stages(o, until(Stage::Cluster)),
        Command::Stats => run_stages(o, until(Stage::Stats)),
        Command::Run { resume } => run_stages(
            o,
            RunOptions {
                resume,
                ..RunOptions::default()
            },
        ),
        Command::Predict { model, developer } => {
            let path = model_path(o, model)?;
            let row = pipeline::predict_developer(&path, &developer)?;
            println!(
                "{}\t{}\t{}\t{:.6}",
                row.developer, row.library, row.verdict, row.distance_margin
            );
            Ok(())
        }
        Command::Report => {
            let dir = output_dir(o)?;
            print!("{}", pipeline::render_report(Path::new(&dir))?);
            Ok(())
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<Error>()) {
        Some(Error::Stage { .. }) => 3,
        Some(e) if e.is_validation() => 2,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .parse_filters(&cli.log_level)
        .format_timestamp(None)
        .init();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let code = exit_code(&err);
            match err.chain().find_map(|e| e.downcast_ref::<Error>()) {
                Some(Error::Stage {
                    stage,
                    library,
                    source,
                }) => {
                    eprintln!("error: stage `{stage}` failed for {library}: {source}");
                    eprintln!(
                        "fix the cause and rerun with `run --resume` to continue from the last checkpoint"
                    );
                }
                _ => eprintln!("error: {}", format_chain(&err)),
            }
            ExitCode::from(code)
        }
    }
}

fn format_chain(err: &anyhow::Error) -> String {
    err.chain().map(|e| e.to_string()).collect::<Vec<_>>().join(": ")
}

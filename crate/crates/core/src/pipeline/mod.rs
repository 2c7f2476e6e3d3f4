//! Stage-by-stage driver: corpus → mine → features → preprocess → train →
//! cluster → stats, one output directory per library.
//!
//! Each finished stage is recorded in `checkpoint.json` under a key derived
//! from the config values it reads and the hashes of its input artifacts.
//! A resumed run skips every stage whose key and outputs still match.

mod config;
mod summary;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

pub use config::{CvSettings, IdentityMode, LibraryConfig, PipelineConfig, RepoSource};
pub use summary::render_report;

use crate::cluster::{self, ClusterInput, ClusterModel, SelectionConfig, VerdictRow};
use crate::corpus::{self, remote::HostingApi, Corpus, LibrarySpec, RepoRef};
use crate::error::{Error, Result};
use crate::features::{self, FeatureVector};
use crate::learn::{self, GroundTruthLabel, SupervisedReport};
use crate::miner::{self, IdentityResolver, RemoteLookup};
use crate::preprocess::{self, FeatureMatrix, TransformLog};
use crate::stats;

pub const CORPUS_JSON: &str = "corpus.json";
pub const EVENTS_CSV: &str = "events.csv";
pub const MINE_REPORT_JSON: &str = "mine.report.json";
pub const FEATURES_CSV: &str = "features.csv";
pub const LABELS_JSON: &str = "labels.json";
pub const CLEAN_CSV: &str = "features.clean.csv";
pub const TRANSFORM_JSON: &str = "transform_log.json";
pub const SUPERVISED_JSON: &str = "report.supervised.json";
pub const CLUSTERS_JSON: &str = "clusters.json";
pub const VERDICTS_CSV: &str = "verdicts.csv";
pub const EFFECTS_JSON: &str = "report.effects.json";
pub const QUINTILES_CSV: &str = "quintiles.csv";
pub const CHECKPOINT_JSON: &str = "checkpoint.json";
pub const MANIFEST_JSON: &str = "manifest.json";
pub const INTERSECTION_JSON: &str = "experts.intersection.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Corpus,
    Mine,
    Features,
    Preprocess,
    Train,
    Cluster,
    Stats,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Corpus,
        Stage::Mine,
        Stage::Features,
        Stage::Preprocess,
        Stage::Train,
        Stage::Cluster,
        Stage::Stats,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Corpus => "corpus",
            Stage::Mine => "mine",
            Stage::Features => "features",
            Stage::Preprocess => "preprocess",
            Stage::Train => "train",
            Stage::Cluster => "cluster",
            Stage::Stats => "stats",
        }
    }

    /// Stages whose artifacts this one reads, directly or not.
    pub fn dependencies(self) -> &'static [Stage] {
        use Stage::*;
        match self {
            Corpus => &[],
            Mine => &[Corpus],
            Features => &[Corpus, Mine],
            Preprocess => &[Corpus, Mine, Features],
            Train | Cluster => &[Corpus, Mine, Features, Preprocess],
            Stats => &[Corpus, Mine, Features, Preprocess, Cluster],
        }
    }

    /// Stages that need ground-truth labels.
    pub fn needs_labels(self) -> bool {
        self > Stage::Features
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown stage `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    /// Last stage to execute.
    pub until: Stage,
    /// Reuse checkpointed stages whose inputs are unchanged.
    pub resume: bool,
    /// Always recompute this stage, even when resuming.
    pub force: Option<Stage>,
    /// Run only `until` and the stages it depends on.
    pub targeted: bool,
}

impl RunOptions {
    /// Options for running one stage, reusing whatever it depends on.
    pub fn stage(stage: Stage) -> Self {
        RunOptions {
            until: stage,
            resume: true,
            force: Some(stage),
            targeted: true,
        }
    }

    pub fn wants(&self, stage: Stage) -> bool {
        if self.targeted {
            stage == self.until || self.until.dependencies().contains(&stage)
        } else {
            stage <= self.until
        }
    }
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            until: Stage::Stats,
            resume: false,
            force: None,
            targeted: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status", content = "reason")]
pub enum StageStatus {
    Ran,
    Resumed,
    Skipped(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LibraryOutcome {
    pub library: String,
    pub dir: PathBuf,
    pub stages: Vec<(Stage, StageStatus)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub libraries: Vec<LibraryOutcome>,
    pub manifest: PathBuf,
    pub intersection: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub key: String,
    pub artifacts: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub stages: BTreeMap<Stage, StageRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LibraryManifest {
    pub dir: String,
    pub stages: BTreeMap<Stage, String>,
    pub artifacts: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: Option<u64>,
    pub config: PipelineConfig,
    pub libraries: BTreeMap<String, LibraryManifest>,
    pub intersection: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Intersection {
    pub libraries: Vec<String>,
    pub developers: BTreeSet<String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn hash_file(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path)?))
}

/// Directory name for a library id.
pub fn library_dir_name(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "._-".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect()
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| missing(path, e))?;
    Ok(serde_json::from_slice(&bytes)?)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    fs::write(path, bytes)?;
    Ok(())
}

fn open(path: &Path) -> Result<fs::File> {
    fs::File::open(path).map_err(|e| missing(path, e))
}

fn missing(path: &Path, e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::NotFound {
        Error::invalid(format!(
            "{} is missing; run the stage that produces it first",
            path.display()
        ))
    } else {
        e.into()
    }
}

fn write_with(path: &Path, f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    fs::write(path, buf)?;
    Ok(())
}

/// Resolve the configured repository source into local clones.
pub fn resolve_repos(source: &RepoSource) -> Result<Vec<RepoRef>> {
    match source {
        RepoSource::Directory { path } => corpus::discover_repos(path),
        RepoSource::List { path, root } => {
            let text = fs::read_to_string(path).map_err(|e| missing(path, e))?;
            Ok(corpus::locate_repos(&corpus::parse_repo_list(&text)?, root))
        }
        RepoSource::Remote {
            language,
            limit,
            clone_dir,
        } => {
            let ids = HostingApi::from_env().top_starred(language, *limit)?;
            fs::create_dir_all(clone_dir)?;
            for id in &ids {
                let dest = clone_dir.join(id.replacen('/', "__", 1));
                if dest.exists() {
                    continue;
                }
                log::info!("cloning {id}");
                let out = Command::new("git")
                    .args(["clone", "--bare", "--quiet"])
                    .arg(format!("https://github.com/{id}.git"))
                    .arg(&dest)
                    .output()?;
                if !out.status.success() {
                    log::warn!(
                        "clone of {id} failed: {}",
                        String::from_utf8_lossy(&out.stderr).trim()
                    );
                }
            }
            Ok(corpus::locate_repos(&ids, clone_dir))
        }
    }
}

struct Ctx<'a> {
    cfg: &'a PipelineConfig,
    spec: LibrarySpec,
    dir: PathBuf,
    resolver: &'a IdentityResolver,
    repos: &'a mut Option<Vec<RepoRef>>,
}

impl Ctx<'_> {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn seed(&self) -> Result<u64> {
        self.cfg
            .seed
            .ok_or_else(|| Error::Config("this stage needs a seed".into()))
    }

    fn vectors(&self) -> Result<Vec<FeatureVector>> {
        features::read_features_csv(open(&self.path(FEATURES_CSV))?)
    }

    fn labels(&self) -> Result<Vec<GroundTruthLabel>> {
        read_json(&self.path(LABELS_JSON))
    }

    fn stage_config(&self, stage: Stage) -> serde_json::Value {
        let c = self.cfg;
        match stage {
            Stage::Corpus => json!({ "library": self.spec, "source": c.source, "snapshot": c.snapshot }),
            Stage::Mine => json!({ "identity": c.identity, "snapshot": c.snapshot }),
            Stage::Features => json!({ "snapshot": c.snapshot }),
            Stage::Preprocess => json!({
                "correlation_threshold": c.correlation_threshold,
                "ground_truth": c.ground_truth.as_deref().map(hash_file).transpose().ok().flatten(),
            }),
            Stage::Train => json!({
                "scheme": c.scheme, "classifiers": c.classifiers, "cv": c.cv, "seed": c.seed,
            }),
            Stage::Cluster => json!({
                "k_max": c.k_max, "threshold": c.threshold, "restarts": c.restarts, "seed": c.seed,
            }),
            Stage::Stats => json!({}),
        }
    }

    fn execute(&mut self, stage: Stage) -> Result<Vec<&'static str>> {
        match stage {
            Stage::Corpus => self.corpus(),
            Stage::Mine => self.mine(),
            Stage::Features => self.features(),
            Stage::Preprocess => self.preprocess(),
            Stage::Train => self.train(),
            Stage::Cluster => self.cluster(),
            Stage::Stats => self.stats(),
        }
    }

    fn corpus(&mut self) -> Result<Vec<&'static str>> {
        if self.repos.is_none() {
            *self.repos = Some(resolve_repos(&self.cfg.source)?);
        }
        let repos = self.repos.as_deref().unwrap_or_default();
        let corpus = corpus::build_corpus(repos, &self.spec, self.cfg.snapshot);
        for e in corpus.report.errors() {
            log::warn!("{}: {}", e.repo, e.message);
        }
        log::info!(
            "{}: {} of {} repositories are client projects",
            self.spec.id,
            corpus.projects.len(),
            repos.len()
        );
        write_json(&self.path(CORPUS_JSON), &corpus)?;
        Ok(vec![CORPUS_JSON])
    }

    fn mine(&mut self) -> Result<Vec<&'static str>> {
        let corpus: Corpus = read_json(&self.path(CORPUS_JSON))?;
        let scan = miner::mine_projects(&corpus.projects, &self.spec, self.resolver, self.cfg.snapshot);
        for e in scan.report.errors() {
            log::warn!("{}: {}", e.repo, e.message);
        }
        log::info!("{}: {} commit events", self.spec.id, scan.events.len());
        write_with(&self.path(EVENTS_CSV), |b| {
            miner::write_events_csv(&scan.events, b)
        })?;
        write_json(&self.path(MINE_REPORT_JSON), &scan.report)?;
        Ok(vec![EVENTS_CSV, MINE_REPORT_JSON])
    }

    fn features(&mut self) -> Result<Vec<&'static str>> {
        let events = miner::read_events_csv(open(&self.path(EVENTS_CSV))?)?;
        let table = features::compute_all(&events, &self.spec.id, self.cfg.snapshot)?;
        log::info!(
            "{}: {} candidate experts, {} authors without client-file commits",
            self.spec.id,
            table.vectors.len(),
            table.excluded.len()
        );
        write_with(&self.path(FEATURES_CSV), |b| {
            features::write_features_csv(&table.vectors, b)
        })?;
        Ok(vec![FEATURES_CSV])
    }

    fn preprocess(&mut self) -> Result<Vec<&'static str>> {
        let gt_path = self
            .cfg
            .ground_truth
            .as_deref()
            .ok_or_else(|| Error::Config("preprocessing needs ground truth".into()))?;
        let known: Vec<String> = self.cfg.library_specs()?.into_iter().map(|s| s.id).collect();
        let known: Vec<&str> = known.iter().map(String::as_str).collect();
        let all = learn::ingest_ground_truth(open(gt_path)?, &gt_path.display().to_string(), &known)?;
        let by_dev: BTreeMap<&str, &GroundTruthLabel> = all
            .iter()
            .filter(|l| l.library == self.spec.id)
            .map(|l| (l.developer.as_str(), l))
            .collect();

        let vectors = self.vectors()?;
        let labeled: Vec<&FeatureVector> = vectors
            .iter()
            .filter(|v| by_dev.contains_key(v.developer.as_str()))
            .collect();
        let unmatched = by_dev.len() - labeled.len();
        if unmatched > 0 {
            log::warn!(
                "{}: {unmatched} labeled developers are not candidates",
                self.spec.id
            );
        }
        if labeled.len() < 2 {
            return Err(Error::invalid(format!(
                "{} labeled candidates for {}; need at least 2",
                labeled.len(),
                self.spec.id
            )));
        }
        let labels: Vec<GroundTruthLabel> = labeled
            .iter()
            .map(|v| by_dev[v.developer.as_str()].clone())
            .collect();
        let owned: Vec<FeatureVector> = labeled.into_iter().cloned().collect();
        let cleaned = preprocess::clean(
            &FeatureMatrix::from_vectors(&owned),
            self.cfg.correlation_threshold,
        )?;
        let standardized = preprocess::standardize(&cleaned)?;

        write_with(&self.path(CLEAN_CSV), |b| {
            preprocess::write_clean_csv(&cleaned, b)
        })?;
        write_json(&self.path(TRANSFORM_JSON), &standardized.log)?;
        write_json(&self.path(LABELS_JSON), &labels)?;
        Ok(vec![CLEAN_CSV, TRANSFORM_JSON, LABELS_JSON])
    }

    fn train(&mut self) -> Result<Vec<&'static str>> {
        let seed = self.seed()?;
        let log: TransformLog = read_json(&self.path(TRANSFORM_JSON))?;
        let matrix = preprocess::read_clean_csv(open(&self.path(CLEAN_CSV))?, log)?;
        let labels = self.labels()?;
        if labels.len() != matrix.n_rows() {
            return Err(Error::invalid("labels and cleaned features are misaligned"));
        }
        let rows = matrix.dense_active()?;
        let scheme = self.cfg.scheme;
        let y: Vec<usize> = labels.iter().map(|l| scheme.class_of(l)).collect();
        let mut class_counts = vec![0; scheme.n_classes()];
        y.iter().for_each(|&c| class_counts[c] += 1);
        let cv = self.cfg.cv.to_cv();
        let classifiers = self
            .cfg
            .classifiers
            .iter()
            .map(|&kind| learn::train_and_evaluate(&learn::default_grid(kind), scheme, &rows, &y, &cv, seed))
            .collect::<Result<Vec<_>>>()?;
        let report = SupervisedReport {
            library: self.spec.id.clone(),
            scheme,
            class_counts,
            baseline: learn::baseline_report(&y, scheme)?,
            classifiers,
        };
        write_json(&self.path(SUPERVISED_JSON), &report)?;
        Ok(vec![SUPERVISED_JSON])
    }

    fn cluster(&mut self) -> Result<Vec<&'static str>> {
        let seed = self.seed()?;
        let log: TransformLog = read_json(&self.path(TRANSFORM_JSON))?;
        let vectors = self.vectors()?;
        let labels = self.labels()?;
        let labeled = labeled_vectors(&vectors, &labels)?;
        let rows: Vec<Vec<f64>> = labeled.iter().map(|v| log.apply(v)).collect();
        let developers: Vec<String> = labels.iter().map(|l| l.developer.clone()).collect();
        let ternary: Vec<_> = labels.iter().map(|l| Some(l.ternary)).collect();
        let columns = log.active_columns();
        let input = ClusterInput {
            library: &self.spec.id,
            developers: &developers,
            columns: &columns,
            rows: &rows,
            labels: &ternary,
            transform: &log,
        };
        let config = SelectionConfig {
            k_max: self.cfg.k_max,
            restarts: self.cfg.restarts,
            threshold: self.cfg.threshold,
        };
        let model = cluster::select_expert_cluster(&input, &config, seed)?;
        let verdicts = cluster::predict_all(&model, &vectors)?;
        write_json(&self.path(CLUSTERS_JSON), &model)?;
        write_with(&self.path(VERDICTS_CSV), |b| {
            cluster::write_verdicts_csv(&verdicts, b)
        })?;
        Ok(vec![CLUSTERS_JSON, VERDICTS_CSV])
    }

    fn stats(&mut self) -> Result<Vec<&'static str>> {
        let model: ClusterModel = read_json(&self.path(CLUSTERS_JSON))?;
        let vectors = self.vectors()?;
        let labels = self.labels()?;
        let labeled = labeled_vectors(&vectors, &labels)?;
        // Effect sizes are read on the original scale: imputed, not transformed.
        let raw = TransformLog {
            imputation: model.transform.imputation.clone(),
            dropped: model.transform.dropped.clone(),
            ..TransformLog::default()
        };
        let values: Vec<Vec<f64>> = labeled.iter().map(|v| raw.apply(v)).collect();
        let effects = stats::closest_median_comparison(&model, &model.columns, &values)?;
        let ternary: Vec<_> = labels.iter().map(|l| Some(l.ternary)).collect();
        let quintiles = model
            .columns
            .iter()
            .enumerate()
            .map(|(j, name)| {
                let col: Vec<f64> = values.iter().map(|r| r[j]).collect();
                stats::quintile_expert_fractions(name, &col, &ternary)
            })
            .collect::<Result<Vec<_>>>()?;
        write_json(&self.path(EFFECTS_JSON), &effects)?;
        write_with(&self.path(QUINTILES_CSV), |b| {
            stats::write_quintiles_csv(&quintiles, b)
        })?;
        Ok(vec![EFFECTS_JSON, QUINTILES_CSV])
    }
}

/// Feature vectors of the labeled developers, in label order.
fn labeled_vectors<'v>(
    vectors: &'v [FeatureVector],
    labels: &[GroundTruthLabel],
) -> Result<Vec<&'v FeatureVector>> {
    let by_dev: BTreeMap<&str, &FeatureVector> = vectors.iter().map(|v| (v.developer.as_str(), v)).collect();
    labels
        .iter()
        .map(|l| {
            by_dev.get(l.developer.as_str()).copied().ok_or_else(|| {
                Error::invalid(format!("labeled developer {} has no feature vector", l.developer))
            })
        })
        .collect()
}

fn stage_inputs(stage: Stage) -> &'static [&'static str] {
    match stage {
        Stage::Corpus => &[],
        Stage::Mine => &[CORPUS_JSON],
        Stage::Features => &[EVENTS_CSV],
        Stage::Preprocess => &[FEATURES_CSV],
        Stage::Train => &[CLEAN_CSV, TRANSFORM_JSON, LABELS_JSON],
        Stage::Cluster => &[FEATURES_CSV, TRANSFORM_JSON, LABELS_JSON],
        Stage::Stats => &[CLUSTERS_JSON, FEATURES_CSV, LABELS_JSON],
    }
}

fn stage_key(ctx: &Ctx<'_>, stage: Stage) -> Result<String> {
    let mut inputs = BTreeMap::new();
    for name in stage_inputs(stage) {
        let path = ctx.path(name);
        inputs.insert(
            *name,
            hash_file(&path).map_err(|_| {
                Error::invalid(format!(
                    "{} is missing; run the stage that produces it first",
                    path.display()
                ))
            })?,
        );
    }
    let doc = json!({ "stage": stage, "config": ctx.stage_config(stage), "inputs": inputs });
    Ok(sha256_hex(&serde_json::to_vec(&doc)?))
}

fn still_valid(dir: &Path, record: &StageRecord) -> bool {
    !record.artifacts.is_empty()
        && record
            .artifacts
            .iter()
            .all(|(name, hash)| hash_file(&dir.join(name)).is_ok_and(|h| &h == hash))
}

fn run_library(
    cfg: &PipelineConfig,
    spec: LibrarySpec,
    opts: &RunOptions,
    resolver: &IdentityResolver,
    repos: &mut Option<Vec<RepoRef>>,
) -> Result<(LibraryOutcome, Checkpoint)> {
    let dir = cfg.output_dir.join(library_dir_name(&spec.id));
    fs::create_dir_all(&dir)?;
    let cp_path = dir.join(CHECKPOINT_JSON);
    let mut checkpoint: Checkpoint = if cp_path.exists() {
        read_json(&cp_path).unwrap_or_default()
    } else {
        Checkpoint::default()
    };
    let library = spec.id.clone();
    let mut ctx = Ctx {
        cfg,
        spec,
        dir: dir.clone(),
        resolver,
        repos,
    };
    let mut stages = Vec::new();
    for stage in Stage::ALL.into_iter().filter(|&s| opts.wants(s)) {
        if stage.needs_labels() && !cfg.supervised() {
            let reason = "no ground truth configured".to_string();
            log::warn!("{library}: skipping {stage}: {reason}");
            stages.push((stage, StageStatus::Skipped(reason)));
            continue;
        }
        let fail = |e: Error| Error::Stage {
            stage: stage.name().into(),
            library: library.clone(),
            source: Box::new(e),
        };
        let key = stage_key(&ctx, stage).map_err(fail)?;
        let reusable = opts.resume
            && opts.force != Some(stage)
            && checkpoint
                .stages
                .get(&stage)
                .is_some_and(|r| r.key == key && still_valid(&dir, r));
        if reusable {
            log::info!("{library}: {stage} unchanged, reusing checkpoint");
            stages.push((stage, StageStatus::Resumed));
            continue;
        }
        log::info!("{library}: running {stage}");
        checkpoint.stages.remove(&stage);
        let produced = ctx.execute(stage).map_err(fail)?;
        let mut artifacts = BTreeMap::new();
        for name in produced {
            artifacts.insert(name.to_string(), hash_file(&dir.join(name))?);
        }
        checkpoint.stages.insert(stage, StageRecord { key, artifacts });
        write_json(&cp_path, &checkpoint)?;
        stages.push((stage, StageStatus::Ran));
    }
    Ok((LibraryOutcome { library, dir, stages }, checkpoint))
}

pub fn identity_resolver(mode: IdentityMode) -> IdentityResolver {
    match mode {
        IdentityMode::Offline => IdentityResolver::offline(),
        IdentityMode::Remote => IdentityResolver::remote(RemoteLookup(HostingApi::from_env())),
    }
}

/// Run the pipeline for every configured library, then write the manifest
/// (and, with several libraries, the cross-library expert intersection).
pub fn run(cfg: &PipelineConfig, opts: &RunOptions) -> Result<RunSummary> {
    cfg.validate()?;
    let specs = cfg.library_specs()?;
    fs::create_dir_all(&cfg.output_dir)?;
    let resolver = identity_resolver(cfg.identity);
    let mut repos = None;
    let mut outcomes = Vec::new();
    let mut libraries = BTreeMap::new();
    for spec in specs {
        let (outcome, checkpoint) = run_library(cfg, spec, opts, &resolver, &mut repos)?;
        let mut artifacts = BTreeMap::new();
        let mut keys = BTreeMap::new();
        for (stage, record) in &checkpoint.stages {
            if opts.wants(*stage) {
                keys.insert(*stage, record.key.clone());
                artifacts.extend(record.artifacts.clone());
            }
        }
        libraries.insert(
            outcome.library.clone(),
            LibraryManifest {
                dir: library_dir_name(&outcome.library),
                stages: keys,
                artifacts,
            },
        );
        outcomes.push(outcome);
    }

    let mut intersection = None;
    let mut intersection_hash = None;
    let clustered: Vec<&LibraryOutcome> = outcomes
        .iter()
        .filter(|o| o.dir.join(VERDICTS_CSV).exists() && opts.wants(Stage::Cluster))
        .collect();
    if outcomes.len() >= 2 && clustered.len() == outcomes.len() {
        let mut rows: Vec<VerdictRow> = Vec::new();
        for o in &clustered {
            rows.extend(cluster::read_verdicts_csv(open(&o.dir.join(VERDICTS_CSV))?)?);
        }
        let doc = Intersection {
            libraries: outcomes.iter().map(|o| o.library.clone()).collect(),
            developers: cluster::intersect_experts(&rows),
        };
        let path = cfg.output_dir.join(INTERSECTION_JSON);
        write_json(&path, &doc)?;
        intersection_hash = Some(hash_file(&path)?);
        intersection = Some(path);
    }

    let manifest = Manifest {
        seed: cfg.seed,
        config: cfg.clone(),
        libraries,
        intersection: intersection_hash,
    };
    let manifest_path = cfg.output_dir.join(MANIFEST_JSON);
    write_json(&manifest_path, &manifest)?;
    Ok(RunSummary {
        libraries: outcomes,
        manifest: manifest_path,
        intersection,
    })
}

/// Load a cluster model and flag one developer using the `features.csv`
/// written next to it.
pub fn predict_developer(model_path: &Path, developer: &str) -> Result<VerdictRow> {
    let model: ClusterModel = read_json(model_path)?;
    let features = model_path.with_file_name(FEATURES_CSV);
    let vectors = features::read_features_csv(open(&features)?)?;
    let wanted = miner::normalize_email(developer);
    let v = vectors
        .iter()
        .find(|v| v.developer == developer || v.developer == wanted)
        .ok_or_else(|| {
            Error::invalid(format!(
                "{developer} is not a candidate expert for {}",
                model.library
            ))
        })?;
    let p = model.predict_expert(v)?;
    Ok(VerdictRow {
        developer: v.developer.clone(),
        library: model.library.clone(),
        verdict: p.verdict,
        distance_margin: p.margin,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_names_round_trip() {
        for s in Stage::ALL {
            assert_eq!(s.name().parse::<Stage>().unwrap(), s);
        }
        assert!("bogus".parse::<Stage>().is_err());
        assert!(Stage::Train.needs_labels() && !Stage::Features.needs_labels());
        for s in Stage::ALL {
            assert!(s.dependencies().iter().all(|d| *d < s));
        }
        let cluster_only = RunOptions::stage(Stage::Cluster);
        assert!(cluster_only.wants(Stage::Preprocess) && !cluster_only.wants(Stage::Train));
        assert!(RunOptions::default().wants(Stage::Train));
    }

    #[test]
    fn dir_names_are_sanitized() {
        assert_eq!(library_dir_name("node-mongodb"), "node-mongodb");
        assert_eq!(library_dir_name("@scope/pkg"), "_scope_pkg");
    }

    #[test]
    fn checkpoint_serializes_with_stage_keys() {
        let mut cp = Checkpoint::default();
        cp.stages.insert(
            Stage::Mine,
            StageRecord {
                key: "k".into(),
                artifacts: BTreeMap::new(),
            },
        );
        let text = serde_json::to_string(&cp).unwrap();
        assert!(text.contains("\"mine\""));
        assert_eq!(serde_json::from_str::<Checkpoint>(&text).unwrap(), cp);
    }
}

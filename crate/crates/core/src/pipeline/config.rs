use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::corpus::LibrarySpec;
use crate::error::{Error, Result};
use crate::learn::{ClassifierKind, CvConfig, Scheme, SmoteConfig};
use crate::preprocess::CORRELATION_THRESHOLD;

/// A target library: either a built-in id alone, or a full definition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LibraryConfig {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest_name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repo_slug: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub import_patterns: Option<Vec<String>>,
}

impl LibraryConfig {
    pub fn builtin(id: &str) -> Self {
        LibraryConfig {
            id: id.to_string(),
            manifest_name: None,
            repo_slug: None,
            import_patterns: None,
        }
    }

    pub fn spec(&self) -> Result<LibrarySpec> {
        if self.manifest_name.is_none() && self.import_patterns.is_none() {
            if let Some(spec) = LibrarySpec::builtin(&self.id) {
                return Ok(spec);
            }
        }
        let manifest = self.manifest_name.clone().unwrap_or_else(|| self.id.clone());
        let patterns: Vec<String> = self
            .import_patterns
            .clone()
            .unwrap_or_else(|| vec![manifest.clone()]);
        let refs: Vec<&str> = patterns.iter().map(String::as_str).collect();
        LibrarySpec::new(
            self.id.clone(),
            manifest,
            self.repo_slug.clone().unwrap_or_default(),
            &refs,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RepoSource {
    /// Every git repository directly under `path` (or `path/owner/name`).
    Directory { path: PathBuf },
    /// `owner/name` lines in `path`, cloned under `root`.
    List { path: PathBuf, root: PathBuf },
    /// Most-starred repositories for `language`, cloned into `clone_dir`.
    Remote {
        language: String,
        limit: usize,
        clone_dir: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdentityMode {
    #[default]
    Offline,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CvSettings {
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default = "default_true")]
    pub smote: bool,
    #[serde(default = "default_knn")]
    pub smote_knn: usize,
    #[serde(default = "default_percent")]
    pub smote_percent: f64,
}

impl Default for CvSettings {
    fn default() -> Self {
        CvSettings {
            folds: default_folds(),
            smote: true,
            smote_knn: default_knn(),
            smote_percent: default_percent(),
        }
    }
}

impl CvSettings {
    pub fn to_cv(&self) -> CvConfig {
        CvConfig {
            folds: self.folds,
            smote: self.smote.then_some(SmoteConfig {
                knn: self.smote_knn,
                percent: self.smote_percent,
            }),
        }
    }
}

fn default_folds() -> usize {
    crate::learn::DEFAULT_FOLDS
}
fn default_true() -> bool {
    true
}
fn default_knn() -> usize {
    crate::learn::smote::DEFAULT_KNN
}
fn default_percent() -> f64 {
    crate::learn::smote::DEFAULT_PERCENT
}
fn default_scheme() -> Scheme {
    Scheme::Ternary
}
fn default_classifiers() -> Vec<ClassifierKind> {
    vec![ClassifierKind::RandomForest, ClassifierKind::Svm]
}
fn default_k_max() -> usize {
    8
}
fn default_restarts() -> usize {
    crate::cluster::DEFAULT_RESTARTS
}
fn default_output() -> PathBuf {
    PathBuf::from("out")
}
fn default_correlation() -> f64 {
    CORRELATION_THRESHOLD
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(rename = "library")]
    pub libraries: Vec<LibraryConfig>,
    pub source: RepoSource,
    pub snapshot: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<PathBuf>,
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
    #[serde(default = "default_classifiers")]
    pub classifiers: Vec<ClassifierKind>,
    #[serde(default = "default_k_max")]
    pub k_max: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub identity: IdentityMode,
    #[serde(default = "default_correlation")]
    pub correlation_threshold: f64,
    #[serde(default)]
    pub cv: CvSettings,
}

impl PipelineConfig {
    /// A config with defaults for everything but the essentials.
    pub fn new(libraries: Vec<LibraryConfig>, source: RepoSource, snapshot: DateTime<Utc>) -> Self {
        PipelineConfig {
            libraries,
            source,
            snapshot,
            ground_truth: None,
            scheme: default_scheme(),
            classifiers: default_classifiers(),
            k_max: default_k_max(),
            threshold: None,
            restarts: default_restarts(),
            seed: None,
            output_dir: default_output(),
            identity: IdentityMode::Offline,
            correlation_threshold: default_correlation(),
            cv: CvSettings::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Load a TOML file; relative paths inside resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match &mut self.source {
            RepoSource::Directory { path } => fix(path),
            RepoSource::List { path, root } => {
                fix(path);
                fix(root);
            }
            RepoSource::Remote { clone_dir, .. } => fix(clone_dir),
        }
        if let Some(gt) = &mut self.ground_truth {
            fix(gt);
        }
        fix(&mut self.output_dir);
    }

    pub fn library_specs(&self) -> Result<Vec<LibrarySpec>> {
        self.libraries.iter().map(LibraryConfig::spec).collect()
    }

    /// Whether learning and clustering will run (they need labels).
    pub fn supervised(&self) -> bool {
        self.ground_truth.is_some()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.libraries.is_empty() {
            return bad("at least one [[library]] is required".into());
        }
        let mut ids = BTreeSet::new();
        for spec in self.library_specs()? {
            if !ids.insert(spec.id.clone()) {
                return bad(format!("library `{}` listed twice", spec.id));
            }
        }
        if self.supervised() && self.seed.is_none() {
            return bad("a seed is required when ground truth enables learning and clustering".into());
        }
        if self.k_max < 2 {
            return bad("k_max must be at least 2".into());
        }
        if let Some(t) = self.threshold {
            if !(t > 0.0 && t <= 1.0) {
                return bad(format!("threshold {t} must lie in (0, 1]"));
            }
        }
        if self.restarts == 0 {
            return bad("restarts must be at least 1".into());
        }
        if !(self.correlation_threshold > 0.0 && self.correlation_threshold <= 1.0) {
            return bad("correlation_threshold must lie in (0, 1]".into());
        }
        if self.cv.folds < 2 {
            return bad("cv.folds must be at least 2".into());
        }
        if self.cv.smote && (self.cv.smote_percent.is_nan() || self.cv.smote_percent <= 0.0) {
            return bad("cv.smote_percent must be positive".into());
        }
        if self.classifiers.is_empty() {
            return bad("list at least one classifier".into());
        }
        if let RepoSource::Remote { limit, .. } = self.source {
            if limit == 0 {
                return bad("remote source limit must be positive".into());
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
snapshot = "2018-01-01T00:00:00Z"
seed = 7
ground_truth = "gt.csv"
output_dir = "out"

[source]
kind = "directory"
path = "repos"

[[library]]
id = "react"

[[library]]
id = "vue"
import_patterns = ["vue"]

[cv]
folds = 5
"#;

    #[test]
    fn parses_and_resolves() {
        let mut cfg = PipelineConfig::from_toml(SAMPLE).unwrap();
        cfg.resolve_paths(Path::new("/work"));
        cfg.validate().unwrap();
        assert_eq!(cfg.ground_truth, Some(PathBuf::from("/work/gt.csv")));
        assert_eq!(
            cfg.source,
            RepoSource::Directory {
                path: "/work/repos".into()
            }
        );
        let specs = cfg.library_specs().unwrap();
        assert_eq!(specs[0].manifest_name, "react");
        assert_eq!(specs[1].manifest_name, "vue");
        assert_eq!(cfg.k_max, 8);
        assert_eq!(cfg.cv.smote_knn, 3);
    }

    #[test]
    fn seed_required_with_ground_truth() {
        let text = SAMPLE.replace("seed = 7\n", "");
        let cfg = PipelineConfig::from_toml(&text).unwrap();
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = format!("{SAMPLE}\nbogus = 1\n");
        assert!(PipelineConfig::from_toml(&text).is_err());
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = PipelineConfig::from_toml(SAMPLE).unwrap();
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(PipelineConfig::from_toml(&text).unwrap(), cfg);
    }
}

//! Supervised track: labels, balancing, cross-validated classifiers and
//! their metrics.

pub mod folds;
pub mod forest;
pub mod labels;
pub mod metrics;
pub mod smote;
pub mod svm;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rng::{child, substream};

pub use folds::stratified_folds;
pub use forest::{FeaturesPerSplit, Forest, ForestParams};
pub use labels::{ingest_ground_truth, GroundTruthLabel, Scheme, Ternary};
pub use metrics::{evaluate, Metrics};
pub use smote::{smote, SmoteConfig};
pub use svm::{GammaRule, Kernel, Svm, SvmParams};

pub const DEFAULT_FOLDS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    RandomForest,
    Svm,
    ZeroR,
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClassifierKind::RandomForest => "rf",
            ClassifierKind::Svm => "svm",
            ClassifierKind::ZeroR => "zeror",
        })
    }
}

impl FromStr for ClassifierKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rf" | "random_forest" => Ok(ClassifierKind::RandomForest),
            "svm" => Ok(ClassifierKind::Svm),
            "zeror" | "zero_r" => Ok(ClassifierKind::ZeroR),
            _ => Err(Error::invalid(format!(
                "unknown classifier `{s}` (rf, svm, zeror)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "classifier", rename_all = "snake_case")]
pub enum Hyperparams {
    RandomForest(ForestParams),
    Svm(SvmParams),
    ZeroR,
}

impl Hyperparams {
    pub fn kind(&self) -> ClassifierKind {
        match self {
            Hyperparams::RandomForest(_) => ClassifierKind::RandomForest,
            Hyperparams::Svm(_) => ClassifierKind::Svm,
            Hyperparams::ZeroR => ClassifierKind::ZeroR,
        }
    }
}

/// The search space used when the configuration does not supply one.
pub fn default_grid(kind: ClassifierKind) -> Vec<Hyperparams> {
    match kind {
        ClassifierKind::RandomForest => {
            let mut grid = Vec::new();
            for trees in [100, 300] {
                for max_depth in [None, Some(8)] {
                    for features_per_split in [FeaturesPerSplit::Sqrt, FeaturesPerSplit::Log2] {
                        grid.push(Hyperparams::RandomForest(ForestParams {
                            trees,
                            max_depth,
                            features_per_split,
                            bootstrap: true,
                        }));
                    }
                }
            }
            grid
        }
        ClassifierKind::Svm => {
            let costs = [0.1, 1.0, 10.0, 100.0];
            let mut grid: Vec<Hyperparams> = costs
                .iter()
                .map(|&cost| {
                    Hyperparams::Svm(SvmParams {
                        kernel: Kernel::Linear,
                        cost,
                        ..SvmParams::default()
                    })
                })
                .collect();
            for cost in costs {
                for gamma in [GammaRule::InverseWidth, GammaRule::InverseWidthVariance] {
                    grid.push(Hyperparams::Svm(SvmParams {
                        kernel: Kernel::Rbf,
                        cost,
                        gamma,
                        ..SvmParams::default()
                    }));
                }
            }
            grid
        }
        ClassifierKind::ZeroR => vec![Hyperparams::ZeroR],
    }
}

/// Modal class, ties to the lowest class index.
pub fn zero_r(labels: &[usize], n_classes: usize) -> Result<usize> {
    if labels.is_empty() {
        return Err(Error::invalid("ZeroR needs at least one label"));
    }
    let mut counts = vec![0usize; n_classes];
    for &l in labels {
        counts[l] += 1;
    }
    let mut best = 0;
    for (c, &n) in counts.iter().enumerate() {
        if n > counts[best] {
            best = c;
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Model {
    RandomForest(Forest),
    Svm(Svm),
    ZeroR { class: usize, n_classes: usize },
}

impl Model {
    pub fn train(
        params: &Hyperparams,
        rows: &[Vec<f64>],
        labels: &[usize],
        n_classes: usize,
        rng: &mut crate::rng::StageRng,
    ) -> Result<Model> {
        Ok(match params {
            Hyperparams::RandomForest(p) => {
                Model::RandomForest(Forest::train(rows, labels, n_classes, *p, rng)?)
            }
            Hyperparams::Svm(p) => Model::Svm(Svm::train(rows, labels, n_classes, *p)?),
            Hyperparams::ZeroR => Model::ZeroR {
                class: zero_r(labels, n_classes)?,
                n_classes,
            },
        })
    }

    pub fn scores(&self, row: &[f64]) -> Vec<f64> {
        match self {
            Model::RandomForest(f) => f.scores(row),
            Model::Svm(s) => s.scores(row),
            Model::ZeroR { class, n_classes } => (0..*n_classes).map(|c| f64::from(c == *class)).collect(),
        }
    }

    pub fn predict(&self, row: &[f64]) -> usize {
        forest::argmax(&self.scores(row))
    }
}

/// Provenance hash of a row: originals are keyed by their index,
/// synthetic rows by fold and sequence number.
pub fn row_hash(tag: &str, values: &[f64]) -> String {
    let mut h = Sha256::new();
    h.update(tag.as_bytes());
    for v in values {
        h.update(v.to_bits().to_le_bytes());
    }
    hex::encode(&h.finalize()[..12])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticRecord {
    pub hash: String,
    pub class: usize,
    /// Original row indices the point was interpolated from.
    pub base: usize,
    pub neighbor: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldAudit {
    pub fold: usize,
    pub test: Vec<String>,
    pub train: Vec<String>,
    pub synthetic: Vec<SyntheticRecord>,
}

/// Check that no synthetic row reached an evaluation fold and that every
/// synthetic row was built only from that fold's training rows.
pub fn verify_audit(audits: &[FoldAudit], rows: &[Vec<f64>], folds: &[usize]) -> Result<()> {
    for a in audits {
        let test: BTreeSet<&String> = a.test.iter().collect();
        let expected: BTreeSet<String> = (0..rows.len())
            .filter(|&i| folds[i] == a.fold)
            .map(|i| row_hash(&format!("orig/{i}"), &rows[i]))
            .collect();
        if test.len() != expected.len() || !expected.iter().all(|h| test.contains(h)) {
            return Err(Error::contract(format!(
                "fold {} evaluated rows outside its partition",
                a.fold
            )));
        }
        for s in &a.synthetic {
            if test.contains(&s.hash) {
                return Err(Error::contract(format!(
                    "synthetic row {} evaluated in fold {}",
                    s.hash, a.fold
                )));
            }
            if folds[s.base] == a.fold || folds[s.neighbor] == a.fold {
                return Err(Error::contract(format!(
                    "synthetic row {} in fold {} derived from a test row",
                    s.hash, a.fold
                )));
            }
        }
        if a.train.iter().any(|h| test.contains(h)) {
            return Err(Error::contract(format!("fold {} trains on a test row", a.fold)));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    pub folds: usize,
    /// Oversample the smallest training class in each fold; `None` disables.
    pub smote: Option<SmoteConfig>,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            folds: DEFAULT_FOLDS,
            smote: Some(SmoteConfig::default()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvOutcome {
    pub predicted: Vec<usize>,
    pub scores: Vec<Vec<f64>>,
    pub fold_f: Vec<f64>,
    pub audits: Vec<FoldAudit>,
}

impl CvOutcome {
    pub fn mean_f(&self) -> f64 {
        self.fold_f.iter().sum::<f64>() / self.fold_f.len() as f64
    }
}

/// Smallest class present in `labels`, ties to the lowest index.
pub fn minority_class(labels: &[usize], n_classes: usize) -> Option<usize> {
    let mut counts = vec![0usize; n_classes];
    for &l in labels {
        counts[l] += 1;
    }
    (0..n_classes)
        .filter(|&c| counts[c] > 0)
        .min_by_key(|&c| (counts[c], c))
}

struct FoldResult {
    test: Vec<usize>,
    predicted: Vec<usize>,
    scores: Vec<Vec<f64>>,
    f: f64,
    audit: FoldAudit,
}

#[allow(clippy::too_many_arguments)]
fn run_fold(
    params: &Hyperparams,
    rows: &[Vec<f64>],
    labels: &[usize],
    n_classes: usize,
    folds: &[usize],
    fold: usize,
    config: &CvConfig,
    seed: u64,
) -> Result<FoldResult> {
    let test: Vec<usize> = (0..rows.len()).filter(|&i| folds[i] == fold).collect();
    let train: Vec<usize> = (0..rows.len()).filter(|&i| folds[i] != fold).collect();
    let mut train_rows: Vec<Vec<f64>> = train.iter().map(|&i| rows[i].clone()).collect();
    let mut train_labels: Vec<usize> = train.iter().map(|&i| labels[i]).collect();
    let mut audit = FoldAudit {
        fold,
        test: test
            .iter()
            .map(|&i| row_hash(&format!("orig/{i}"), &rows[i]))
            .collect(),
        train: train
            .iter()
            .map(|&i| row_hash(&format!("orig/{i}"), &rows[i]))
            .collect(),
        synthetic: Vec::new(),
    };

    if let Some(smote_cfg) = config.smote {
        if let Some(class) = minority_class(&train_labels, n_classes) {
            let members: Vec<usize> = train.iter().copied().filter(|&i| labels[i] == class).collect();
            let minority: Vec<Vec<f64>> = members.iter().map(|&i| rows[i].clone()).collect();
            let synthetic = smote::smote(&minority, smote_cfg, &mut child(seed, "smote", fold))?;
            for (n, s) in synthetic.into_iter().enumerate() {
                audit.synthetic.push(SyntheticRecord {
                    hash: row_hash(&format!("syn/{fold}/{n}"), &s.values),
                    class,
                    base: members[s.base],
                    neighbor: members[s.neighbor],
                });
                train_rows.push(s.values);
                train_labels.push(class);
            }
        }
    }

    let model = Model::train(
        params,
        &train_rows,
        &train_labels,
        n_classes,
        &mut child(seed, "model", fold),
    )?;
    let scores: Vec<Vec<f64>> = test.iter().map(|&i| model.scores(&rows[i])).collect();
    let predicted: Vec<usize> = scores.iter().map(|s| forest::argmax(s)).collect();
    let truth: Vec<usize> = test.iter().map(|&i| labels[i]).collect();
    let f = evaluate(&predicted, &truth, &scores, n_classes)?.f_measure;
    Ok(FoldResult {
        test,
        predicted,
        scores,
        f,
        audit,
    })
}

/// Cross-validate one hyperparameter point over a fixed fold assignment.
/// Folds run in parallel and are reduced by fold index.
pub fn cross_validate(
    params: &Hyperparams,
    rows: &[Vec<f64>],
    labels: &[usize],
    n_classes: usize,
    folds: &[usize],
    config: &CvConfig,
    seed: u64,
) -> Result<CvOutcome> {
    if rows.len() != labels.len() || folds.len() != labels.len() {
        return Err(Error::invalid("rows, labels and folds must align"));
    }
    let k = folds.iter().copied().max().map_or(0, |m| m + 1);
    let results: Vec<FoldResult> = (0..k)
        .into_par_iter()
        .map(|f| run_fold(params, rows, labels, n_classes, folds, f, config, seed))
        .collect::<Result<_>>()?;
    let mut predicted = vec![0; rows.len()];
    let mut scores = vec![Vec::new(); rows.len()];
    let mut fold_f = Vec::with_capacity(k);
    let mut audits = Vec::with_capacity(k);
    for r in results {
        for (pos, &i) in r.test.iter().enumerate() {
            predicted[i] = r.predicted[pos];
            scores[i] = r.scores[pos].clone();
        }
        fold_f.push(r.f);
        audits.push(r.audit);
    }
    Ok(CvOutcome {
        predicted,
        scores,
        fold_f,
        audits,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub params: Hyperparams,
    pub mean_f: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearch {
    pub points: Vec<GridPoint>,
    pub best: usize,
}

/// Evaluate every grid point on the same folds and random streams; the
/// highest mean fold F-measure wins, earlier points winning ties.
pub fn grid_search(
    grid: &[Hyperparams],
    rows: &[Vec<f64>],
    labels: &[usize],
    n_classes: usize,
    folds: &[usize],
    config: &CvConfig,
    seed: u64,
) -> Result<GridSearch> {
    if grid.is_empty() {
        return Err(Error::invalid("empty hyperparameter grid"));
    }
    let points: Vec<GridPoint> = grid
        .par_iter()
        .map(|p| {
            let cv = cross_validate(p, rows, labels, n_classes, folds, config, seed)?;
            Ok(GridPoint {
                params: *p,
                mean_f: cv.mean_f(),
            })
        })
        .collect::<Result<_>>()?;
    let mut best = 0;
    for (i, p) in points.iter().enumerate() {
        if p.mean_f > points[best].mean_f {
            best = i;
        }
    }
    Ok(GridSearch { points, best })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierReport {
    pub classifier: ClassifierKind,
    pub scheme: Scheme,
    pub classes: Vec<String>,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub f_measure: f64,
    pub kappa: f64,
    pub auc: f64,
    pub confusion: Vec<Vec<u64>>,
    pub hyperparams: Hyperparams,
    pub grid: Vec<GridPoint>,
    pub folds: Vec<usize>,
    pub fold_audit: Vec<FoldAudit>,
}

impl ClassifierReport {
    fn new(
        scheme: Scheme,
        m: Metrics,
        hyperparams: Hyperparams,
        grid: Vec<GridPoint>,
        folds: Vec<usize>,
        fold_audit: Vec<FoldAudit>,
    ) -> Self {
        ClassifierReport {
            classifier: hyperparams.kind(),
            scheme,
            classes: scheme.class_names().iter().map(|s| s.to_string()).collect(),
            precision: m.precision,
            recall: m.recall,
            f_measure: m.f_measure,
            kappa: m.kappa,
            auc: m.auc,
            confusion: m.confusion,
            hyperparams,
            grid,
            folds,
            fold_audit,
        }
    }
}

/// The majority-class baseline evaluated on the full label set.
pub fn baseline_report(labels: &[usize], scheme: Scheme) -> Result<ClassifierReport> {
    let n = scheme.n_classes();
    let class = zero_r(labels, n)?;
    let predicted = vec![class; labels.len()];
    let m = evaluate(&predicted, labels, &metrics::one_hot(&predicted, n), n)?;
    Ok(ClassifierReport::new(
        scheme,
        m,
        Hyperparams::ZeroR,
        Vec::new(),
        Vec::new(),
        Vec::new(),
    ))
}

/// Grid-search `grid`, then report pooled cross-validated predictions of
/// the winning point. Folds and every stochastic step derive from `seed`.
pub fn train_and_evaluate(
    grid: &[Hyperparams],
    scheme: Scheme,
    rows: &[Vec<f64>],
    labels: &[usize],
    config: &CvConfig,
    seed: u64,
) -> Result<ClassifierReport> {
    let n = scheme.n_classes();
    let folds = stratified_folds(labels, config.folds, &mut substream(seed, "folds"))?;
    let search = grid_search(grid, rows, labels, n, &folds, config, seed)?;
    let best = search.points[search.best].params;
    let cv = cross_validate(&best, rows, labels, n, &folds, config, seed)?;
    verify_audit(&cv.audits, rows, &folds)?;
    let m = evaluate(&cv.predicted, labels, &cv.scores, n)?;
    Ok(ClassifierReport::new(
        scheme,
        m,
        best,
        search.points,
        folds,
        cv.audits,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupervisedReport {
    pub library: String,
    pub scheme: Scheme,
    pub class_counts: Vec<usize>,
    pub baseline: ClassifierReport,
    pub classifiers: Vec<ClassifierReport>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn rings(seed: u64, per_class: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut rng = substream(seed, "rings");
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for class in 0..3 {
            for _ in 0..per_class {
                let r = class as f64 + rng.random_range(0.1..0.8);
                let t = rng.random_range(0.0..std::f64::consts::TAU);
                rows.push(vec![r * t.cos(), r * t.sin()]);
                labels.push(class);
            }
        }
        (rows, labels)
    }

    fn small_forest(depth: Option<usize>) -> Hyperparams {
        Hyperparams::RandomForest(ForestParams {
            trees: 25,
            max_depth: depth,
            ..ForestParams::default()
        })
    }

    #[test]
    fn zero_r_ties_and_majority() {
        assert_eq!(zero_r(&[0, 2, 2], 3).unwrap(), 2);
        assert_eq!(zero_r(&[0, 2], 3).unwrap(), 0);
        assert!(zero_r(&[], 3).is_err());
    }

    #[test]
    fn forest_beats_majority_on_rings() {
        let (rows, labels) = rings(4, 40);
        let folds = stratified_folds(&labels, 5, &mut substream(4, "folds")).unwrap();
        let cfg = CvConfig::default();
        let rf = cross_validate(&small_forest(None), &rows, &labels, 3, &folds, &cfg, 4).unwrap();
        let zr = cross_validate(&Hyperparams::ZeroR, &rows, &labels, 3, &folds, &cfg, 4).unwrap();
        let acc = |p: &[usize]| p.iter().zip(&labels).filter(|(a, b)| a == b).count();
        assert!(acc(&rf.predicted) > acc(&zr.predicted));
        verify_audit(&rf.audits, &rows, &folds).unwrap();
        assert!(rf.audits.iter().all(|a| !a.synthetic.is_empty()));
    }

    #[test]
    fn grid_prefers_strong_point_and_first_on_ties() {
        let (rows, labels) = rings(6, 30);
        let folds = stratified_folds(&labels, 5, &mut substream(6, "folds")).unwrap();
        let cfg = CvConfig::default();
        let grid = [small_forest(Some(1)), small_forest(None)];
        let search = grid_search(&grid, &rows, &labels, 3, &folds, &cfg, 6).unwrap();
        assert_eq!(search.best, 1);
        let tied = [Hyperparams::ZeroR, Hyperparams::ZeroR];
        assert_eq!(
            grid_search(&tied, &rows, &labels, 3, &folds, &cfg, 6)
                .unwrap()
                .best,
            0
        );
        let single = grid_search(&grid[..1], &rows, &labels, 3, &folds, &cfg, 6).unwrap();
        assert_eq!(single.best, 0);
        assert!(grid_search(&[], &rows, &labels, 3, &folds, &cfg, 6).is_err());
    }

    #[test]
    fn cv_is_deterministic() {
        let (rows, labels) = rings(8, 20);
        let a = train_and_evaluate(
            &[small_forest(None)],
            Scheme::Ternary,
            &rows,
            &labels,
            &CvConfig::default(),
            8,
        )
        .unwrap();
        let b = train_and_evaluate(
            &[small_forest(None)],
            Scheme::Ternary,
            &rows,
            &labels,
            &CvConfig::default(),
            8,
        )
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn audit_catches_leaks() {
        let (rows, labels) = rings(9, 10);
        let folds = stratified_folds(&labels, 5, &mut substream(9, "folds")).unwrap();
        let mut cv = cross_validate(
            &Hyperparams::ZeroR,
            &rows,
            &labels,
            3,
            &folds,
            &CvConfig::default(),
            9,
        )
        .unwrap();
        verify_audit(&cv.audits, &rows, &folds).unwrap();
        let leaked = cv.audits[0].synthetic[0].hash.clone();
        cv.audits[0].test.push(leaked);
        assert!(verify_audit(&cv.audits, &rows, &folds).is_err());
    }

    #[test]
    fn baseline_report_on_react_counts() {
        let labels: Vec<usize> = [vec![0; 54], vec![1; 110], vec![2; 254]].concat();
        let r = baseline_report(&labels, Scheme::Ternary).unwrap();
        assert!((r.precision[2] - 254.0 / 418.0).abs() < 1e-12);
        assert_eq!(r.recall[2], 1.0);
        assert_eq!(r.kappa, 0.0);
        assert_eq!(r.auc, 0.5);
        // Independent arithmetic: P̄ = (254/418)/3, R̄ = 1/3.
        let p = 254.0 / 418.0 / 3.0;
        let rr = 1.0 / 3.0;
        assert!((r.f_measure - 2.0 * p * rr / (p + rr)).abs() < 1e-12);
    }

    #[test]
    fn hyperparams_round_trip() {
        for kind in [
            ClassifierKind::RandomForest,
            ClassifierKind::Svm,
            ClassifierKind::ZeroR,
        ] {
            for p in default_grid(kind) {
                let json = serde_json::to_string(&p).unwrap();
                assert_eq!(serde_json::from_str::<Hyperparams>(&json).unwrap(), p);
            }
        }
        assert_eq!(default_grid(ClassifierKind::RandomForest).len(), 8);
        assert_eq!(default_grid(ClassifierKind::Svm).len(), 12);
    }
}

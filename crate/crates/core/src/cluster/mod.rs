//! Unsupervised track: pick the smallest k whose k-means solution has an
//! expert-dominated cluster, then flag new developers nearest to it.

pub mod kmeans;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::learn::Ternary;
use crate::preprocess::TransformLog;

pub use kmeans::{kmeans, KMeansFit, DEFAULT_RESTARTS};

pub const HIGH_THRESHOLD: f64 = 0.70;
pub const LOW_THRESHOLD: f64 = 0.60;

/// 0.70 when experts are already the majority of labeled rows, else 0.60.
pub fn default_threshold(overall_expert_fraction: f64) -> f64 {
    if overall_expert_fraction >= 0.5 {
        HIGH_THRESHOLD
    } else {
        LOW_THRESHOLD
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Composition {
    pub cluster: usize,
    pub members: usize,
    pub labeled: usize,
    pub novice: f64,
    pub intermediate: f64,
    pub expert: f64,
}

pub fn composition(assignment: &[usize], labels: &[Option<Ternary>], k: usize) -> Vec<Composition> {
    (0..k)
        .map(|c| {
            let members: Vec<usize> = (0..assignment.len()).filter(|&i| assignment[i] == c).collect();
            let labeled: Vec<Ternary> = members.iter().filter_map(|&i| labels[i]).collect();
            let frac = |t: Ternary| {
                if labeled.is_empty() {
                    0.0
                } else {
                    labeled.iter().filter(|&&l| l == t).count() as f64 / labeled.len() as f64
                }
            };
            Composition {
                cluster: c,
                members: members.len(),
                labeled: labeled.len(),
                novice: frac(Ternary::Novice),
                intermediate: frac(Ternary::Intermediate),
                expert: frac(Ternary::Expert),
            }
        })
        .collect()
}

/// Best expert cluster of one k: highest expert fraction, then most
/// members, then lowest index.
fn best_cluster(comp: &[Composition]) -> Option<&Composition> {
    comp.iter().filter(|c| c.labeled > 0).max_by(|a, b| {
        a.expert
            .total_cmp(&b.expert)
            .then(a.members.cmp(&b.members))
            .then(b.cluster.cmp(&a.cluster))
    })
}

/// One row of the k-selection trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionStep {
    pub k: usize,
    pub best_cluster: usize,
    pub best_expert_fraction: f64,
    pub inertia: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub library: String,
    pub k: usize,
    pub columns: Vec<String>,
    pub centroids: Vec<Vec<f64>>,
    pub transform: TransformLog,
    pub developers: Vec<String>,
    pub assignment: Vec<usize>,
    pub composition: Vec<Composition>,
    pub expert_cluster: usize,
    pub threshold_used: f64,
    pub below_threshold: bool,
    pub inertia: f64,
    pub trace: Vec<SelectionStep>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    pub k_max: usize,
    pub restarts: usize,
    /// Replaces the majority-dependent default threshold.
    pub threshold: Option<f64>,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            k_max: 8,
            restarts: DEFAULT_RESTARTS,
            threshold: None,
        }
    }
}

/// Input to [`select_expert_cluster`]: standardized rows plus metadata.
pub struct ClusterInput<'a> {
    pub library: &'a str,
    pub developers: &'a [String],
    pub columns: &'a [String],
    pub rows: &'a [Vec<f64>],
    pub labels: &'a [Option<Ternary>],
    pub transform: &'a TransformLog,
}

/// Try k = 2, 3, … up to `k_max` and stop at the first k with a cluster
/// whose expert fraction reaches the threshold. Each k uses its own seed
/// substream, so the result does not depend on how far the loop ran.
pub fn select_expert_cluster(
    input: &ClusterInput<'_>,
    config: &SelectionConfig,
    seed: u64,
) -> Result<ClusterModel> {
    let n = input.rows.len();
    if input.labels.len() != n || input.developers.len() != n {
        return Err(Error::invalid("rows, labels and developers must align"));
    }
    let labeled: Vec<Ternary> = input.labels.iter().flatten().copied().collect();
    if labeled.is_empty() {
        return Err(Error::invalid("clustering needs labeled rows"));
    }
    let experts = labeled.iter().filter(|&&t| t == Ternary::Expert).count();
    if experts == 0 {
        return Err(Error::invalid("labels contain no experts"));
    }
    if config.k_max < 2 {
        return Err(Error::invalid("k_max must be at least 2"));
    }
    let threshold = config
        .threshold
        .unwrap_or_else(|| default_threshold(experts as f64 / labeled.len() as f64));

    let mut trace = Vec::new();
    let mut fallback: Option<(KMeansFit, Vec<Composition>, usize)> = None;
    for k in 2..=config.k_max.min(n) {
        let fit = kmeans(input.rows, k, config.restarts, seed, &format!("kmeans/k{k}"))?;
        let comp = composition(&fit.assignment, input.labels, k);
        let Some(best) = best_cluster(&comp).cloned() else {
            continue;
        };
        trace.push(SelectionStep {
            k,
            best_cluster: best.cluster,
            best_expert_fraction: best.expert,
            inertia: fit.inertia,
        });
        if best.expert >= threshold {
            return Ok(model(input, fit, comp, best.cluster, threshold, false, trace));
        }
        let better = fallback.as_ref().is_none_or(|(_, c, i)| {
            let prev = &c[*i];
            best.expert > prev.expert || (best.expert == prev.expert && best.members > prev.members)
        });
        if better {
            fallback = Some((fit, comp, best.cluster));
        }
    }
    let (fit, comp, cluster) =
        fallback.ok_or_else(|| Error::invalid(format!("{n} rows are too few to cluster")))?;
    log::warn!(
        "no cluster reached the {threshold:.2} expert threshold for {}; keeping the best found",
        input.library
    );
    Ok(model(input, fit, comp, cluster, threshold, true, trace))
}

fn model(
    input: &ClusterInput<'_>,
    fit: KMeansFit,
    composition: Vec<Composition>,
    expert_cluster: usize,
    threshold_used: f64,
    below_threshold: bool,
    trace: Vec<SelectionStep>,
) -> ClusterModel {
    ClusterModel {
        library: input.library.to_string(),
        k: fit.centroids.len(),
        columns: input.columns.to_vec(),
        centroids: fit.centroids,
        transform: input.transform.clone(),
        developers: input.developers.to_vec(),
        assignment: fit.assignment,
        composition,
        expert_cluster,
        threshold_used,
        below_threshold,
        inertia: fit.inertia,
        trace,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    LikelyExpert,
    Unknown,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::LikelyExpert => "likely-expert",
            Verdict::Unknown => "unknown",
        })
    }
}

/// Verdict plus `margin` = (closest other centroid distance) − (expert
/// centroid distance); positive exactly when the verdict is likely-expert.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub verdict: Verdict,
    pub margin: f64,
}

impl ClusterModel {
    /// Predict for a row already in the model's standardized space.
    pub fn predict_row(&self, row: &[f64]) -> Result<Prediction> {
        let p = self.centroids[0].len();
        if row.len() != p {
            return Err(Error::invalid(format!(
                "expected {p} features, got {}",
                row.len()
            )));
        }
        let dist = |c: &[f64]| kmeans::sq_dist(row, c).sqrt();
        let to_expert = dist(&self.centroids[self.expert_cluster]);
        let to_other = self
            .centroids
            .iter()
            .enumerate()
            .filter(|(c, _)| *c != self.expert_cluster)
            .map(|(_, c)| dist(c))
            .fold(f64::INFINITY, f64::min);
        let margin = to_other - to_expert;
        Ok(Prediction {
            verdict: if margin > 0.0 {
                Verdict::LikelyExpert
            } else {
                Verdict::Unknown
            },
            margin,
        })
    }

    /// Replay preprocessing on a raw feature vector, then predict.
    pub fn predict_expert(&self, v: &FeatureVector) -> Result<Prediction> {
        self.predict_row(&self.transform.apply(v))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictRow {
    pub developer: String,
    pub library: String,
    pub verdict: Verdict,
    pub distance_margin: f64,
}

pub fn predict_all(model: &ClusterModel, vectors: &[FeatureVector]) -> Result<Vec<VerdictRow>> {
    vectors
        .iter()
        .map(|v| {
            let p = model.predict_expert(v)?;
            Ok(VerdictRow {
                developer: v.developer.clone(),
                library: model.library.clone(),
                verdict: p.verdict,
                distance_margin: p.margin,
            })
        })
        .collect()
}

pub fn write_verdicts_csv<W: Write>(rows: &[VerdictRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_verdicts_csv<R: Read>(input: R) -> Result<Vec<VerdictRow>> {
    let mut r = csv::Reader::from_reader(input);
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

/// Developers flagged likely-expert in every library present in `rows`.
pub fn intersect_experts(rows: &[VerdictRow]) -> BTreeSet<String> {
    let mut per_library: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for r in rows {
        let set = per_library.entry(&r.library).or_default();
        if r.verdict == Verdict::LikelyExpert {
            set.insert(&r.developer);
        }
    }
    let mut sets = per_library.into_values();
    let Some(first) = sets.next() else {
        return BTreeSet::new();
    };
    sets.fold(first, |acc, s| acc.intersection(&s).copied().collect())
        .into_iter()
        .map(str::to_string)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_model() -> ClusterModel {
        ClusterModel {
            library: "lib".into(),
            k: 2,
            columns: vec!["a".into(), "b".into()],
            centroids: vec![vec![0.0, 0.0], vec![10.0, 10.0]],
            transform: TransformLog::default(),
            developers: vec![],
            assignment: vec![],
            composition: vec![],
            expert_cluster: 0,
            threshold_used: 0.7,
            below_threshold: false,
            inertia: 0.0,
            trace: vec![],
        }
    }

    #[test]
    fn verdicts_follow_strict_nearest() {
        let m = toy_model();
        assert_eq!(m.predict_row(&[1.0, 1.0]).unwrap().verdict, Verdict::LikelyExpert);
        assert_eq!(m.predict_row(&[5.0, 5.0]).unwrap().verdict, Verdict::Unknown);
        assert_eq!(m.predict_row(&[9.0, 9.0]).unwrap().verdict, Verdict::Unknown);
        assert!(m.predict_row(&[1.0]).is_err());
    }

    #[test]
    fn prediction_survives_isometries() {
        let m = toy_model();
        let rotate = |v: &[f64]| vec![v[1] + 3.0, -v[0] - 1.0];
        let mut moved = m.clone();
        moved.centroids = m.centroids.iter().map(|c| rotate(c)).collect();
        for q in [[1.0, 1.0], [5.0, 5.0], [4.0, 6.5], [-3.0, 12.0]] {
            let a = m.predict_row(&q).unwrap();
            let b = moved.predict_row(&rotate(&q)).unwrap();
            assert_eq!(a.verdict, b.verdict);
            assert!((a.margin - b.margin).abs() < 1e-9);
        }
    }

    fn row(dev: &str, lib: &str, v: Verdict) -> VerdictRow {
        VerdictRow {
            developer: dev.into(),
            library: lib.into(),
            verdict: v,
            distance_margin: 0.0,
        }
    }

    #[test]
    fn intersection() {
        use Verdict::*;
        let rows = vec![
            row("a", "L1", LikelyExpert),
            row("b", "L1", LikelyExpert),
            row("c", "L1", Unknown),
            row("b", "L2", LikelyExpert),
            row("c", "L2", LikelyExpert),
        ];
        assert_eq!(intersect_experts(&rows), BTreeSet::from(["b".to_string()]));
        assert_eq!(intersect_experts(&rows[..3]).len(), 2);
        let disjoint = vec![row("a", "L1", LikelyExpert), row("b", "L2", LikelyExpert)];
        assert!(intersect_experts(&disjoint).is_empty());
    }

    #[test]
    fn verdict_csv_round_trip() {
        let rows = vec![
            row("a", "L1", Verdict::LikelyExpert),
            row("b", "L1", Verdict::Unknown),
        ];
        let mut buf = Vec::new();
        write_verdicts_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("developer,library,verdict,distance_margin\n"));
        assert!(text.contains("likely-expert"));
        assert_eq!(read_verdicts_csv(buf.as_slice()).unwrap(), rows);
    }

    #[test]
    fn selection_stops_at_first_qualifying_k() {
        // Two tight groups: experts at 0, novices at 10.
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..10 {
            rows.push(vec![i as f64 * 0.01]);
            labels.push(Some(if i < 9 { Ternary::Expert } else { Ternary::Novice }));
            rows.push(vec![10.0 + i as f64 * 0.01]);
            labels.push(Some(Ternary::Novice));
        }
        let devs: Vec<String> = (0..rows.len()).map(|i| format!("d{i}")).collect();
        let input = ClusterInput {
            library: "lib",
            developers: &devs,
            columns: &["x".to_string()],
            rows: &rows,
            labels: &labels,
            transform: &TransformLog::default(),
        };
        let m = select_expert_cluster(&input, &SelectionConfig::default(), 1).unwrap();
        assert_eq!(m.k, 2);
        assert_eq!(m.threshold_used, LOW_THRESHOLD);
        assert!(!m.below_threshold);
        assert!((m.composition[m.expert_cluster].expert - 0.9).abs() < 1e-12);
        let again = select_expert_cluster(&input, &SelectionConfig::default(), 1).unwrap();
        assert_eq!(m, again);
        let strict = SelectionConfig {
            threshold: Some(0.95),
            k_max: 2,
            ..SelectionConfig::default()
        };
        let fallback = select_expert_cluster(&input, &strict, 1).unwrap();
        assert!(fallback.below_threshold);
    }
}

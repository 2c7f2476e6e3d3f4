//! Rank tests and effect sizes for describing the expert cluster.

use std::io::Write;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::cluster::ClusterModel;
use crate::error::{Error, Result};
use crate::learn::Ternary;
use crate::preprocess::median;

pub const ALPHA: f64 = 0.05;
/// Combined sample sizes up to this use the exact permutation distribution.
pub const EXACT_LIMIT: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MannWhitney {
    pub u_x: f64,
    pub u_y: f64,
    pub p: f64,
    pub exact: bool,
}

/// Midranks (1-based) of `values`, ties sharing their average rank.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start;
        while end + 1 < order.len() && values[order[end + 1]] == values[order[start]] {
            end += 1;
        }
        let rank = (start + end) as f64 / 2.0 + 1.0;
        for &i in &order[start..=end] {
            ranks[i] = rank;
        }
        start = end + 1;
    }
    ranks
}

fn check_samples(x: &[f64], y: &[f64]) -> Result<()> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::invalid("Mann-Whitney needs two non-empty samples"));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::invalid("samples must be finite"));
    }
    Ok(())
}

/// Two-sided test, exact when `|x| + |y| ≤ 12`, else normal approximation.
pub fn mann_whitney_u(x: &[f64], y: &[f64]) -> Result<MannWhitney> {
    check_samples(x, y)?;
    if x.len() + y.len() <= EXACT_LIMIT {
        mann_whitney_exact(x, y)
    } else {
        mann_whitney_normal(x, y)
    }
}

fn u_from_ranks(ranks: &[f64], n: usize, m: usize) -> (f64, f64) {
    let r_x: f64 = ranks[..n].iter().sum();
    let u_x = r_x - (n * (n + 1)) as f64 / 2.0;
    (u_x, (n * m) as f64 - u_x)
}

/// Exact p over every way of choosing which pooled (mid)ranks belong to
/// `x`: `P(|U − nm/2| ≥ |U_obs − nm/2|)`, computed on doubled integer U.
pub fn mann_whitney_exact(x: &[f64], y: &[f64]) -> Result<MannWhitney> {
    check_samples(x, y)?;
    let (n, m) = (x.len(), y.len());
    if n + m > 20 {
        return Err(Error::invalid("exact enumeration limited to 20 pooled values"));
    }
    let pooled: Vec<f64> = x.iter().chain(y).copied().collect();
    let ranks = midranks(&pooled);
    let (u_x, u_y) = u_from_ranks(&ranks, n, m);
    // Midranks are multiples of 1/2, so 2·rank is an exact integer.
    let twice: Vec<i64> = ranks.iter().map(|r| (2.0 * r).round() as i64).collect();
    let offset = (n * (n + 1)) as i64;
    let center = (n * m) as i64;
    // sum2 − n(n+1) is 2U, so this is |2U − nm|.
    let stat = |sum2: i64| (sum2 - offset - center).abs();
    let observed = stat(twice[..n].iter().sum());
    let total = pooled.len();
    let (mut hits, mut count) = (0u64, 0u64);
    for mask in 0u32..(1 << total) {
        if mask.count_ones() as usize != n {
            continue;
        }
        let sum2: i64 = (0..total)
            .filter(|&i| mask & (1 << i) != 0)
            .map(|i| twice[i])
            .sum();
        count += 1;
        if stat(sum2) >= observed {
            hits += 1;
        }
    }
    Ok(MannWhitney {
        u_x,
        u_y,
        p: hits as f64 / count as f64,
        exact: true,
    })
}

/// Normal approximation with tie-corrected variance and a 0.5 continuity
/// correction.
pub fn mann_whitney_normal(x: &[f64], y: &[f64]) -> Result<MannWhitney> {
    check_samples(x, y)?;
    let (n, m) = (x.len(), y.len());
    let pooled: Vec<f64> = x.iter().chain(y).copied().collect();
    let ranks = midranks(&pooled);
    let (u_x, u_y) = u_from_ranks(&ranks, n, m);
    let big_n = (n + m) as f64;
    let mut sorted = pooled.clone();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let nm = (n * m) as f64;
    let var = nm / 12.0 * ((big_n + 1.0) - tie_term / (big_n * (big_n - 1.0)));
    let p = if var <= 0.0 {
        1.0
    } else {
        let z = ((u_x - nm / 2.0).abs() - 0.5).max(0.0) / var.sqrt();
        let normal = Normal::new(0.0, 1.0).expect("standard normal");
        (2.0 * (1.0 - normal.cdf(z))).min(1.0)
    };
    Ok(MannWhitney {
        u_x,
        u_y,
        p,
        exact: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Magnitude {
    Negligible,
    Small,
    Medium,
    Large,
}

impl Magnitude {
    pub fn of(d: f64) -> Self {
        let a = d.abs();
        if a < 0.147 {
            Magnitude::Negligible
        } else if a < 0.33 {
            Magnitude::Small
        } else if a < 0.474 {
            Magnitude::Medium
        } else {
            Magnitude::Large
        }
    }
}

/// `(#{x > y} − #{x < y}) / (|x|·|y|)` over all pairs.
pub fn cliffs_delta(x: &[f64], y: &[f64]) -> Result<(f64, Magnitude)> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::invalid("Cliff's delta needs two non-empty samples"));
    }
    let mut balance: i64 = 0;
    for a in x {
        for b in y {
            if a > b {
                balance += 1;
            } else if a < b {
                balance -= 1;
            }
        }
    }
    let d = balance as f64 / (x.len() * y.len()) as f64;
    Ok((d, Magnitude::of(d)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "+")]
    Higher,
    #[serde(rename = "-")]
    Lower,
    #[serde(rename = "∘")]
    Similar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureEffect {
    pub feature: String,
    pub comparison_cluster: Option<usize>,
    pub expert_median: Option<f64>,
    pub comparison_median: Option<f64>,
    pub u: Option<f64>,
    pub p: Option<f64>,
    pub delta: Option<f64>,
    pub magnitude: Option<Magnitude>,
    pub direction: Option<Direction>,
    pub skipped: Option<String>,
}

impl FeatureEffect {
    fn skipped(feature: &str, reason: String) -> Self {
        FeatureEffect {
            feature: feature.to_string(),
            comparison_cluster: None,
            expert_median: None,
            comparison_median: None,
            u: None,
            p: None,
            delta: None,
            magnitude: None,
            direction: None,
            skipped: Some(reason),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectSizeReport {
    pub library: String,
    pub expert_cluster: usize,
    pub expert_members: usize,
    pub features: Vec<FeatureEffect>,
}

/// Compare the expert cluster with, per feature, the cluster whose median
/// is closest to the expert cluster's (ties to the larger cluster).
/// `values[i][j]` is row `i` (aligned with `model.assignment`) in `columns[j]`.
pub fn closest_median_comparison(
    model: &ClusterModel,
    columns: &[String],
    values: &[Vec<f64>],
) -> Result<EffectSizeReport> {
    if model.k < 2 {
        return Err(Error::invalid("need at least two clusters"));
    }
    if values.len() != model.assignment.len() {
        return Err(Error::invalid("value rows do not match the cluster assignment"));
    }
    let e = model.expert_cluster;
    let members =
        |c: usize| -> Vec<usize> { (0..values.len()).filter(|&i| model.assignment[i] == c).collect() };
    let expert_rows = members(e);
    let features = columns
        .iter()
        .enumerate()
        .map(|(j, name)| {
            if expert_rows.len() < 2 {
                return Ok(FeatureEffect::skipped(
                    name,
                    format!("expert cluster has {} member(s)", expert_rows.len()),
                ));
            }
            let ex: Vec<f64> = expert_rows.iter().map(|&i| values[i][j]).collect();
            let me = median(&ex);
            let mut best: Option<(usize, f64, Vec<f64>)> = None;
            for c in (0..model.k).filter(|&c| c != e) {
                let col: Vec<f64> = members(c).iter().map(|&i| values[i][j]).collect();
                if col.is_empty() {
                    continue;
                }
                let gap = (median(&col) - me).abs();
                let better = best
                    .as_ref()
                    .is_none_or(|(_, g, b)| gap < *g || (gap == *g && col.len() > b.len()));
                if better {
                    best = Some((c, gap, col));
                }
            }
            let Some((c, _, other)) = best else {
                return Ok(FeatureEffect::skipped(name, "no other non-empty cluster".into()));
            };
            let mw = mann_whitney_u(&ex, &other)?;
            let (delta, magnitude) = cliffs_delta(&ex, &other)?;
            let mo = median(&other);
            let direction = if mw.p >= ALPHA {
                Direction::Similar
            } else if me > mo || (me == mo && delta > 0.0) {
                Direction::Higher
            } else {
                Direction::Lower
            };
            Ok(FeatureEffect {
                feature: name.clone(),
                comparison_cluster: Some(c),
                expert_median: Some(me),
                comparison_median: Some(mo),
                u: Some(mw.u_x),
                p: Some(mw.p),
                delta: Some(delta),
                magnitude: Some(magnitude),
                direction: Some(direction),
                skipped: None,
            })
        })
        .collect::<Result<_>>()?;
    Ok(EffectSizeReport {
        library: model.library.clone(),
        expert_cluster: e,
        expert_members: expert_rows.len(),
        features,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuintileBucket {
    pub bucket: usize,
    /// Inclusive upper boundary; `None` for the last bucket.
    pub upper_bound: Option<f64>,
    pub count: usize,
    pub experts: usize,
    pub expert_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quintiles {
    pub feature: String,
    pub buckets: Vec<QuintileBucket>,
    /// Set when the column is constant and every row lands in one bucket.
    pub degenerate: bool,
}

/// Nearest-rank percentile of sorted data: the value at rank ⌈q·n⌉.
pub fn nearest_rank(sorted: &[f64], q: f64) -> f64 {
    let rank = ((q * sorted.len() as f64) - 1e-9).ceil().max(1.0) as usize;
    sorted[rank.min(sorted.len()) - 1]
}

/// Bucket labeled rows by the 20/40/60/80th percentiles (a value equal to
/// a boundary goes to the lower bucket) and report expert shares.
pub fn quintile_expert_fractions(
    feature: &str,
    values: &[f64],
    labels: &[Option<Ternary>],
) -> Result<Quintiles> {
    if values.len() != labels.len() {
        return Err(Error::invalid("values and labels must align"));
    }
    let labeled: Vec<(f64, bool)> = values
        .iter()
        .zip(labels)
        .filter_map(|(&v, l)| l.map(|t| (v, t == Ternary::Expert)))
        .collect();
    if labeled.len() < 5 {
        return Err(Error::invalid(format!(
            "{feature}: quintiles need at least 5 labeled rows"
        )));
    }
    let mut sorted: Vec<f64> = labeled.iter().map(|p| p.0).collect();
    sorted.sort_by(f64::total_cmp);
    let bounds: Vec<f64> = [0.2, 0.4, 0.6, 0.8]
        .iter()
        .map(|&q| nearest_rank(&sorted, q))
        .collect();
    let degenerate = sorted[0] == sorted[sorted.len() - 1];
    let mut count = [0usize; 5];
    let mut experts = [0usize; 5];
    for &(v, is_expert) in &labeled {
        let b = bounds.iter().position(|&ub| v <= ub).unwrap_or(4);
        count[b] += 1;
        experts[b] += usize::from(is_expert);
    }
    let buckets = (0..5)
        .map(|b| QuintileBucket {
            bucket: b + 1,
            upper_bound: bounds.get(b).copied(),
            count: count[b],
            experts: experts[b],
            expert_fraction: if count[b] == 0 {
                0.0
            } else {
                experts[b] as f64 / count[b] as f64
            },
        })
        .collect();
    Ok(Quintiles {
        feature: feature.to_string(),
        buckets,
        degenerate,
    })
}

#[derive(Serialize)]
struct QuintileRow<'a> {
    feature: &'a str,
    bucket: usize,
    upper_bound: Option<f64>,
    count: usize,
    experts: usize,
    expert_fraction: f64,
    degenerate: bool,
}

pub fn write_quintiles_csv<W: Write>(all: &[Quintiles], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for q in all {
        for b in &q.buckets {
            w.serialize(QuintileRow {
                feature: &q.feature,
                bucket: b.bucket,
                upper_bound: b.upper_bound,
                count: b.count,
                experts: b.experts,
                expert_fraction: b.expert_fraction,
                degenerate: q.degenerate,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn u_of_total_dominance() {
        let r = mann_whitney_u(&[1.0, 2.0], &[3.0, 4.0]).unwrap();
        assert_eq!(r.u_x, 0.0);
        assert_eq!(r.u_y, 4.0);
        assert!(r.exact);
        // Only the two extreme arrangements out of six are as far out.
        assert!((r.p - 2.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn identical_samples() {
        assert_eq!(mann_whitney_u(&[3.0], &[3.0]).unwrap().p, 1.0);
        let x: Vec<f64> = (0..20).map(|i| (i % 7) as f64).collect();
        let r = mann_whitney_u(&x, &x).unwrap();
        assert!(!r.exact);
        assert!(r.p > 0.95);
        assert!(mann_whitney_u(&[], &[1.0]).is_err());
    }

    #[test]
    fn midranks_share_ties() {
        assert_eq!(midranks(&[10.0, 20.0, 10.0, 30.0]), vec![1.5, 3.0, 1.5, 4.0]);
    }

    #[test]
    fn cliffs_examples() {
        assert_eq!(
            cliffs_delta(&[4.0, 5.0, 6.0], &[1.0, 2.0, 3.0]).unwrap(),
            (1.0, Magnitude::Large)
        );
        assert_eq!(
            cliffs_delta(&[1.0, 2.0], &[1.0, 2.0]).unwrap(),
            (0.0, Magnitude::Negligible)
        );
        assert_eq!(cliffs_delta(&[1.0, 3.0], &[2.0]).unwrap().0, 0.0);
    }

    #[test]
    fn magnitude_bands() {
        assert_eq!(Magnitude::of(0.146), Magnitude::Negligible);
        assert_eq!(Magnitude::of(-0.147), Magnitude::Small);
        assert_eq!(Magnitude::of(0.33), Magnitude::Medium);
        assert_eq!(Magnitude::of(0.474), Magnitude::Large);
    }

    #[test]
    fn quintiles_top_two_are_experts() {
        let values: Vec<f64> = (1..=10).map(f64::from).collect();
        let labels: Vec<Option<Ternary>> = (1..=10)
            .map(|v| Some(if v > 8 { Ternary::Expert } else { Ternary::Novice }))
            .collect();
        let q = quintile_expert_fractions("f", &values, &labels).unwrap();
        let fr: Vec<f64> = q.buckets.iter().map(|b| b.expert_fraction).collect();
        assert_eq!(fr, vec![0.0, 0.0, 0.0, 0.0, 1.0]);
        assert!(q.buckets.iter().all(|b| b.count == 2));
        assert!(!q.degenerate);
    }

    #[test]
    fn constant_column_is_flagged() {
        let values = vec![2.0; 6];
        let labels = vec![Some(Ternary::Expert); 6];
        let q = quintile_expert_fractions("f", &values, &labels).unwrap();
        assert!(q.degenerate);
        assert_eq!(q.buckets[0].count, 6);
        assert!(quintile_expert_fractions("f", &values[..4], &labels[..4]).is_err());
    }

    #[test]
    fn nearest_rank_percentiles() {
        let s: Vec<f64> = (1..=5).map(f64::from).collect();
        assert_eq!(nearest_rank(&s, 0.2), 1.0);
        assert_eq!(nearest_rank(&s, 0.4), 2.0);
        assert_eq!(nearest_rank(&s, 0.5), 3.0);
    }
}

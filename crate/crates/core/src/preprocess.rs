//! Feature cleaning: impute missing values, prune correlated features,
//! log-transform skewed ones, and (for clustering) standardize.
//!
//! Every step appends to a [`TransformLog`], which is enough to replay the
//! whole pipeline on a new feature vector.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{col, FeatureVector, FEATURE_NAMES};

pub const CORRELATION_THRESHOLD: f64 = 0.7;
pub const SKEW_RATIO: f64 = 4.0;
const TIE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule")]
pub enum ImputeRule {
    /// Missing cells become zero.
    Zero,
    /// Missing cells become the maximum observed value.
    ColumnMax { value: f64 },
    /// Missing cells become 0 when one import was added, -1 when none.
    ByImports,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Imputation {
    pub column: String,
    #[serde(flatten)]
    pub rule: ImputeRule,
    pub filled: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dropped {
    pub column: String,
    pub partner: String,
    pub correlation: f64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkewTransform {
    pub column: String,
    pub mean: f64,
    pub median: f64,
    /// Column minimum; values become ln(1 + x - min).
    pub shift_min: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnScale {
    pub column: String,
    pub mean: f64,
    /// Population standard deviation; 0 means the column was only centered.
    pub std_dev: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TransformLog {
    pub imputation: Vec<Imputation>,
    pub correlation_threshold: Option<f64>,
    pub dropped: Vec<Dropped>,
    pub skewed: Vec<SkewTransform>,
    pub standardization: Vec<ColumnScale>,
}

/// Developers × features, with `None` marking missing cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub developers: Vec<String>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
    pub active: Vec<bool>,
    pub log: TransformLog,
}

impl FeatureMatrix {
    pub fn from_vectors(vectors: &[FeatureVector]) -> Self {
        FeatureMatrix {
            developers: vectors.iter().map(|v| v.developer.clone()).collect(),
            columns: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
            rows: vectors.iter().map(|v| v.values().to_vec()).collect(),
            active: vec![true; FEATURE_NAMES.len()],
            log: TransformLog::default(),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn active_indices(&self) -> Vec<usize> {
        (0..self.columns.len()).filter(|&j| self.active[j]).collect()
    }

    pub fn active_names(&self) -> Vec<String> {
        self.active_indices()
            .into_iter()
            .map(|j| self.columns[j].clone())
            .collect()
    }

    pub fn has_missing(&self) -> bool {
        self.rows.iter().flatten().any(Option::is_none)
    }

    /// Values of column `j`; fails on missing cells.
    pub fn column(&self, j: usize) -> Result<Vec<f64>> {
        self.rows
            .iter()
            .map(|r| {
                r[j].ok_or_else(|| Error::invalid(format!("column {} has missing cells", self.columns[j])))
            })
            .collect()
    }

    /// Dense rows restricted to active columns.
    pub fn dense_active(&self) -> Result<Vec<Vec<f64>>> {
        let idx = self.active_indices();
        self.rows
            .iter()
            .map(|r| {
                idx.iter()
                    .map(|&j| r[j].ok_or_else(|| Error::invalid("matrix still has missing cells")))
                    .collect()
            })
            .collect()
    }

    /// Keep only the listed rows, in the given order.
    pub fn select_rows(&self, keep: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            developers: keep.iter().map(|&i| self.developers[i].clone()).collect(),
            rows: keep.iter().map(|&i| self.rows[i].clone()).collect(),
            ..self.clone()
        }
    }

    fn require(&self, name: &str) -> Result<usize> {
        self.column_index(name)
            .ok_or_else(|| Error::invalid(format!("matrix lacks column {name}")))
    }
}

/// Fill the four ever-missing features.
pub fn impute_missing(matrix: &FeatureMatrix) -> Result<FeatureMatrix> {
    let mut m = matrix.clone();
    let imports = m.require(FEATURE_NAMES[col::IMPORTS])?;
    let first = m.require(FEATURE_NAMES[col::DAYS_SINCE_FIRST_IMPORT])?;
    let last = m.require(FEATURE_NAMES[col::DAYS_SINCE_LAST_IMPORT])?;
    let between = m.require(FEATURE_NAMES[col::DAYS_BETWEEN_IMPORTS])?;
    let avg = m.require(FEATURE_NAMES[col::AVG_DAYS_COMMITS_IMPORT_LIBRARY])?;

    let mut records = Vec::new();
    for j in [first, last] {
        let filled = fill(&mut m, j, |_| Ok(0.0))?;
        records.push(Imputation {
            column: m.columns[j].clone(),
            rule: ImputeRule::Zero,
            filled,
        });
    }

    let filled = fill(&mut m, between, |row| {
        let n = row[imports].ok_or_else(|| Error::invalid("imports may not be missing"))?;
        Ok(if n == 0.0 { -1.0 } else { 0.0 })
    })?;
    records.push(Imputation {
        column: m.columns[between].clone(),
        rule: ImputeRule::ByImports,
        filled,
    });

    let observed_max = m
        .rows
        .iter()
        .filter_map(|r| r[avg])
        .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))));
    let missing_avg = m.rows.iter().any(|r| r[avg].is_none());
    let value = match observed_max {
        Some(v) => v,
        None if !missing_avg => 0.0,
        None => {
            return Err(Error::invalid(format!(
                "{} is missing for every developer; no observed maximum",
                m.columns[avg]
            )))
        }
    };
    let filled = fill(&mut m, avg, |_| Ok(value))?;
    records.push(Imputation {
        column: m.columns[avg].clone(),
        rule: ImputeRule::ColumnMax { value },
        filled,
    });

    if let Some(j) = m
        .rows
        .iter()
        .flat_map(|r| r.iter().enumerate())
        .find(|(_, c)| c.is_none())
        .map(|(j, _)| j)
    {
        return Err(Error::invalid(format!(
            "column {} has missing values with no imputation rule",
            m.columns[j]
        )));
    }
    m.log.imputation = records;
    Ok(m)
}

fn fill(m: &mut FeatureMatrix, j: usize, value: impl Fn(&[Option<f64>]) -> Result<f64>) -> Result<usize> {
    let mut n = 0;
    for row in &mut m.rows {
        if row[j].is_none() {
            row[j] = Some(value(row)?);
            n += 1;
        }
    }
    Ok(n)
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Pearson correlation; 0 when either side has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return 0.0;
    }
    (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0)
}

/// Greedy elimination: while some active pair has |r| > `threshold`, take
/// the pair with the largest |r| and drop whichever member has the larger
/// mean absolute correlation with the other active columns (the later
/// column on an exact tie).
pub fn prune_correlated(matrix: &FeatureMatrix, threshold: f64) -> Result<FeatureMatrix> {
    if matrix.n_rows() < 2 {
        return Err(Error::invalid("correlation pruning needs at least 2 rows"));
    }
    let mut m = matrix.clone();
    let cols: Vec<Vec<f64>> = (0..m.columns.len()).map(|j| m.column(j)).collect::<Result<_>>()?;
    let p = cols.len();
    let mut r = vec![vec![0.0; p]; p];
    for i in 0..p {
        for j in i + 1..p {
            let c = pearson(&cols[i], &cols[j]).abs();
            r[i][j] = c;
            r[j][i] = c;
        }
    }

    loop {
        let active = m.active_indices();
        let mut best: Option<(usize, usize, f64)> = None;
        for (a, &i) in active.iter().enumerate() {
            for &j in &active[a + 1..] {
                if r[i][j] > threshold && best.is_none_or(|(_, _, b)| r[i][j] > b + TIE_EPS) {
                    best = Some((i, j, r[i][j]));
                }
            }
        }
        let Some((i, j, rij)) = best else { break };
        let mean_abs = |c: usize| {
            let others: Vec<f64> = active.iter().filter(|&&k| k != c).map(|&k| r[c][k]).collect();
            mean(&others)
        };
        let (mi, mj) = (mean_abs(i), mean_abs(j));
        let (victim, partner) = if mi > mj + TIE_EPS { (i, j) } else { (j, i) };
        m.active[victim] = false;
        m.log.dropped.push(Dropped {
            column: m.columns[victim].clone(),
            partner: m.columns[partner].clone(),
            correlation: rij,
            reason: format!(
                "|r|={rij:.4} > {threshold} with {}; mean |r| {:.4} vs {:.4}",
                m.columns[partner],
                mean_abs(victim),
                mean_abs(partner)
            ),
        });
    }
    m.log.correlation_threshold = Some(threshold);
    Ok(m)
}

/// The skew test: mean at least four times the median, or, where that
/// ratio is undefined (median <= 0), a positive mean.
pub fn is_skewed(xs: &[f64]) -> bool {
    let (mu, med) = (mean(xs), median(xs));
    if med > 0.0 {
        mu >= SKEW_RATIO * med
    } else {
        mu > 0.0
    }
}

/// ln(1 + x - min), clamped at 0 for values below the fitted minimum.
pub fn log_shift(x: f64, min: f64) -> f64 {
    (x - min).max(0.0).ln_1p()
}

/// Log-transform every skewed active column.
pub fn transform_skewed(matrix: &FeatureMatrix) -> Result<FeatureMatrix> {
    let mut m = matrix.clone();
    for j in m.active_indices() {
        let xs = m.column(j)?;
        if xs.is_empty() || !is_skewed(&xs) {
            continue;
        }
        let min = xs.iter().copied().fold(f64::INFINITY, f64::min);
        for row in &mut m.rows {
            row[j] = row[j].map(|x| log_shift(x, min));
        }
        m.log.skewed.push(SkewTransform {
            column: m.columns[j].clone(),
            mean: mean(&xs),
            median: median(&xs),
            shift_min: min,
        });
    }
    Ok(m)
}

/// Center and scale active columns (population standard deviation).
pub fn standardize(matrix: &FeatureMatrix) -> Result<FeatureMatrix> {
    if matrix.n_rows() < 2 {
        return Err(Error::invalid("standardization needs at least 2 rows"));
    }
    let mut m = matrix.clone();
    let mut params = Vec::new();
    for j in m.active_indices() {
        let xs = m.column(j)?;
        let mu = mean(&xs);
        let sd = (xs.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / xs.len() as f64).sqrt();
        let scale = ColumnScale {
            column: m.columns[j].clone(),
            mean: mu,
            std_dev: if sd > 0.0 { sd } else { 0.0 },
        };
        for row in &mut m.rows {
            row[j] = row[j].map(|x| scale.apply(x));
        }
        params.push(scale);
    }
    m.log.standardization = params;
    Ok(m)
}

impl ColumnScale {
    pub fn apply(&self, x: f64) -> f64 {
        if self.std_dev > 0.0 {
            (x - self.mean) / self.std_dev
        } else {
            x - self.mean
        }
    }

    pub fn invert(&self, z: f64) -> f64 {
        if self.std_dev > 0.0 {
            z * self.std_dev + self.mean
        } else {
            z + self.mean
        }
    }
}

/// Undo standardization of the active columns.
pub fn unstandardize(matrix: &FeatureMatrix) -> FeatureMatrix {
    let mut m = matrix.clone();
    for s in &matrix.log.standardization {
        if let Some(j) = m.column_index(&s.column) {
            for row in &mut m.rows {
                row[j] = row[j].map(|z| s.invert(z));
            }
        }
    }
    m.log.standardization.clear();
    m
}

/// impute → prune → transform, in that order.
pub fn clean(matrix: &FeatureMatrix, threshold: f64) -> Result<FeatureMatrix> {
    let m = impute_missing(matrix)?;
    let m = prune_correlated(&m, threshold)?;
    transform_skewed(&m)
}

impl TransformLog {
    /// Replay the fitted pipeline on one raw feature vector, yielding the
    /// values of the surviving columns in `FEATURE_NAMES` order.
    pub fn apply(&self, v: &FeatureVector) -> Vec<f64> {
        let mut raw = v.values();
        for imp in &self.imputation {
            let Some(j) = FEATURE_NAMES.iter().position(|n| *n == imp.column) else {
                continue;
            };
            if raw[j].is_some() {
                continue;
            }
            raw[j] = Some(match imp.rule {
                ImputeRule::Zero => 0.0,
                ImputeRule::ColumnMax { value } => value,
                ImputeRule::ByImports => {
                    if v.imports == 0 {
                        -1.0
                    } else {
                        0.0
                    }
                }
            });
        }
        let dropped: Vec<&str> = self.dropped.iter().map(|d| d.column.as_str()).collect();
        FEATURE_NAMES
            .iter()
            .enumerate()
            .filter(|(_, name)| !dropped.contains(name))
            .map(|(j, name)| {
                let mut x = raw[j].unwrap_or(0.0);
                if let Some(s) = self.skewed.iter().find(|s| s.column == *name) {
                    x = log_shift(x, s.shift_min);
                }
                if let Some(s) = self.standardization.iter().find(|s| s.column == *name) {
                    x = s.apply(x);
                }
                x
            })
            .collect()
    }

    pub fn active_columns(&self) -> Vec<String> {
        FEATURE_NAMES
            .iter()
            .filter(|n| !self.dropped.iter().any(|d| d.column == **n))
            .map(|n| n.to_string())
            .collect()
    }
}

/// `developer` plus the active columns.
pub fn write_clean_csv<W: Write>(m: &FeatureMatrix, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let idx = m.active_indices();
    let mut header = vec!["developer".to_string()];
    header.extend(idx.iter().map(|&j| m.columns[j].clone()));
    w.write_record(&header)?;
    for (dev, row) in m.developers.iter().zip(&m.rows) {
        let mut rec = vec![dev.clone()];
        rec.extend(
            idx.iter()
                .map(|&j| row[j].map(|x| format!("{x}")).unwrap_or_default()),
        );
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Read a clean matrix back; every listed column is active.
pub fn read_clean_csv<R: Read>(input: R, log: TransformLog) -> Result<FeatureMatrix> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    let columns: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut developers = Vec::new();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        developers.push(rec.get(0).unwrap_or("").to_string());
        rows.push(
            rec.iter()
                .skip(1)
                .map(|s| {
                    if s.is_empty() {
                        Ok(None)
                    } else {
                        s.parse::<f64>()
                            .map(Some)
                            .map_err(|_| Error::invalid(format!("bad number `{s}`")))
                    }
                })
                .collect::<Result<Vec<_>>>()?,
        );
    }
    Ok(FeatureMatrix {
        active: vec![true; columns.len()],
        developers,
        columns,
        rows,
        log,
    })
}

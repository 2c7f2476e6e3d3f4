//! Synthetic minority oversampling.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};

pub const DEFAULT_KNN: usize = 3;
pub const DEFAULT_PERCENT: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SmoteConfig {
    pub knn: usize,
    /// Synthetic rows to create, as a percentage of the minority size.
    pub percent: f64,
}

impl Default for SmoteConfig {
    fn default() -> Self {
        SmoteConfig {
            knn: DEFAULT_KNN,
            percent: DEFAULT_PERCENT,
        }
    }
}

/// A synthetic row and the two minority rows it interpolates.
#[derive(Debug, Clone, PartialEq)]
pub struct Synthetic {
    pub values: Vec<f64>,
    pub base: usize,
    pub neighbor: usize,
    pub gap: f64,
}

pub fn synthetic_count(minority: usize, percent: f64) -> usize {
    (minority as f64 * percent / 100.0 - 1e-9).ceil().max(0.0) as usize
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Indices of the `k` nearest other rows of `rows[i]` (ties by index).
pub fn nearest_neighbors(rows: &[Vec<f64>], i: usize, k: usize) -> Vec<usize> {
    let mut others: Vec<(f64, usize)> = (0..rows.len())
        .filter(|&j| j != i)
        .map(|j| (sq_dist(&rows[i], &rows[j]), j))
        .collect();
    others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    others.into_iter().take(k).map(|(_, j)| j).collect()
}

/// Create `ceil(percent% · n)` synthetic rows. Each picks a distinct
/// minority row `p` (in random order), one of its `knn` nearest minority
/// neighbours `q`, and a gap `u ~ U[0,1)`, emitting `p + u·(q − p)`.
pub fn smote<R: Rng>(minority: &[Vec<f64>], config: SmoteConfig, rng: &mut R) -> Result<Vec<Synthetic>> {
    if minority.len() <= config.knn {
        return Err(Error::invalid(format!(
            "SMOTE needs more than knn={} minority rows, got {}; use a smaller knn",
            config.knn,
            minority.len()
        )));
    }
    let count = synthetic_count(minority.len(), config.percent);
    let mut order: Vec<usize> = (0..minority.len()).collect();
    order.shuffle(rng);
    let mut out = Vec::with_capacity(count);
    for step in 0..count {
        let base = order[step % order.len()];
        let neighbors = nearest_neighbors(minority, base, config.knn);
        let neighbor = neighbors[rng.random_range(0..neighbors.len())];
        let gap: f64 = rng.random();
        let values = minority[base]
            .iter()
            .zip(&minority[neighbor])
            .map(|(p, q)| p + gap * (q - p))
            .collect();
        out.push(Synthetic {
            values,
            base,
            neighbor,
            gap,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    #[test]
    fn count_is_a_ceiling() {
        assert_eq!(synthetic_count(10, 30.0), 3);
        assert_eq!(synthetic_count(11, 30.0), 4);
        assert_eq!(synthetic_count(4, 30.0), 2);
        assert_eq!(synthetic_count(54, 30.0), 17);
    }

    #[test]
    fn points_lie_on_minority_segments() {
        let minority: Vec<Vec<f64>> = (0..4).map(|i| vec![i as f64, i as f64]).collect();
        let syn = smote(&minority, SmoteConfig::default(), &mut substream(1, "smote")).unwrap();
        assert_eq!(syn.len(), 2);
        for s in syn {
            assert!(s.base != s.neighbor);
            assert_eq!(s.values[0], s.values[1]);
            let lo = minority[s.base][0].min(minority[s.neighbor][0]);
            let hi = minority[s.base][0].max(minority[s.neighbor][0]);
            assert!(s.values[0] >= lo && s.values[0] <= hi);
        }
    }

    #[test]
    fn seeded_runs_are_identical() {
        let minority: Vec<Vec<f64>> = (0..10).map(|i| vec![(i * 7 % 5) as f64, i as f64]).collect();
        let a = smote(&minority, SmoteConfig::default(), &mut substream(9, "s")).unwrap();
        let b = smote(&minority, SmoteConfig::default(), &mut substream(9, "s")).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 3);
    }

    #[test]
    fn too_few_minority_rows() {
        let minority = vec![vec![0.0]; 3];
        let err = smote(&minority, SmoteConfig::default(), &mut substream(0, "s")).unwrap_err();
        assert!(err.to_string().contains("smaller knn"));
    }

    #[test]
    fn neighbors_break_ties_by_index() {
        let rows = vec![vec![0.0], vec![1.0], vec![-1.0], vec![1.0]];
        assert_eq!(nearest_neighbors(&rows, 0, 3), vec![1, 2, 3]);
    }
}

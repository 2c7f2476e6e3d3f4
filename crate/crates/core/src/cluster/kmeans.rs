//! Lloyd's algorithm with k-means++ seeding and parallel restarts.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::child;

pub const DEFAULT_RESTARTS: usize = 50;
pub const MAX_ITERATIONS: usize = 300;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansFit {
    pub centroids: Vec<Vec<f64>>,
    pub assignment: Vec<usize>,
    pub inertia: f64,
    pub iterations: usize,
    pub restart: usize,
}

pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Nearest centroid, ties to the lowest index.
pub fn nearest(centroids: &[Vec<f64>], row: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter().enumerate() {
        let d = sq_dist(row, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

pub fn inertia(rows: &[Vec<f64>], centroids: &[Vec<f64>], assignment: &[usize]) -> f64 {
    rows.iter()
        .zip(assignment)
        .map(|(r, &c)| sq_dist(r, &centroids[c]))
        .sum()
}

fn plus_plus<R: Rng>(rows: &[Vec<f64>], k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut centroids = vec![rows[rng.random_range(0..rows.len())].clone()];
    let mut d2: Vec<f64> = rows.iter().map(|r| sq_dist(r, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = rows.len() - 1;
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 && target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            rng.random_range(0..rows.len())
        };
        centroids.push(rows[pick].clone());
        for (i, r) in rows.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(r, &centroids[centroids.len() - 1]));
        }
    }
    centroids
}

fn means(rows: &[Vec<f64>], assignment: &[usize], k: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
    let p = rows[0].len();
    let mut sums = vec![vec![0.0; p]; k];
    let mut counts = vec![0usize; k];
    for (r, &c) in rows.iter().zip(assignment) {
        counts[c] += 1;
        for (s, x) in sums[c].iter_mut().zip(r) {
            *s += x;
        }
    }
    for (s, &n) in sums.iter_mut().zip(&counts) {
        if n > 0 {
            s.iter_mut().for_each(|v| *v /= n as f64);
        }
    }
    (sums, counts)
}

/// One Lloyd run. Inertia is checked to be non-increasing every iteration.
pub fn lloyd<R: Rng>(rows: &[Vec<f64>], k: usize, rng: &mut R) -> Result<KMeansFit> {
    let mut centroids = plus_plus(rows, k, rng);
    let mut assignment: Vec<usize> = rows.iter().map(|r| nearest(&centroids, r).0).collect();
    let mut previous = f64::INFINITY;
    let mut iterations = 0;
    loop {
        iterations += 1;
        let (mut next, mut counts) = means(rows, &assignment, k);
        // Re-seed empty clusters from the point farthest from its centroid.
        while let Some(empty) = counts.iter().position(|&n| n == 0) {
            let far = (0..rows.len())
                .filter(|&i| counts[assignment[i]] > 1)
                .max_by(|&a, &b| {
                    sq_dist(&rows[a], &next[assignment[a]])
                        .total_cmp(&sq_dist(&rows[b], &next[assignment[b]]))
                        .then(b.cmp(&a))
                })
                .ok_or_else(|| Error::contract("cannot repair an empty cluster"))?;
            assignment[far] = empty;
            (next, counts) = means(rows, &assignment, k);
        }
        centroids = next;
        let current = inertia(rows, &centroids, &assignment);
        let scale = previous.abs().max(1.0);
        if current > previous + 1e-9 * scale {
            return Err(Error::contract(format!(
                "k-means inertia rose from {previous} to {current}"
            )));
        }
        previous = current;
        // A point only moves when another centroid is strictly closer.
        let reassigned: Vec<usize> = rows
            .iter()
            .zip(&assignment)
            .map(|(r, &current)| {
                let (c, d) = nearest(&centroids, r);
                if sq_dist(r, &centroids[current]) <= d {
                    current
                } else {
                    c
                }
            })
            .collect();
        if reassigned == assignment || iterations >= MAX_ITERATIONS {
            break;
        }
        assignment = reassigned;
    }
    Ok(KMeansFit {
        inertia: inertia(rows, &centroids, &assignment),
        centroids,
        assignment,
        iterations,
        restart: 0,
    })
}

/// Best of `restarts` Lloyd runs by inertia, ties to the lowest restart.
/// Restart `r` draws from the substream `{stream}/{r}` of `seed`.
pub fn kmeans(rows: &[Vec<f64>], k: usize, restarts: usize, seed: u64, stream: &str) -> Result<KMeansFit> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if rows.len() < k {
        return Err(Error::invalid(format!(
            "{} rows cannot form {k} clusters",
            rows.len()
        )));
    }
    let p = rows[0].len();
    if rows.iter().any(|r| r.len() != p) {
        return Err(Error::invalid("rows differ in width"));
    }
    let fits: Vec<KMeansFit> = (0..restarts.max(1))
        .into_par_iter()
        .map(|r| {
            let mut fit = lloyd(rows, k, &mut child(seed, stream, r))?;
            fit.restart = r;
            Ok(fit)
        })
        .collect::<Result<_>>()?;
    let mut best = 0;
    for (i, f) in fits.iter().enumerate() {
        if f.inertia < fits[best].inertia {
            best = i;
        }
    }
    Ok(fits.into_iter().nth(best).expect("at least one restart"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_obvious_groups() {
        let rows = vec![vec![0.0], vec![0.0], vec![10.0], vec![10.0]];
        let fit = kmeans(&rows, 2, 10, 1, "km").unwrap();
        let mut c: Vec<f64> = fit.centroids.iter().map(|c| c[0]).collect();
        c.sort_by(f64::total_cmp);
        assert_eq!(c, vec![0.0, 10.0]);
        assert_eq!(fit.inertia, 0.0);
    }

    #[test]
    fn k_equal_to_distinct_points_gives_zero_inertia() {
        let rows = vec![vec![0.0, 1.0], vec![3.0, 1.0], vec![5.0, -2.0], vec![3.0, 1.0]];
        let fit = kmeans(&rows, 3, 20, 2, "km").unwrap();
        assert_eq!(fit.inertia, 0.0);
    }

    #[test]
    fn fixed_point_properties() {
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|i| vec![(i * 17 % 13) as f64, (i * 7 % 11) as f64])
            .collect();
        let fit = kmeans(&rows, 4, 8, 3, "km").unwrap();
        for (r, &c) in rows.iter().zip(&fit.assignment) {
            let d = sq_dist(r, &fit.centroids[c]);
            assert!(fit.centroids.iter().all(|o| d <= sq_dist(r, o) + 1e-12));
        }
        let (m, counts) = means(&rows, &fit.assignment, 4);
        assert!(counts.iter().all(|&n| n > 0));
        for (a, b) in m.iter().zip(&fit.centroids) {
            assert!(sq_dist(a, b) < 1e-18);
        }
    }

    #[test]
    fn too_few_rows() {
        assert!(kmeans(&[vec![1.0]], 2, 5, 0, "km").is_err());
    }

    #[test]
    fn duplicates_force_repair() {
        let rows = vec![vec![1.0]; 5];
        let fit = kmeans(&rows, 3, 5, 4, "km").unwrap();
        assert_eq!(fit.inertia, 0.0);
        let mut used = fit.assignment.clone();
        used.sort();
        used.dedup();
        assert_eq!(used.len(), 3);
    }

    #[test]
    fn seeded_runs_match() {
        let rows: Vec<Vec<f64>> = (0..30).map(|i| vec![(i * 5 % 9) as f64]).collect();
        assert_eq!(
            kmeans(&rows, 3, 10, 7, "km").unwrap(),
            kmeans(&rows, 3, 10, 7, "km").unwrap()
        );
    }
}

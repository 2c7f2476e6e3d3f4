//! Bagged CART trees with per-split feature subsampling.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::StageRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeaturesPerSplit {
    Sqrt,
    Log2,
    All,
}

impl FeaturesPerSplit {
    pub fn count(self, p: usize) -> usize {
        let m = match self {
            FeaturesPerSplit::Sqrt => (p as f64).sqrt().floor() as usize,
            FeaturesPerSplit::Log2 => (p as f64).log2().floor() as usize,
            FeaturesPerSplit::All => p,
        };
        m.clamp(1, p.max(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub trees: usize,
    /// `None` grows until leaves are pure or unsplittable.
    pub max_depth: Option<usize>,
    pub features_per_split: FeaturesPerSplit,
    /// Train each tree on a bootstrap resample; off means every tree sees
    /// the full training set.
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            trees: 100,
            max_depth: None,
            features_per_split: FeaturesPerSplit::Sqrt,
            bootstrap: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf {
        class: usize,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
}

impl Node {
    pub fn predict(&self, row: &[f64]) -> usize {
        let mut node = self;
        loop {
            match node {
                Node::Leaf { class } => return *class,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => node = if row[*feature] <= *threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Node::Leaf { .. } => 0,
            Node::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub n_classes: usize,
    pub n_features: usize,
    pub trees: Vec<Node>,
}

/// Index of the largest value, ties to the lowest index.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

fn majority(counts: &[usize]) -> usize {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

fn gini(counts: &[usize], total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let t = total as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / t).powi(2)).sum::<f64>()
}

struct Builder<'a> {
    rows: &'a [Vec<f64>],
    labels: &'a [usize],
    n_classes: usize,
    params: ForestParams,
    mtry: usize,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    impurity: f64,
}

impl Builder<'_> {
    fn class_counts(&self, idx: &[usize]) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for &i in idx {
            counts[self.labels[i]] += 1;
        }
        counts
    }

    fn best_split_on(&self, idx: &[usize], feature: usize) -> Option<BestSplit> {
        let mut order: Vec<usize> = idx.to_vec();
        order.sort_by(|&a, &b| self.rows[a][feature].total_cmp(&self.rows[b][feature]));
        let total = order.len();
        let mut left = vec![0; self.n_classes];
        let mut right = self.class_counts(idx);
        let mut best: Option<BestSplit> = None;
        for pos in 0..total - 1 {
            let i = order[pos];
            left[self.labels[i]] += 1;
            right[self.labels[i]] -= 1;
            let here = self.rows[i][feature];
            let next = self.rows[order[pos + 1]][feature];
            if here == next {
                continue;
            }
            let nl = pos + 1;
            let nr = total - nl;
            let impurity = (nl as f64 * gini(&left, nl) + nr as f64 * gini(&right, nr)) / total as f64;
            if best.as_ref().is_none_or(|b| impurity < b.impurity) {
                let mut threshold = here + (next - here) / 2.0;
                if threshold >= next {
                    threshold = here;
                }
                best = Some(BestSplit {
                    feature,
                    threshold,
                    impurity,
                });
            }
        }
        best
    }

    fn grow(&self, idx: &[usize], depth: usize, rng: &mut StageRng) -> Node {
        let counts = self.class_counts(idx);
        let leaf = Node::Leaf {
            class: majority(&counts),
        };
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        if pure || idx.len() < 2 || self.params.max_depth.is_some_and(|d| depth >= d) {
            return leaf;
        }
        let mut features: Vec<usize> = (0..self.rows[0].len()).collect();
        features.shuffle(rng);
        // Look at `mtry` candidates; if all of them are constant here, keep
        // drawing from the rest rather than stopping early.
        let mut best: Option<BestSplit> = None;
        for (tried, &f) in features.iter().enumerate() {
            if tried >= self.mtry && best.is_some() {
                break;
            }
            if let Some(s) = self.best_split_on(idx, f) {
                if best.as_ref().is_none_or(|b| s.impurity < b.impurity) {
                    best = Some(s);
                }
            }
        }
        let Some(split) = best else { return leaf };
        let (l, r): (Vec<usize>, Vec<usize>) = idx
            .iter()
            .partition(|&&i| self.rows[i][split.feature] <= split.threshold);
        Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left: Box::new(self.grow(&l, depth + 1, rng)),
            right: Box::new(self.grow(&r, depth + 1, rng)),
        }
    }
}

pub(crate) fn check_training(rows: &[Vec<f64>], labels: &[usize], n_classes: usize) -> Result<usize> {
    if rows.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} rows for {} labels",
            rows.len(),
            labels.len()
        )));
    }
    if rows.is_empty() {
        return Err(Error::invalid("no training rows"));
    }
    let p = rows[0].len();
    if p == 0 || rows.iter().any(|r| r.len() != p) {
        return Err(Error::invalid("training rows must share a non-zero width"));
    }
    if labels.iter().any(|&l| l >= n_classes) {
        return Err(Error::invalid("label outside class range"));
    }
    if labels.iter().all(|&l| l == labels[0]) {
        return Err(Error::invalid("training data contains a single class"));
    }
    Ok(p)
}

impl Forest {
    pub fn train<R: Rng>(
        rows: &[Vec<f64>],
        labels: &[usize],
        n_classes: usize,
        params: ForestParams,
        rng: &mut R,
    ) -> Result<Forest> {
        let p = check_training(rows, labels, n_classes)?;
        if params.trees == 0 {
            return Err(Error::invalid("forest needs at least one tree"));
        }
        let builder = Builder {
            rows,
            labels,
            n_classes,
            params,
            mtry: params.features_per_split.count(p),
        };
        let seeds: Vec<u64> = (0..params.trees).map(|_| rng.next_u64()).collect();
        let trees = seeds
            .par_iter()
            .map(|&seed| {
                let mut tree_rng = StageRng::seed_from_u64(seed);
                let n = rows.len();
                let idx: Vec<usize> = if params.bootstrap {
                    (0..n).map(|_| tree_rng.random_range(0..n)).collect()
                } else {
                    (0..n).collect()
                };
                builder.grow(&idx, 0, &mut tree_rng)
            })
            .collect();
        Ok(Forest {
            n_classes,
            n_features: p,
            trees,
        })
    }

    /// Fraction of trees voting for each class.
    pub fn scores(&self, row: &[f64]) -> Vec<f64> {
        let mut votes = vec![0.0; self.n_classes];
        for t in &self.trees {
            votes[t.predict(row)] += 1.0;
        }
        let n = self.trees.len() as f64;
        votes.iter_mut().for_each(|v| *v /= n);
        votes
    }

    pub fn predict(&self, row: &[f64]) -> usize {
        argmax(&self.scores(row))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    fn separable() -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..20 {
            let x = i as f64;
            rows.push(vec![x, (i * 7 % 5) as f64]);
            labels.push(usize::from(i >= 10));
        }
        (rows, labels)
    }

    #[test]
    fn separable_set_is_fit_exactly() {
        let (rows, labels) = separable();
        let f = Forest::train(
            &rows,
            &labels,
            2,
            ForestParams::default(),
            &mut substream(1, "rf"),
        )
        .unwrap();
        for (r, &l) in rows.iter().zip(&labels) {
            assert_eq!(f.predict(r), l);
        }
    }

    #[test]
    fn single_tree_memorizes() {
        let rows: Vec<Vec<f64>> = (0..30)
            .map(|i| vec![(i * 13 % 7) as f64, (i * 5 % 11) as f64, i as f64])
            .collect();
        let labels: Vec<usize> = (0..30).map(|i| (i * 31 % 3) as usize).collect();
        let params = ForestParams {
            trees: 1,
            max_depth: None,
            features_per_split: FeaturesPerSplit::Sqrt,
            bootstrap: false,
        };
        let f = Forest::train(&rows, &labels, 3, params, &mut substream(2, "rf")).unwrap();
        for (r, &l) in rows.iter().zip(&labels) {
            assert_eq!(f.predict(r), l);
        }
    }

    #[test]
    fn depth_limit_and_determinism() {
        let (rows, labels) = separable();
        let params = ForestParams {
            trees: 5,
            max_depth: Some(1),
            ..ForestParams::default()
        };
        let a = Forest::train(&rows, &labels, 2, params, &mut substream(3, "rf")).unwrap();
        let b = Forest::train(&rows, &labels, 2, params, &mut substream(3, "rf")).unwrap();
        assert_eq!(a, b);
        assert!(a.trees.iter().all(|t| t.depth() <= 1));
    }

    #[test]
    fn single_class_is_an_error() {
        let rows = vec![vec![0.0], vec![1.0]];
        assert!(Forest::train(
            &rows,
            &[1, 1],
            2,
            ForestParams::default(),
            &mut substream(0, "rf")
        )
        .is_err());
    }

    #[test]
    fn mtry_counts() {
        assert_eq!(FeaturesPerSplit::Sqrt.count(13), 3);
        assert_eq!(FeaturesPerSplit::Log2.count(13), 3);
        assert_eq!(FeaturesPerSplit::Log2.count(1), 1);
        assert_eq!(FeaturesPerSplit::Sqrt.count(2), 1);
    }
}

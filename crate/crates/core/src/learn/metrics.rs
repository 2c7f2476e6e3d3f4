use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scores from evaluating predictions against truth over `n_classes`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub f_measure: f64,
    pub kappa: f64,
    pub auc: f64,
    /// `confusion[truth][predicted]`
    pub confusion: Vec<Vec<u64>>,
}

fn check_lengths(predicted: &[usize], truth: &[usize], n_classes: usize) -> Result<()> {
    if predicted.len() != truth.len() {
        return Err(Error::invalid(format!(
            "{} predictions for {} truth labels",
            predicted.len(),
            truth.len()
        )));
    }
    if let Some(&c) = predicted.iter().chain(truth).find(|&&c| c >= n_classes) {
        return Err(Error::invalid(format!("class {c} outside 0..{n_classes}")));
    }
    Ok(())
}

pub fn confusion(predicted: &[usize], truth: &[usize], n_classes: usize) -> Vec<Vec<u64>> {
    let mut m = vec![vec![0u64; n_classes]; n_classes];
    for (&p, &t) in predicted.iter().zip(truth) {
        m[t][p] += 1;
    }
    m
}

/// Harmonic mean of the mean per-class precision and mean per-class recall.
pub fn macro_f(precision: &[f64], recall: &[f64]) -> f64 {
    let p = precision.iter().sum::<f64>() / precision.len() as f64;
    let r = recall.iter().sum::<f64>() / recall.len() as f64;
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Cohen's kappa from integer counts, so constant predictors land on 0 exactly.
pub fn kappa(confusion: &[Vec<u64>]) -> f64 {
    let k = confusion.len();
    let n: u64 = confusion.iter().flatten().sum();
    let diag: u64 = (0..k).map(|i| confusion[i][i]).sum();
    let chance: u128 = (0..k)
        .map(|i| {
            let row: u64 = confusion[i].iter().sum();
            let col: u64 = confusion.iter().map(|r| r[i]).sum();
            row as u128 * col as u128
        })
        .sum();
    let n2 = n as u128 * n as u128;
    if n2 == chance {
        return if diag == n { 1.0 } else { 0.0 };
    }
    (n as i128 * diag as i128 - chance as i128) as f64 / (n2 - chance) as f64
}

/// Probability that a random member of `pos` outscores a random member of
/// `neg`, ties counted half.
pub fn pairwise_auc(pos: &[f64], neg: &[f64]) -> f64 {
    let mut wins = 0.0;
    for &a in pos {
        for &b in neg {
            if a > b {
                wins += 1.0;
            } else if a == b {
                wins += 0.5;
            }
        }
    }
    wins / (pos.len() * neg.len()) as f64
}

/// Multi-class AUC: the unweighted mean over class pairs `(i, j)` present
/// in `truth` of `(A(i|j) + A(j|i)) / 2`, where `A(i|j)` ranks class-`i`
/// members against class-`j` members by their class-`i` score.
pub fn hand_till_auc(scores: &[Vec<f64>], truth: &[usize], n_classes: usize) -> f64 {
    let present: Vec<usize> = (0..n_classes).filter(|&c| truth.contains(&c)).collect();
    let mut total = 0.0;
    let mut pairs = 0;
    for (a, &i) in present.iter().enumerate() {
        for &j in &present[a + 1..] {
            let by = |class: usize, member: usize| -> Vec<f64> {
                truth
                    .iter()
                    .zip(scores)
                    .filter(|(&t, _)| t == member)
                    .map(|(_, s)| s[class])
                    .collect()
            };
            let a_ij = pairwise_auc(&by(i, i), &by(i, j));
            let a_ji = pairwise_auc(&by(j, j), &by(j, i));
            total += (a_ij + a_ji) / 2.0;
            pairs += 1;
        }
    }
    total / pairs as f64
}

/// Evaluate hard predictions plus per-class scores (used only for AUC).
pub fn evaluate(
    predicted: &[usize],
    truth: &[usize],
    scores: &[Vec<f64>],
    n_classes: usize,
) -> Result<Metrics> {
    check_lengths(predicted, truth, n_classes)?;
    if scores.len() != truth.len() || scores.iter().any(|s| s.len() != n_classes) {
        return Err(Error::invalid("score matrix does not match labels"));
    }
    let distinct = (0..n_classes).filter(|c| truth.contains(c)).count();
    if distinct < 2 {
        return Err(Error::invalid("truth must contain at least two classes"));
    }
    let cm = confusion(predicted, truth, n_classes);
    let mut precision = vec![0.0; n_classes];
    let mut recall = vec![0.0; n_classes];
    for c in 0..n_classes {
        let tp = cm[c][c] as f64;
        let predicted_c: u64 = cm.iter().map(|r| r[c]).sum();
        let actual_c: u64 = cm[c].iter().sum();
        if predicted_c > 0 {
            precision[c] = tp / predicted_c as f64;
        }
        if actual_c > 0 {
            recall[c] = tp / actual_c as f64;
        }
    }
    Ok(Metrics {
        f_measure: macro_f(&precision, &recall),
        kappa: kappa(&cm),
        auc: hand_till_auc(scores, truth, n_classes),
        precision,
        recall,
        confusion: cm,
    })
}

/// One-hot scores for hard predictions.
pub fn one_hot(predicted: &[usize], n_classes: usize) -> Vec<Vec<f64>> {
    predicted
        .iter()
        .map(|&p| (0..n_classes).map(|c| if c == p { 1.0 } else { 0.0 }).collect())
        .collect()
}

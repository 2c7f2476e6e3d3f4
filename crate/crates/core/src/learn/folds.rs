use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};

/// Assign each row to one of `k` folds so that every class is spread as
/// evenly as possible (per-class fold counts differ by at most one).
pub fn stratified_folds<R: Rng>(labels: &[usize], k: usize, rng: &mut R) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::invalid("need at least 2 folds"));
    }
    let n_classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut fold = vec![0; labels.len()];
    // Continue the round-robin across classes so fold sizes stay balanced.
    let mut next = 0;
    for class in 0..n_classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if members.is_empty() {
            continue;
        }
        if members.len() < k {
            return Err(Error::invalid(format!(
                "class {class} has {} members, fewer than {k} folds",
                members.len()
            )));
        }
        members.shuffle(rng);
        for i in members {
            fold[i] = next % k;
            next += 1;
        }
    }
    Ok(fold)
}

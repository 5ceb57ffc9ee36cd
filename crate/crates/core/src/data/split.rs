use rand::seq::SliceRandom;

use crate::{rng, Error, Result};

/// Splits `0..n` into consecutive parts with the given fractions. With
/// `shuffle` the indices are permuted by a seeded stream first; without it
/// the split is chronological. Part boundaries are `round(cumsum * n)`.
pub fn split(n: usize, fractions: &[f64], seed: u64, shuffle: bool) -> Result<Vec<Vec<usize>>> {
    let total: f64 = fractions.iter().sum();
    if fractions.is_empty() || (total - 1.0).abs() > 1e-9 || fractions.iter().any(|&f| f < 0.0) {
        return Err(Error::Config(format!("split fractions {fractions:?} must be non-negative and sum to 1")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    if shuffle {
        order.shuffle(&mut rng::stream(seed, &[0x5B1]));
    }
    let mut parts = Vec::with_capacity(fractions.len());
    let mut cum = 0.0;
    let mut start = 0;
    for (i, f) in fractions.iter().enumerate() {
        cum += f;
        let end = if i + 1 == fractions.len() {
            n
        } else {
            ((cum * n as f64).round() as usize).min(n)
        };
        if end <= start {
            return Err(Error::Data(format!("split part {i} of {n} rows is empty")));
        }
        parts.push(order[start..end].to_vec());
        start = end;
    }
    Ok(parts)
}

/// `k` (train, test) pairs over a seeded permutation of `0..n`. Test folds
/// are disjoint, cover every index, and differ in size by at most one.
pub fn kfold(n: usize, k: usize, seed: u64) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    if k < 2 {
        return Err(Error::Config(format!("k-fold needs k >= 2, got {k}")));
    }
    if n < k {
        return Err(Error::Data(format!("cannot make {k} folds from {n} rows")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, &[0xF01D]));
    Ok(kfold_from_order(&order, k))
}

/// Contiguous, unshuffled folds, for time-ordered data.
pub fn kfold_blocked(n: usize, k: usize) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    if k < 2 || n < k {
        return Err(Error::Data(format!("cannot make {k} folds from {n} rows")));
    }
    let order: Vec<usize> = (0..n).collect();
    Ok(kfold_from_order(&order, k))
}

fn kfold_from_order(order: &[usize], k: usize) -> Vec<(Vec<usize>, Vec<usize>)> {
    let n = order.len();
    let (base, extra) = (n / k, n % k);
    let mut bounds = Vec::with_capacity(k + 1);
    bounds.push(0);
    for f in 0..k {
        bounds.push(bounds[f] + base + usize::from(f < extra));
    }
    (0..k)
        .map(|f| {
            let test = order[bounds[f]..bounds[f + 1]].to_vec();
            let train = order[..bounds[f]]
                .iter()
                .chain(&order[bounds[f + 1]..])
                .copied()
                .collect();
            (train, test)
        })
        .collect()
}

use crate::{Error, Result};

/// Mean target of the `k` nearest training rows under Euclidean distance.
/// Equal distances are broken towards the lower row index.
pub fn knn_predict(train_x: &[f64], d: usize, train_y: &[f64], query: &[f64], k: usize) -> Result<f64> {
    let n = train_y.len();
    if n == 0 {
        return Err(Error::Data("k-NN needs a non-empty training set".into()));
    }
    if !(1..=n).contains(&k) {
        return Err(Error::Config(format!("k = {k} must be in 1..={n}")));
    }
    if query.len() != d || train_x.len() != n * d {
        return Err(Error::Shape(format!("k-NN expects {d} features per row")));
    }
    let mut dist: Vec<(f64, usize)> = train_x
        .chunks(d)
        .enumerate()
        .map(|(i, r)| (r.iter().zip(query).map(|(a, b)| (a - b).powi(2)).sum::<f64>(), i))
        .collect();
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < n {
        dist.select_nth_unstable_by(k - 1, cmp);
    }
    Ok(dist[..k].iter().map(|&(_, i)| train_y[i]).sum::<f64>() / k as f64)
}

use std::collections::BTreeMap;

use ndarray::ArrayView2;

use super::{check_width, Predictor};
use crate::error::Result;

/// k-nearest-neighbour regression on standardized features.
///
/// Training rows with identical feature vectors are pooled into one location,
/// and the k nearest *locations* are averaged with their multiplicities. This
/// makes predictions invariant to duplicating the whole training set.
#[derive(Debug, Clone)]
pub struct Knn {
    k: usize,
    p: usize,
    scale: Vec<f64>,
    locations: Vec<Vec<f64>>,
    sums: Vec<f64>,
    counts: Vec<f64>,
}

impl Knn {
    pub fn fit(x: ArrayView2<'_, f64>, y: &[f64], k: usize) -> Self {
        let (n, p) = x.dim();
        let scale = (0..p)
            .map(|j| {
                let col = x.column(j);
                let m = col.sum() / n as f64;
                let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64;
                if var > 0.0 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect::<Vec<_>>();
        let mut pooled: BTreeMap<Vec<u64>, (usize, f64, f64)> = BTreeMap::new();
        for (i, row) in x.outer_iter().enumerate() {
            let key: Vec<u64> = row.iter().map(|v| v.to_bits()).collect();
            let first = pooled.len();
            let e = pooled.entry(key).or_insert((first, 0.0, 0.0));
            e.1 += y[i];
            e.2 += 1.0;
        }
        let mut entries: Vec<(Vec<u64>, (usize, f64, f64))> = pooled.into_iter().collect();
        entries.sort_by_key(|(_, (order, _, _))| *order);
        let mut locations = Vec::with_capacity(entries.len());
        let mut sums = Vec::with_capacity(entries.len());
        let mut counts = Vec::with_capacity(entries.len());
        for (key, (_, s, c)) in entries {
            locations.push(key.iter().zip(&scale).map(|(b, sc)| f64::from_bits(*b) / sc).collect());
            sums.push(s);
            counts.push(c);
        }
        Knn { k, p, scale, locations, sums, counts }
    }
}

impl Predictor for Knn {
    fn n_features(&self) -> usize {
        self.p
    }

    fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        check_width(self.p, &x)?;
        let k = self.k.min(self.locations.len());
        let mut dist: Vec<(f64, usize)> = Vec::with_capacity(self.locations.len());
        Ok(x.outer_iter()
            .map(|row| {
                dist.clear();
                for (idx, loc) in self.locations.iter().enumerate() {
                    let d: f64 = loc
                        .iter()
                        .zip(row.iter().zip(&self.scale))
                        .map(|(l, (v, s))| {
                            let t = l - v / s;
                            t * t
                        })
                        .sum();
                    dist.push((d, idx));
                }
                // ties broken by insertion order of the location
                dist.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                let (s, c) = dist[..k].iter().fold((0.0, 0.0), |(s, c), &(_, idx)| (s + self.sums[idx], c + self.counts[idx]));
                s / c
            })
            .collect())
    }

    fn name(&self) -> &str {
        "knn"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{concatenate, Array2, Axis};

    #[test]
    fn invariant_to_duplicating_training_set() {
        let x = Array2::from_shape_fn((25, 2), |(i, j)| ((i * 31 + j * 11) % 23) as f64 / 5.0);
        let y: Vec<f64> = (0..25).map(|i| (i as f64).sin()).collect();
        let single = Knn::fit(x.view(), &y, 4);
        let xx = concatenate(Axis(0), &[x.view(), x.view()]).unwrap();
        let yy: Vec<f64> = y.iter().chain(y.iter()).copied().collect();
        let double = Knn::fit(xx.view(), &yy, 4);
        let probe = Array2::from_shape_fn((10, 2), |(i, j)| (i as f64 * 0.37 + j as f64 * 1.3) % 4.6);
        let a = single.predict(probe.view()).unwrap();
        let b = double.predict(probe.view()).unwrap();
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn k1_reproduces_training_targets() {
        let x = Array2::from_shape_fn((8, 1), |(i, _)| i as f64);
        let y: Vec<f64> = (0..8).map(|i| i as f64 * 2.0).collect();
        let m = Knn::fit(x.view(), &y, 1);
        assert_eq!(m.predict(x.view()).unwrap(), y);
    }
}

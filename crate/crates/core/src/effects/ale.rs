use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{GadgetError, Result};
use crate::learners::Predictor;
use crate::stats;

/// Per-observation prediction differences across each observation's own
/// interval `]z_{k-1}, z_k]` (the lowest boundary belongs to the first interval).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AleDerivatives {
    pub feature: usize,
    pub boundaries: Vec<f64>,
    pub rows: Vec<usize>,
    /// 0-based interval of each observation, aligned with `rows`.
    pub interval: Vec<usize>,
    pub diffs: Vec<f64>,
}

impl AleDerivatives {
    pub fn n_intervals(&self) -> usize {
        self.boundaries.len() - 1
    }

    pub fn counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.n_intervals()];
        for &k in &self.interval {
            c[k] += 1;
        }
        c
    }

    fn grouped(&self) -> Vec<Vec<f64>> {
        let mut g = vec![Vec::new(); self.n_intervals()];
        for (&k, &v) in self.interval.iter().zip(&self.diffs) {
            g[k].push(v);
        }
        g
    }

    pub fn interval_means(&self) -> Vec<f64> {
        self.grouped().iter().map(|g| stats::mean(g)).collect()
    }

    /// Population standard deviation of the differences in each interval.
    pub fn interval_sds(&self) -> Vec<f64> {
        self.grouped().iter().map(|g| stats::std_dev(g)).collect()
    }

    /// Sum over intervals of squared deviations from the interval mean.
    pub fn sum_sq_dev(&self) -> f64 {
        self.grouped().iter().map(|g| stats::sum_sq_dev(g)).sum()
    }

    pub fn per_interval_sum_sq_dev(&self) -> Vec<f64> {
        self.grouped().iter().map(|g| stats::sum_sq_dev(g)).collect()
    }
}

pub fn default_interval_count(n_rows: usize) -> usize {
    (n_rows / 10).clamp(1, 20)
}

/// Interval index (0-based) of `v` for boundaries `z_0 < ... < z_K`.
pub fn interval_of(boundaries: &[f64], v: f64) -> usize {
    let k = boundaries.partition_point(|&b| b < v);
    k.clamp(1, boundaries.len() - 1) - 1
}

/// Drop boundaries until no interval is empty.
fn merge_empty(mut boundaries: Vec<f64>, values: &[f64]) -> Vec<f64> {
    loop {
        if boundaries.len() <= 2 {
            return boundaries;
        }
        let mut counts = vec![0usize; boundaries.len() - 1];
        for &v in values {
            counts[interval_of(&boundaries, v)] += 1;
        }
        match counts.iter().position(|&c| c == 0) {
            None => return boundaries,
            // first interval merges right, every other one merges left
            Some(0) => {
                boundaries.remove(1);
            }
            Some(k) => {
                boundaries.remove(k);
            }
        }
    }
}

/// Quantile boundaries for numeric features, observed codes for categorical
/// ones; empty intervals are merged away.
pub fn ale_boundaries(d: &Dataset, rows: &[usize], j: usize, n_intervals: usize) -> Result<Vec<f64>> {
    if n_intervals < 1 {
        return Err(GadgetError::Usage("ALE needs at least one interval".into()));
    }
    let values = d.feature_values(j, rows);
    let sorted = stats::sorted_copy(&values);
    let distinct = stats::dedup_sorted(sorted.clone());
    if distinct.len() < 2 {
        return Err(GadgetError::DegenerateFeature(format!(
            "'{}' takes a single value in the subspace",
            d.column(j).name
        )));
    }
    let raw = if d.column(j).is_categorical() {
        distinct
    } else {
        let q: Vec<f64> = (0..=n_intervals)
            .map(|k| stats::quantile_sorted(&sorted, k as f64 / n_intervals as f64))
            .collect();
        stats::dedup_sorted(q)
    };
    Ok(merge_empty(raw, &values))
}

pub fn ale_derivatives(pr: &dyn Predictor, d: &Dataset, rows: &[usize], j: usize, n_intervals: usize) -> Result<AleDerivatives> {
    let boundaries = ale_boundaries(d, rows, j, n_intervals)?;
    ale_derivatives_on(pr, d, rows, j, boundaries)
}

/// Differences for `rows` on fixed boundaries.
pub fn ale_derivatives_on(pr: &dyn Predictor, d: &Dataset, rows: &[usize], j: usize, boundaries: Vec<f64>) -> Result<AleDerivatives> {
    let p = d.n_features();
    let n = rows.len();
    let interval: Vec<usize> = rows.iter().map(|&i| interval_of(&boundaries, d.value(i, j))).collect();
    let mut x = Array2::zeros((2 * n, p));
    for (r, &i) in rows.iter().enumerate() {
        let k = interval[r];
        for (off, z) in [(0, boundaries[k]), (1, boundaries[k + 1])] {
            let mut dst = x.row_mut(2 * r + off);
            dst.assign(&d.row(i));
            dst[j] = z;
        }
    }
    let pred = pr.predict(x.view())?;
    let diffs = (0..n).map(|r| pred[2 * r + 1] - pred[2 * r]).collect();
    Ok(AleDerivatives { feature: j, boundaries, rows: rows.to_vec(), interval, diffs })
}

/// Accumulated effects at the boundaries before centering.
pub fn ale_uncentered(der: &AleDerivatives) -> Vec<f64> {
    let mut acc = Vec::with_capacity(der.boundaries.len());
    acc.push(0.0);
    let mut s = 0.0;
    for m in der.interval_means() {
        s += m;
        acc.push(s);
    }
    acc
}

/// Count-weighted average of the curve over the intervals, using the
/// interval midpoint value `(ALE(z_{k-1}) + ALE(z_k)) / 2`.
pub fn ale_weighted_mean(values: &[f64], counts: &[usize]) -> f64 {
    let n: usize = counts.iter().sum();
    if n == 0 {
        return 0.0;
    }
    counts
        .iter()
        .enumerate()
        .map(|(k, &c)| c as f64 * 0.5 * (values[k] + values[k + 1]))
        .sum::<f64>()
        / n as f64
}

/// Centered ALE values at the boundaries.
pub fn ale_values(der: &AleDerivatives) -> Vec<f64> {
    let raw = ale_uncentered(der);
    let c = ale_weighted_mean(&raw, &der.counts());
    raw.into_iter().map(|v| v - c).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::FeatureMeta;
    use crate::learners::LinearModel;
    use ndarray::array;

    struct Square;
    impl Predictor for Square {
        fn n_features(&self) -> usize {
            1
        }
        fn predict(&self, x: ndarray::ArrayView2<'_, f64>) -> Result<Vec<f64>> {
            Ok(x.column(0).iter().map(|v| v * v).collect())
        }
        fn name(&self) -> &str {
            "square"
        }
    }

    #[test]
    fn square_difference_in_own_interval() {
        let d = Dataset::from_numeric(array![[0.0], [0.25], [1.0]], vec![0.0; 3]).unwrap();
        let der = ale_derivatives_on(&Square, &d, &[0, 1, 2], 0, vec![0.0, 0.5, 1.0]).unwrap();
        assert_eq!(der.interval, vec![0, 0, 1]);
        assert!((der.diffs[1] - 0.25).abs() < 1e-15);
        assert!((der.diffs[2] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn linear_accumulation() {
        let x = array![[0.0], [0.2], [0.5], [0.7], [1.0]];
        let d = Dataset::from_numeric(x, vec![0.0; 5]).unwrap();
        let f = LinearModel::from_coefficients(0.0, vec![3.0]);
        let der = ale_derivatives_on(&f, &d, &d.all_rows(), 0, vec![0.0, 0.5, 1.0]).unwrap();
        let raw = ale_uncentered(&der);
        for (a, b) in raw.iter().zip([0.0, 1.5, 3.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(der.counts(), vec![3, 2]);
        let centered = ale_values(&der);
        assert!(ale_weighted_mean(&centered, &der.counts()).abs() < 1e-12);
        assert!(der.sum_sq_dev() < 1e-20);
    }

    #[test]
    fn empty_intervals_merge_left() {
        let values = [0.0, 0.1, 0.9, 1.0];
        let merged = merge_empty(vec![0.0, 0.3, 0.6, 1.0], &values);
        assert_eq!(merged, vec![0.0, 0.6, 1.0]);
    }

    #[test]
    fn single_value_is_degenerate() {
        let d = Dataset::from_numeric(array![[1.0], [1.0]], vec![0.0; 2]).unwrap();
        assert!(matches!(ale_boundaries(&d, &[0, 1], 0, 4), Err(GadgetError::DegenerateFeature(_))));
    }

    #[test]
    fn binary_category_uses_switch_difference() {
        let cols = vec![FeatureMeta::categorical("c", vec!["a".into(), "b".into()])];
        let d = Dataset::new(cols, array![[0.0], [1.0], [1.0]], vec![0.0; 3]).unwrap();
        let f = LinearModel::from_coefficients(1.0, vec![2.0]);
        let der = ale_derivatives(&f, &d, &[0, 1, 2], 0, 20).unwrap();
        assert_eq!(der.boundaries, vec![0.0, 1.0]);
        assert_eq!(der.diffs, vec![2.0, 2.0, 2.0]);
    }
}

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::stats;

pub const DEFAULT_INTERIOR_KNOTS: usize = 10;
const DEGREE: usize = 3;

/// Penalized cubic regression spline, or its small-sample fallbacks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Smoother {
    Spline { knots: Vec<f64>, coefficients: Vec<f64>, lambda: f64 },
    /// Interpolates the mean response at each distinct x.
    PiecewiseLinear { xs: Vec<f64>, ys: Vec<f64> },
    /// One mean per category code.
    CategoryMeans { codes: Vec<f64>, means: Vec<f64> },
}

/// Nonzero cubic B-spline basis values at `x`: returns the index of the
/// first nonzero basis function and the four values.
fn basis_at(knots: &[f64], x: f64) -> (usize, [f64; 4]) {
    let n_basis = knots.len() - DEGREE - 1;
    let lo = knots[DEGREE];
    let hi = knots[n_basis];
    let x = x.clamp(lo, hi);
    // knot span: knots[s] <= x < knots[s+1], with the right end in the last span
    let mut s = knots.partition_point(|&k| k <= x).saturating_sub(1);
    s = s.clamp(DEGREE, n_basis - 1);
    let mut n = [0.0; 4];
    n[0] = 1.0;
    let mut left = [0.0; 4];
    let mut right = [0.0; 4];
    for d in 1..=DEGREE {
        left[d] = x - knots[s + 1 - d];
        right[d] = knots[s + d] - x;
        let mut saved = 0.0;
        for r in 0..d {
            let denom = right[r + 1] + left[d - r];
            let tmp = if denom != 0.0 { n[r] / denom } else { 0.0 };
            n[r] = saved + right[r + 1] * tmp;
            saved = left[d - r] * tmp;
        }
        n[d] = saved;
    }
    (s - DEGREE, n)
}

fn greville(knots: &[f64]) -> Vec<f64> {
    let n_basis = knots.len() - DEGREE - 1;
    (0..n_basis).map(|k| knots[k + 1..=k + DEGREE].iter().sum::<f64>() / DEGREE as f64).collect()
}

/// Second differences of coefficient slopes between Greville abscissae;
/// vanishes exactly on linear functions.
fn penalty(knots: &[f64]) -> DMatrix<f64> {
    let g = greville(knots);
    let q = g.len();
    let mut d = DMatrix::zeros(q.saturating_sub(2), q);
    for r in 0..q.saturating_sub(2) {
        let h1 = g[r + 1] - g[r];
        let h2 = g[r + 2] - g[r + 1];
        d[(r, r)] = 1.0 / h1;
        d[(r, r + 1)] = -1.0 / h1 - 1.0 / h2;
        d[(r, r + 2)] = 1.0 / h2;
    }
    d.transpose() * d
}

fn lambda_grid() -> Vec<f64> {
    (0..25).map(|k| 10f64.powf(-8.0 + 0.5 * k as f64)).collect()
}

fn fit_spline(xs: &[f64], ys: &[f64], interior: usize) -> Smoother {
    let sorted = stats::sorted_copy(xs);
    let lo = sorted[0];
    let hi = sorted[sorted.len() - 1];
    let mut inner: Vec<f64> = (1..=interior)
        .map(|k| stats::quantile_sorted(&sorted, k as f64 / (interior + 1) as f64))
        .filter(|&v| v > lo && v < hi)
        .collect();
    inner.dedup();
    let mut knots = vec![lo; DEGREE + 1];
    knots.extend(inner);
    knots.extend(vec![hi; DEGREE + 1]);
    let q = knots.len() - DEGREE - 1;

    let mut xtx = DMatrix::<f64>::zeros(q, q);
    let mut xty = DVector::<f64>::zeros(q);
    for (&x, &y) in xs.iter().zip(ys) {
        let (s, b) = basis_at(&knots, x);
        for a in 0..4 {
            xty[s + a] += b[a] * y;
            for c in 0..4 {
                xtx[(s + a, s + c)] += b[a] * b[c];
            }
        }
    }
    let yty: f64 = ys.iter().map(|y| y * y).sum();
    let pen = penalty(&knots);
    let scale = xtx.trace() / pen.trace().max(f64::MIN_POSITIVE);
    let ridge = 1e-10 * xtx.trace() / q as f64;
    let n = xs.len() as f64;

    let mut best: Option<(f64, f64, DVector<f64>)> = None;
    for lam in lambda_grid() {
        let mut a = &xtx + &pen * (lam * scale);
        for k in 0..q {
            a[(k, k)] += ridge;
        }
        let Some(chol) = a.cholesky() else { continue };
        let coef = chol.solve(&xty);
        let edf = chol.solve(&xtx).trace();
        let rss = (yty - 2.0 * coef.dot(&xty) + coef.dot(&(&xtx * &coef))).max(0.0);
        let denom = (n - edf).max(1e-8);
        let gcv = n * rss / (denom * denom);
        if best.as_ref().is_none_or(|b| gcv < b.0) {
            best = Some((gcv, lam * scale, coef));
        }
    }
    match best {
        Some((_, lambda, coef)) => Smoother::Spline { knots, coefficients: coef.iter().copied().collect(), lambda },
        None => piecewise_linear(xs, ys),
    }
}

fn grouped_means(xs: &[f64], ys: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut pairs: Vec<(f64, f64)> = xs.iter().copied().zip(ys.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut ux = Vec::new();
    let mut uy = Vec::new();
    let mut cnt = Vec::new();
    for (x, y) in pairs {
        if ux.last() == Some(&x) {
            *uy.last_mut().unwrap() += y;
            *cnt.last_mut().unwrap() += 1.0;
        } else {
            ux.push(x);
            uy.push(y);
            cnt.push(1.0);
        }
    }
    let means = uy.iter().zip(&cnt).map(|(s, c)| s / c).collect();
    (ux, means)
}

fn piecewise_linear(xs: &[f64], ys: &[f64]) -> Smoother {
    let (xs, ys) = grouped_means(xs, ys);
    Smoother::PiecewiseLinear { xs, ys }
}

impl Smoother {
    /// Fit `ys` against numeric `xs`. Knots are reduced when there are few
    /// distinct x values; below four a linear interpolant is used.
    pub fn fit(xs: &[f64], ys: &[f64], interior_knots: usize) -> Smoother {
        let distinct = stats::dedup_sorted(stats::sorted_copy(xs)).len();
        if distinct < DEGREE + 1 {
            return piecewise_linear(xs, ys);
        }
        fit_spline(xs, ys, interior_knots.min(distinct - (DEGREE + 1)))
    }

    pub fn fit_categorical(codes: &[f64], ys: &[f64]) -> Smoother {
        let (codes, means) = grouped_means(codes, ys);
        Smoother::CategoryMeans { codes, means }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Smoother::Spline { knots, coefficients, .. } => {
                let (s, b) = basis_at(knots, x);
                (0..4).map(|a| b[a] * coefficients[s + a]).sum()
            }
            Smoother::PiecewiseLinear { xs, ys } => {
                if xs.len() == 1 || x <= xs[0] {
                    return ys[0];
                }
                let k = xs.partition_point(|&v| v < x);
                if k >= xs.len() {
                    return ys[ys.len() - 1];
                }
                let t = (x - xs[k - 1]) / (xs[k] - xs[k - 1]);
                ys[k - 1] + t * (ys[k] - ys[k - 1])
            }
            Smoother::CategoryMeans { codes, means } => match codes.iter().position(|&c| c == x) {
                Some(k) => means[k],
                None => f64::NAN,
            },
        }
    }

    pub fn rss(&self, xs: &[f64], ys: &[f64]) -> f64 {
        xs.iter().zip(ys).map(|(&x, &y)| (y - self.eval(x)).powi(2)).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partition_of_unity() {
        let s = fit_spline(&(0..50).map(|i| (i as f64 / 49.0).powi(2)).collect::<Vec<_>>(), &vec![1.0; 50], 6);
        if let Smoother::Spline { knots, .. } = &s {
            for x in [0.0, 0.013, 0.5, 0.77, 1.0] {
                let (_, b) = basis_at(knots, x);
                assert!((b.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        } else {
            panic!("expected spline");
        }
    }

    #[test]
    fn reproduces_a_line_with_uneven_knots() {
        let xs: Vec<f64> = (0..80).map(|i| ((i as f64) / 79.0).powi(3) * 4.0 - 1.0).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 0.7 - 2.5 * x).collect();
        let s = Smoother::fit(&xs, &ys, DEFAULT_INTERIOR_KNOTS);
        for &x in &xs {
            assert!((s.eval(x) - (0.7 - 2.5 * x)).abs() < 1e-6);
        }
    }

    #[test]
    fn category_means() {
        let s = Smoother::fit_categorical(&[0.0, 0.0, 0.0, 1.0, 1.0], &[1.0, 1.0, 1.0, 2.0, 2.0]);
        assert_eq!(s.eval(0.0), 1.0);
        assert_eq!(s.eval(1.0), 2.0);
    }

    #[test]
    fn few_points_interpolate() {
        let s = Smoother::fit(&[0.0, 1.0, 2.0], &[0.0, 2.0, 0.0], 10);
        assert!(matches!(s, Smoother::PiecewiseLinear { .. }));
        assert_eq!(s.eval(0.5), 1.0);
    }

    #[test]
    fn smooths_noisy_sine() {
        let xs: Vec<f64> = (0..200).map(|i| i as f64 / 199.0).collect();
        let ys: Vec<f64> = xs
            .iter()
            .enumerate()
            .map(|(i, x)| (6.0 * x).sin() + if i % 2 == 0 { 0.1 } else { -0.1 })
            .collect();
        let s = Smoother::fit(&xs, &ys, DEFAULT_INTERIOR_KNOTS);
        let err: f64 = xs.iter().map(|&x| (s.eval(x) - (6.0 * x).sin()).abs()).fold(0.0, f64::max);
        assert!(err < 0.1, "max err {err}");
    }
}

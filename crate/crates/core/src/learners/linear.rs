use nalgebra::{DMatrix, DVector};
use ndarray::ArrayView2;

use super::{check_width, Predictor};
use crate::error::{GadgetError, Result};

/// Least squares via SVD; rank-deficient designs get the minimum-norm solution.
fn least_squares(design: DMatrix<f64>, y: &[f64]) -> Result<DVector<f64>> {
    let target = DVector::from_column_slice(y);
    let svd = design.svd(true, true);
    let eps = 1e-10 * svd.singular_values.max().max(1.0);
    svd.solve(&target, eps).map_err(|e| GadgetError::Numeric(format!("least squares failed: {e}")))
}

/// Ordinary least squares with intercept.
#[derive(Debug, Clone)]
pub struct LinearModel {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
}

impl LinearModel {
    pub fn fit(x: ArrayView2<'_, f64>, y: &[f64]) -> Result<Self> {
        let (n, p) = x.dim();
        let design = DMatrix::from_fn(n, p + 1, |i, j| if j == 0 { 1.0 } else { x[[i, j - 1]] });
        let beta = least_squares(design, y)?;
        Ok(LinearModel { intercept: beta[0], coefficients: beta.iter().skip(1).copied().collect() })
    }

    pub fn from_coefficients(intercept: f64, coefficients: Vec<f64>) -> Self {
        LinearModel { intercept, coefficients }
    }
}

impl Predictor for LinearModel {
    fn n_features(&self) -> usize {
        self.coefficients.len()
    }

    fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        check_width(self.coefficients.len(), &x)?;
        Ok(x.outer_iter()
            .map(|row| self.intercept + row.iter().zip(&self.coefficients).map(|(a, b)| a * b).sum::<f64>())
            .collect())
    }

    fn name(&self) -> &str {
        "linear"
    }
}

/// OLS on main effects plus every pairwise product `x_a * x_b` (a < b).
#[derive(Debug, Clone)]
pub struct LinearWithInteractions {
    p: usize,
    intercept: f64,
    main: Vec<f64>,
    /// Coefficients for pairs in lexicographic (a, b) order.
    pairs: Vec<f64>,
}

impl LinearWithInteractions {
    pub fn fit(x: ArrayView2<'_, f64>, y: &[f64]) -> Result<Self> {
        let (n, p) = x.dim();
        let n_pairs = p * (p - 1) / 2;
        let mut design = DMatrix::zeros(n, 1 + p + n_pairs);
        for i in 0..n {
            design[(i, 0)] = 1.0;
            for j in 0..p {
                design[(i, 1 + j)] = x[[i, j]];
            }
            let mut col = 1 + p;
            for a in 0..p {
                for b in (a + 1)..p {
                    design[(i, col)] = x[[i, a]] * x[[i, b]];
                    col += 1;
                }
            }
        }
        let beta = least_squares(design, y)?;
        Ok(LinearWithInteractions {
            p,
            intercept: beta[0],
            main: beta.iter().skip(1).take(p).copied().collect(),
            pairs: beta.iter().skip(1 + p).copied().collect(),
        })
    }

    pub fn pair_coefficient(&self, a: usize, b: usize) -> f64 {
        let (a, b) = if a < b { (a, b) } else { (b, a) };
        let mut idx = 0;
        for i in 0..a {
            idx += self.p - i - 1;
        }
        self.pairs[idx + (b - a - 1)]
    }
}

impl Predictor for LinearWithInteractions {
    fn n_features(&self) -> usize {
        self.p
    }

    fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        check_width(self.p, &x)?;
        Ok(x.outer_iter()
            .map(|row| {
                let mut v = self.intercept;
                for j in 0..self.p {
                    v += self.main[j] * row[j];
                }
                let mut idx = 0;
                for a in 0..self.p {
                    for b in (a + 1)..self.p {
                        v += self.pairs[idx] * row[a] * row[b];
                        idx += 1;
                    }
                }
                v
            })
            .collect())
    }

    fn name(&self) -> &str {
        "linear-interactions"
    }
}

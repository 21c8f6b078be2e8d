use ndarray::{Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{GadgetError, Result};
use crate::learners::Predictor;

/// ICE values: entry `(r, k)` is the prediction for `rows[r]` with feature `j`
/// set to `grid[k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IceMatrix {
    pub feature: usize,
    pub grid: Vec<f64>,
    pub rows: Vec<usize>,
    pub values: Array2<f64>,
    pub centered: bool,
    /// Row means subtracted when centering (zeros while uncentered).
    pub constants: Vec<f64>,
}

const BLOCK_ROWS: usize = 64;

/// Predict with feature `j` of each row replaced by every grid value.
pub fn ice(pr: &dyn Predictor, d: &Dataset, rows: &[usize], j: usize, grid: &[f64]) -> Result<IceMatrix> {
    if grid.is_empty() {
        return Err(GadgetError::Usage("ICE grid is empty".into()));
    }
    if rows.is_empty() {
        return Err(GadgetError::Data("ICE requested on an empty row set".into()));
    }
    let m = grid.len();
    let p = d.n_features();
    let blocks: Vec<Result<Vec<f64>>> = rows
        .par_chunks(BLOCK_ROWS)
        .map(|chunk| {
            let mut x = Array2::zeros((chunk.len() * m, p));
            for (r, &i) in chunk.iter().enumerate() {
                let src = d.row(i);
                for (k, &g) in grid.iter().enumerate() {
                    let mut dst = x.row_mut(r * m + k);
                    dst.assign(&src);
                    dst[j] = g;
                }
            }
            pr.predict(x.view())
        })
        .collect();
    let mut flat = Vec::with_capacity(rows.len() * m);
    for b in blocks {
        flat.extend(b?);
    }
    let values = Array2::from_shape_vec((rows.len(), m), flat).map_err(|e| GadgetError::Numeric(e.to_string()))?;
    Ok(IceMatrix { feature: j, grid: grid.to_vec(), rows: rows.to_vec(), values, centered: false, constants: vec![0.0; rows.len()] })
}

/// Subtract each curve's own grid mean.
pub fn center_ice(mut m: IceMatrix) -> IceMatrix {
    if m.centered {
        return m;
    }
    let means = m.values.mean_axis(Axis(1)).expect("grid is nonempty");
    for (mut row, &c) in m.values.outer_iter_mut().zip(means.iter()) {
        row -= c;
    }
    m.constants = means.to_vec();
    m.centered = true;
    m
}

/// Column means of the ICE matrix.
pub fn pd_values(m: &IceMatrix) -> Vec<f64> {
    m.values.mean_axis(Axis(0)).expect("rows are nonempty").to_vec()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::LinearModel;
    use ndarray::array;

    struct Product;
    impl Predictor for Product {
        fn n_features(&self) -> usize {
            2
        }
        fn predict(&self, x: ndarray::ArrayView2<'_, f64>) -> Result<Vec<f64>> {
            Ok(x.outer_iter().map(|r| r[0] * r[1]).collect())
        }
        fn name(&self) -> &str {
            "product"
        }
    }

    #[test]
    fn substitution() {
        let d = Dataset::from_numeric(array![[9.0, 5.0]], vec![0.0]).unwrap();
        let f = LinearModel::from_coefficients(0.0, vec![1.0, 1.0]);
        let m = ice(&f, &d, &[0], 0, &[0.0, 1.0]).unwrap();
        assert_eq!(m.values.row(0).to_vec(), vec![5.0, 6.0]);
        let c = center_ice(m);
        assert_eq!(c.values.row(0).to_vec(), vec![-0.5, 0.5]);
        assert_eq!(c.constants, vec![5.5]);
    }

    #[test]
    fn product_model_oracle() {
        let d = Dataset::from_numeric(array![[3.0, 1.0], [7.0, 2.0]], vec![0.0, 0.0]).unwrap();
        let m = ice(&Product, &d, &[0, 1], 0, &[0.0, 1.0]).unwrap();
        // direct substitution: row i gives (0 * x2, 1 * x2)
        assert_eq!(m.values, array![[0.0, 1.0], [0.0, 2.0]]);
        assert_eq!(pd_values(&m), vec![0.0, 1.5]);
        let c = center_ice(m);
        assert_eq!(c.values, array![[-0.5, 0.5], [-1.0, 1.0]]);
        let pd = pd_values(&c);
        assert!((pd.iter().sum::<f64>()).abs() < 1e-12);
    }
}

use std::collections::HashMap;
use std::path::Path;

use ndarray::ArrayView2;

use super::{check_width, Predictor};
use crate::data::Dataset;
use crate::error::{GadgetError, Result};

/// Predictions produced elsewhere, answered by exact lookup of the query row.
///
/// Archives are CSV files with either `row_id,prediction` columns (one
/// prediction per dataset row) or `row_id,feature,grid_value,prediction`
/// columns (an ICE archive: the prediction for dataset row `row_id` with
/// `feature` overwritten by `grid_value`). `row_id` is 0-based; `feature` is a
/// column name or a 0-based index.
///
/// Coverage required per effect method:
/// * PD needs the ICE archive for every feature in S and Z on its grid.
/// * ALE needs the ICE archive at every interval boundary, which in general
///   differs from the PD grid, so an ICE-only archive usually fails.
/// * SD needs every coalition-by-background row and is rarely practical.
#[derive(Debug, Clone)]
pub struct ExternalTable {
    p: usize,
    table: HashMap<Vec<u64>, f64>,
}

fn key(row: impl Iterator<Item = f64>) -> Vec<u64> {
    // normalise -0.0 so that the lookup does not depend on the sign of zero
    row.map(|v| if v == 0.0 { 0u64 } else { v.to_bits() }).collect()
}

impl ExternalTable {
    pub fn new(p: usize) -> Self {
        ExternalTable { p, table: HashMap::new() }
    }

    pub fn insert(&mut self, row: &[f64], prediction: f64) {
        self.table.insert(key(row.iter().copied()), prediction);
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    /// One prediction per dataset row, aligned by position.
    pub fn from_predictions(d: &Dataset, predictions: &[f64]) -> Result<Self> {
        if predictions.len() != d.n_rows() {
            return Err(GadgetError::Data(format!(
                "prediction vector has {} entries, dataset has {} rows",
                predictions.len(),
                d.n_rows()
            )));
        }
        let mut t = ExternalTable::new(d.n_features());
        for (i, &pred) in predictions.iter().enumerate() {
            t.insert(d.row(i).as_slice().unwrap_or(&d.row(i).to_vec()), pred);
        }
        Ok(t)
    }

    pub fn from_archive(d: &Dataset, path: &Path) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
        let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.to_ascii_lowercase()).collect();
        let col = |name: &str| headers.iter().position(|h| h == name);
        let row_col = col("row_id").ok_or_else(|| GadgetError::Data("archive lacks a row_id column".into()))?;
        let pred_col = col("prediction").ok_or_else(|| GadgetError::Data("archive lacks a prediction column".into()))?;
        let ice = match (col("feature"), col("grid_value")) {
            (Some(f), Some(g)) => Some((f, g)),
            (None, None) => None,
            _ => return Err(GadgetError::Data("archive needs both feature and grid_value columns".into())),
        };
        let mut t = ExternalTable::new(d.n_features());
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let bad = |what: &str| GadgetError::Data(format!("archive line {}: invalid {what}", line + 2));
            let i: usize = rec.get(row_col).and_then(|s| s.parse().ok()).ok_or_else(|| bad("row_id"))?;
            if i >= d.n_rows() {
                return Err(bad("row_id (out of range)"));
            }
            let pred: f64 = rec.get(pred_col).and_then(|s| s.parse().ok()).ok_or_else(|| bad("prediction"))?;
            let mut row = d.row(i).to_vec();
            if let Some((fc, gc)) = ice {
                let fname = rec.get(fc).ok_or_else(|| bad("feature"))?;
                let j = d
                    .feature_index(fname)
                    .or_else(|| fname.parse::<usize>().ok().filter(|&j| j < d.n_features()))
                    .ok_or_else(|| bad("feature"))?;
                row[j] = rec.get(gc).and_then(|s| s.parse().ok()).ok_or_else(|| bad("grid_value"))?;
            }
            t.insert(&row, pred);
        }
        Ok(t)
    }
}

impl Predictor for ExternalTable {
    fn n_features(&self) -> usize {
        self.p
    }

    fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        check_width(self.p, &x)?;
        x.outer_iter()
            .map(|r| {
                self.table.get(&key(r.iter().copied())).copied().ok_or_else(|| {
                    let vals: Vec<String> = r.iter().map(|v| v.to_string()).collect();
                    GadgetError::CoverageGap(format!("row ({})", vals.join(", ")))
                })
            })
            .collect()
    }

    fn name(&self) -> &str {
        "external-table"
    }

    fn trainable(&self) -> bool {
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use std::io::Write;

    fn toy() -> Dataset {
        Dataset::from_numeric(array![[1.0, 2.0], [3.0, 4.0]], vec![0.0, 1.0]).unwrap()
    }

    #[test]
    fn lookup_returns_stored_prediction() {
        let d = toy();
        let t = ExternalTable::from_predictions(&d, &[10.0, 20.0]).unwrap();
        assert_eq!(t.predict(d.x().view()).unwrap(), vec![10.0, 20.0]);
    }

    #[test]
    fn unarchived_query_is_a_coverage_gap() {
        let t = ExternalTable::from_predictions(&toy(), &[10.0, 20.0]).unwrap();
        let err = t.predict(array![[9.0, 9.0]].view()).unwrap_err();
        assert!(matches!(err, GadgetError::CoverageGap(_)));
        assert!(err.to_string().contains("9, 9"));
    }

    #[test]
    fn ice_archive_substitutes_grid_value() {
        let d = toy();
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "row_id,feature,grid_value,prediction\n0,x1,0,5\n1,x2,7.5,6").unwrap();
        let t = ExternalTable::from_archive(&d, f.path()).unwrap();
        assert_eq!(t.predict(array![[0.0, 2.0], [3.0, 7.5]].view()).unwrap(), vec![5.0, 6.0]);
        assert!(!t.trainable());
    }
}

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::engine::FeatureState;
use super::tree::GadgetTree;
use crate::data::{make_grid, Dataset};
use crate::effects::{ale_curve, sd_curve, CurveMethod, EffectCurve, BAND_Z};
use crate::error::{GadgetError, Result};
use crate::learners::Predictor;
use crate::stats;

/// Effect curves of every feature of interest within one leaf.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeafEffects {
    pub node: usize,
    pub subspace: String,
    pub n_rows: usize,
    pub curves: Vec<EffectCurve>,
}

pub fn regional_effects(tree: &GadgetTree, d: &Dataset) -> Result<Vec<LeafEffects>> {
    let cfg = &tree.config;
    let mut out = Vec::new();
    for leaf in tree.leaves() {
        let st = tree.state(leaf.id).ok_or_else(|| GadgetError::Numeric(format!("leaf {} has no stored state", leaf.id)))?;
        let desc = leaf.subspace.describe(d);
        let mut curves = Vec::with_capacity(cfg.s.len());
        for (pos, &j) in cfg.s.iter().enumerate() {
            let curve = match &st.features[pos] {
                FeatureState::Pd { mask } => {
                    let grid = tree.engine.pd_grid(pos).expect("PD engine");
                    let ice = tree.engine.pd_ice(pos).expect("PD engine");
                    pd_leaf_curve(j, grid, ice, &st.rows, mask)
                }
                FeatureState::Ale { der, .. } => match der {
                    Some(der) => ale_curve(der),
                    None => {
                        let v = d.value(st.rows[0], j);
                        EffectCurve {
                            feature: j,
                            feature_name: String::new(),
                            method: CurveMethod::AleCentered,
                            subspace: String::new(),
                            grid: vec![v],
                            values: vec![0.0],
                            heterogeneity: vec![0.0],
                        }
                    }
                },
                FeatureState::Sd { phi } => {
                    let full = make_grid(d, j, cfg.grid_size, cfg.grid_mode)?;
                    let grid: Vec<f64> = full.points.into_iter().filter(|&g| leaf.subspace.admits(j, g)).collect();
                    let xs = d.feature_values(j, &st.rows);
                    sd_curve(j, phi, &xs, &grid, d.column(j).is_categorical(), cfg.interior_knots).curve
                }
            };
            curves.push(curve.with_labels(d.column(j).name.clone(), desc.clone()));
        }
        out.push(LeafEffects { node: leaf.id, subspace: desc, n_rows: leaf.rows.len(), curves });
    }
    Ok(out)
}

fn pd_leaf_curve(j: usize, grid: &[f64], ice: &ndarray::Array2<f64>, rows: &[usize], mask: &[bool]) -> EffectCurve {
    let feasible: Vec<usize> = mask.iter().enumerate().filter(|(_, &m)| m).map(|(k, _)| k).collect();
    let n = rows.len() as f64;
    let mut s1 = vec![0.0; feasible.len()];
    let mut s2 = vec![0.0; feasible.len()];
    for &i in rows {
        let row = ice.row(i);
        let c = feasible.iter().map(|&k| row[k]).sum::<f64>() / feasible.len().max(1) as f64;
        for (a, &k) in feasible.iter().enumerate() {
            let v = row[k] - c;
            s1[a] += v;
            s2[a] += v * v;
        }
    }
    let values: Vec<f64> = s1.iter().map(|s| s / n).collect();
    let heterogeneity = s1.iter().zip(&s2).map(|(a, b)| BAND_Z * ((b - a * a / n).max(0.0) / n).sqrt()).collect();
    EffectCurve {
        feature: j,
        feature_name: String::new(),
        method: CurveMethod::PdCentered,
        subspace: String::new(),
        grid: feasible.iter().map(|&k| grid[k]).collect(),
        values,
        heterogeneity,
    }
}

/// Least-squares slope of a curve's values against its grid.
pub fn curve_slope(c: &EffectCurve) -> f64 {
    let mx = stats::mean(&c.grid);
    let my = stats::mean(&c.values);
    let sxy: f64 = c.grid.iter().zip(&c.values).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = c.grid.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx > 0.0 {
        sxy / sxx
    } else {
        0.0
    }
}

/// Curve value at `x` by linear interpolation, constant beyond the ends.
pub fn interpolate(c: &EffectCurve, x: f64) -> f64 {
    let g = &c.grid;
    if g.is_empty() {
        return 0.0;
    }
    if x <= g[0] {
        return c.values[0];
    }
    let k = g.partition_point(|&v| v < x);
    if k >= g.len() {
        return c.values[g.len() - 1];
    }
    let t = (x - g[k - 1]) / (g[k] - g[k - 1]);
    c.values[k - 1] + t * (c.values[k] - c.values[k - 1])
}

/// R² of regressing the model's predictions within a leaf on an intercept
/// plus the leaf's univariate curves evaluated at each row.
pub fn decomposition_r2(leaf: &LeafEffects, tree: &GadgetTree, d: &Dataset, pr: &dyn Predictor) -> Result<f64> {
    let rows = &tree.nodes[leaf.node].rows;
    let xs = d.select_rows(rows)?;
    let y = pr.predict(xs.x().view())?;
    let q = leaf.curves.len() + 1;
    let design = DMatrix::from_fn(rows.len(), q, |r, c| {
        if c == 0 {
            1.0
        } else {
            let curve = &leaf.curves[c - 1];
            interpolate(curve, d.value(rows[r], curve.feature))
        }
    });
    let svd = design.clone().svd(true, true);
    let beta = svd
        .solve(&DVector::from_column_slice(&y), 1e-10)
        .map_err(|e| GadgetError::Numeric(format!("decomposition regression failed: {e}")))?;
    let fitted = design * beta;
    Ok(stats::r_squared(&y, fitted.as_slice()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(grid: Vec<f64>, values: Vec<f64>) -> EffectCurve {
        let n = grid.len();
        EffectCurve {
            feature: 0,
            feature_name: "x".into(),
            method: CurveMethod::PdCentered,
            subspace: "all".into(),
            grid,
            values,
            heterogeneity: vec![0.0; n],
        }
    }

    #[test]
    fn slope_and_interpolation() {
        let c = curve(vec![0.0, 1.0, 2.0], vec![1.0, 3.0, 5.0]);
        assert!((curve_slope(&c) - 2.0).abs() < 1e-12);
        assert_eq!(interpolate(&c, 0.5), 2.0);
        assert_eq!(interpolate(&c, -3.0), 1.0);
        assert_eq!(interpolate(&c, 9.0), 5.0);
    }

    #[test]
    fn pd_leaf_band_is_zero_for_parallel_curves() {
        let ice = ndarray::array![[0.0, 1.0, 2.0], [5.0, 6.0, 7.0]];
        let c = pd_leaf_curve(0, &[0.0, 1.0, 2.0], &ice, &[0, 1], &[true, true, true]);
        assert_eq!(c.values, vec![-1.0, 0.0, 1.0]);
        assert!(c.heterogeneity.iter().all(|h| h.abs() < 1e-12));
    }
}

//! Local feature effects and the effect curves built from them.

mod ale;
mod ice;
mod shapley;
mod smoother;

use serde::{Deserialize, Serialize};

pub use ale::{
    ale_boundaries, ale_derivatives, ale_derivatives_on, ale_uncentered, ale_values, ale_weighted_mean,
    default_interval_count, interval_of, AleDerivatives,
};
pub use ice::{center_ice, ice, pd_values, IceMatrix};
pub use shapley::{
    background_sample, phi_from_coalitions, shapley, shapley_weights, CoalitionTensor, ShapleyConfig, ShapleyEstimator,
    ShapleyMatrix, DEFAULT_MAX_BACKGROUND, MAX_EXACT_FEATURES,
};
pub use smoother::{Smoother, DEFAULT_INTERIOR_KNOTS};

use crate::stats;

pub const BAND_Z: f64 = 1.96;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CurveMethod {
    Pd,
    PdCentered,
    AleCentered,
    Sd,
}

/// A feature's (regional) effect evaluated on a grid, with the remaining
/// heterogeneity of the local effects at each grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectCurve {
    pub feature: usize,
    pub feature_name: String,
    pub method: CurveMethod,
    pub subspace: String,
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub heterogeneity: Vec<f64>,
}

impl EffectCurve {
    pub fn with_labels(mut self, feature_name: impl Into<String>, subspace: impl Into<String>) -> Self {
        self.feature_name = feature_name.into();
        self.subspace = subspace.into();
        self
    }
}

/// PD curve from an ICE matrix. The band is `1.96 * sd` of the centered ICE
/// values at each grid point.
pub fn pd_curve(m: &IceMatrix) -> EffectCurve {
    let values = pd_values(m);
    let centered = if m.centered { m.clone() } else { center_ice(m.clone()) };
    let heterogeneity = centered
        .values
        .columns()
        .into_iter()
        .map(|c| BAND_Z * stats::std_dev(&c.to_vec()))
        .collect();
    EffectCurve {
        feature: m.feature,
        feature_name: String::new(),
        method: if m.centered { CurveMethod::PdCentered } else { CurveMethod::Pd },
        subspace: String::new(),
        grid: m.grid.clone(),
        values,
        heterogeneity,
    }
}

/// Centered ALE at the interval boundaries. The heterogeneity track is the
/// standard deviation of the differences in the interval ending at each
/// boundary (the first boundary repeats the first interval).
pub fn ale_curve(der: &AleDerivatives) -> EffectCurve {
    let sds = der.interval_sds();
    let mut heterogeneity = Vec::with_capacity(der.boundaries.len());
    heterogeneity.push(sds[0]);
    heterogeneity.extend(sds.iter().copied());
    EffectCurve {
        feature: der.feature,
        feature_name: String::new(),
        method: CurveMethod::AleCentered,
        subspace: String::new(),
        grid: der.boundaries.clone(),
        values: ale_values(der),
        heterogeneity,
    }
}

/// Result of smoothing Shapley values against their feature values.
#[derive(Debug, Clone)]
pub struct SdFit {
    pub curve: EffectCurve,
    pub smoother: Smoother,
    pub rss: f64,
}

/// Fit the SD smoother to `(xs, phi)` and evaluate it on `grid`.
///
/// The heterogeneity at a grid point is the standard deviation of the
/// residuals of the points closest to it.
pub fn sd_curve(feature: usize, phi: &[f64], xs: &[f64], grid: &[f64], categorical: bool, interior_knots: usize) -> SdFit {
    let smoother = if categorical { Smoother::fit_categorical(xs, phi) } else { Smoother::fit(xs, phi, interior_knots) };
    let residuals: Vec<f64> = xs.iter().zip(phi).map(|(&x, &y)| y - smoother.eval(x)).collect();
    let rss = residuals.iter().map(|r| r * r).sum();
    let mut bins: Vec<Vec<f64>> = vec![Vec::new(); grid.len()];
    for (&x, &r) in xs.iter().zip(&residuals) {
        bins[nearest(grid, x)].push(r);
    }
    let heterogeneity = bins.iter().map(|b| stats::std_dev(b)).collect();
    let values = grid.iter().map(|&g| smoother.eval(g)).collect();
    SdFit {
        curve: EffectCurve {
            feature,
            feature_name: String::new(),
            method: CurveMethod::Sd,
            subspace: String::new(),
            grid: grid.to_vec(),
            values,
            heterogeneity,
        },
        smoother,
        rss,
    }
}

fn nearest(grid: &[f64], x: f64) -> usize {
    let k = grid.partition_point(|&g| g < x);
    if k == 0 {
        0
    } else if k >= grid.len() {
        grid.len() - 1
    } else if (x - grid[k - 1]) <= (grid[k] - x) {
        k - 1
    } else {
        k
    }
}

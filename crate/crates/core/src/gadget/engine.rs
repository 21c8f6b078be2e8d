//! Per-method local effects attached to tree nodes, and their risks.

use std::sync::Arc;

use log::{debug, warn};
use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::config::{GadgetConfig, Method};
use crate::data::{make_grid, Dataset, Predicate, Subspace};
use crate::effects::{
    ale_derivatives, background_sample, default_interval_count, ice, shapley_weights, AleDerivatives, CoalitionTensor,
    Smoother,
};
use crate::error::{GadgetError, Result};
use crate::learners::Predictor;
use crate::rng::{indexed_rng, Stream};
use crate::stats;

/// Local effects of one feature of interest within one node.
#[derive(Debug, Clone)]
pub enum FeatureState {
    /// Feasible grid points (the ICE values live in the engine).
    Pd { mask: Vec<bool> },
    /// `None` when the feature is constant within the node.
    Ale { der: Option<Arc<AleDerivatives>>, repaired: bool },
    /// Shapley values aligned with the node's rows.
    Sd { phi: Arc<Vec<f64>> },
}

#[derive(Debug, Clone)]
pub struct NodeState {
    pub rows: Vec<usize>,
    pub subspace: Subspace,
    pub features: Vec<FeatureState>,
    /// Risk per feature of interest, aligned with `S`.
    pub risks: Vec<f64>,
    /// Background positions used for this node's Shapley values.
    sd_background: Vec<usize>,
}

impl NodeState {
    pub fn total_risk(&self) -> f64 {
        self.risks.iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug)]
enum Kind {
    Pd { grids: Vec<Vec<f64>>, ice: Vec<Array2<f64>> },
    Ale,
    Sd { tensor: CoalitionTensor, weights: Vec<f64> },
}

#[derive(Debug)]
pub struct EffectEngine {
    pub method: Method,
    pub s: Vec<usize>,
    kind: Kind,
    intervals: Option<usize>,
    repair: bool,
    repair_window: f64,
    recalc: bool,
    knots: usize,
    seed: u64,
}

/// Positions in `parent` of every element of `child` (both ascending).
pub(crate) fn subset_positions(parent: &[usize], child: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(child.len());
    let mut p = 0;
    for &c in child {
        while parent[p] != c {
            p += 1;
        }
        out.push(p);
    }
    out
}

impl EffectEngine {
    pub fn build(cfg: &GadgetConfig, d: &Dataset, pr: &dyn Predictor) -> Result<Self> {
        let all = d.all_rows();
        let kind = match cfg.method {
            Method::Pd => {
                let mut grids = Vec::with_capacity(cfg.s.len());
                let mut ices = Vec::with_capacity(cfg.s.len());
                for &j in &cfg.s {
                    let g = make_grid(d, j, cfg.grid_size, cfg.grid_mode)?;
                    ices.push(ice(pr, d, &all, j, &g.points)?.values);
                    grids.push(g.points);
                }
                Kind::Pd { grids, ice: ices }
            }
            Method::Ale => Kind::Ale,
            Method::Sd => {
                let bg = background_sample(&all, cfg.max_background, cfg.seed);
                let tensor = CoalitionTensor::build(pr, d, &all, &bg)?;
                Kind::Sd { tensor, weights: shapley_weights(d.n_features()) }
            }
        };
        Ok(EffectEngine {
            method: cfg.method,
            s: cfg.s.clone(),
            kind,
            intervals: cfg.ale_intervals,
            repair: cfg.ale_repair,
            repair_window: cfg.repair_window,
            recalc: cfg.sd_recalculate,
            knots: cfg.interior_knots,
            seed: cfg.seed,
        })
    }

    pub fn pd_grid(&self, pos: usize) -> Option<&[f64]> {
        match &self.kind {
            Kind::Pd { grids, .. } => Some(&grids[pos]),
            _ => None,
        }
    }

    pub fn pd_ice(&self, pos: usize) -> Option<&Array2<f64>> {
        match &self.kind {
            Kind::Pd { ice, .. } => Some(&ice[pos]),
            _ => None,
        }
    }

    pub fn root_state(&self, d: &Dataset, pr: &dyn Predictor) -> Result<NodeState> {
        let rows = d.all_rows();
        let subspace = Subspace::root();
        let mut features = Vec::with_capacity(self.s.len());
        let mut sd_background = Vec::new();
        match &self.kind {
            Kind::Pd { grids, .. } => {
                for g in grids {
                    features.push(FeatureState::Pd { mask: vec![true; g.len()] });
                }
            }
            Kind::Ale => {
                for &j in &self.s {
                    let der = ale_derivatives(pr, d, &rows, j, self.interval_count(rows.len()))?;
                    features.push(FeatureState::Ale { der: Some(Arc::new(der)), repaired: false });
                }
            }
            Kind::Sd { tensor, .. } => {
                sd_background = (0..tensor.background.len()).collect();
                features = self.sd_phi(&rows, &sd_background);
            }
        }
        let mut st = NodeState { rows, subspace, features, risks: Vec::new(), sd_background };
        st.risks = self.risks(d, &st);
        Ok(st)
    }

    fn interval_count(&self, n: usize) -> usize {
        self.intervals.unwrap_or_else(|| default_interval_count(n))
    }

    fn sd_phi(&self, rows: &[usize], bg: &[usize]) -> Vec<FeatureState> {
        let Kind::Sd { tensor, weights } = &self.kind else { unreachable!() };
        let mut cols: Vec<Vec<f64>> = vec![Vec::with_capacity(rows.len()); self.s.len()];
        let mut phi = vec![0.0; tensor.p];
        for &i in rows {
            tensor.phi(i, bg, weights, &mut phi);
            for (c, &j) in self.s.iter().enumerate() {
                cols[c].push(phi[j]);
            }
        }
        cols.into_iter().map(|c| FeatureState::Sd { phi: Arc::new(c) }).collect()
    }

    /// Local effects and risks of the child selected by `pred` on feature `z`.
    #[allow(clippy::too_many_arguments)]
    pub fn child_state(
        &self,
        d: &Dataset,
        pr: &dyn Predictor,
        parent: &NodeState,
        z: usize,
        pred: &Predicate,
        side: Side,
        rows: Vec<usize>,
    ) -> Result<NodeState> {
        let subspace = parent.subspace.with(z, pred.clone());
        let pos = subset_positions(&parent.rows, &rows);
        let mut sd_background = Vec::new();
        let features = match &self.kind {
            Kind::Pd { grids, .. } => self
                .s
                .iter()
                .zip(&parent.features)
                .zip(grids)
                .map(|((&j, fs), g)| {
                    let FeatureState::Pd { mask } = fs else { unreachable!() };
                    let mask = if j == z { mask.iter().zip(g).map(|(&m, &v)| m && pred.holds(v)).collect() } else { mask.clone() };
                    FeatureState::Pd { mask }
                })
                .collect(),
            Kind::Ale => {
                let mut out = Vec::with_capacity(self.s.len());
                for (&j, fs) in self.s.iter().zip(&parent.features) {
                    let FeatureState::Ale { der, repaired } = fs else { unreachable!() };
                    if j == z {
                        out.push(self.ale_recompute(d, pr, parent, &rows, j, pred, side)?);
                    } else {
                        let der = der.as_ref().map(|p| Arc::new(subset_derivatives(p, &rows)));
                        out.push(FeatureState::Ale { der, repaired: *repaired });
                    }
                }
                out
            }
            Kind::Sd { tensor, .. } => {
                let bg: Vec<usize> = if self.recalc {
                    let mut in_child = vec![false; d.n_rows()];
                    for &i in &rows {
                        in_child[i] = true;
                    }
                    parent.sd_background.iter().copied().filter(|&b| in_child[tensor.background[b]]).collect()
                } else {
                    Vec::new()
                };
                if bg.is_empty() {
                    if self.recalc {
                        debug!("no background rows inside child; keeping parent Shapley values");
                    }
                    sd_background = parent.sd_background.clone();
                    parent
                        .features
                        .iter()
                        .map(|fs| {
                            let FeatureState::Sd { phi } = fs else { unreachable!() };
                            FeatureState::Sd { phi: Arc::new(pos.iter().map(|&p| phi[p]).collect()) }
                        })
                        .collect()
                } else {
                    let f = self.sd_phi(&rows, &bg);
                    sd_background = bg;
                    f
                }
            }
        };
        let mut st = NodeState { rows, subspace, features, risks: Vec::new(), sd_background };
        st.risks = self.risks(d, &st);
        Ok(st)
    }

    #[allow(clippy::too_many_arguments)]
    fn ale_recompute(
        &self,
        d: &Dataset,
        pr: &dyn Predictor,
        parent: &NodeState,
        rows: &[usize],
        j: usize,
        pred: &Predicate,
        side: Side,
    ) -> Result<FeatureState> {
        let mut der = match ale_derivatives(pr, d, rows, j, self.interval_count(rows.len())) {
            Ok(der) => der,
            Err(GadgetError::DegenerateFeature(_)) => return Ok(FeatureState::Ale { der: None, repaired: false }),
            Err(e) => return Err(e),
        };
        let mut repaired = false;
        if self.repair && !d.column(j).is_categorical() {
            if let Predicate::LessEq { threshold } | Predicate::Greater { threshold } = *pred {
                let parent_vals = d.feature_values(j, &parent.rows);
                let (lo, hi) = parent_vals.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
                let window = self.repair_window * (hi - lo);
                let xs = d.feature_values(j, &der.rows);
                let tag = threshold.to_bits() ^ ((j as u64) << 48) ^ if side == Side::Left { 0 } else { 1 << 63 };
                let mut rng = indexed_rng(self.seed, Stream::Repair, tag);
                repaired = ale_derivative_repair(&mut der, &xs, threshold, window, &mut rng);
            }
        }
        Ok(FeatureState::Ale { der: Some(Arc::new(der)), repaired })
    }

    pub fn risks(&self, d: &Dataset, st: &NodeState) -> Vec<f64> {
        self.s.iter().enumerate().map(|(pos, &j)| self.risk(d, st, pos, j)).collect()
    }

    fn risk(&self, d: &Dataset, st: &NodeState, pos: usize, j: usize) -> f64 {
        match (&self.kind, &st.features[pos]) {
            (Kind::Pd { ice, .. }, FeatureState::Pd { mask }) => pd_risk(&ice[pos], &st.rows, mask),
            (Kind::Ale, FeatureState::Ale { der, .. }) => der.as_ref().map_or(0.0, |d| d.sum_sq_dev()),
            (Kind::Sd { .. }, FeatureState::Sd { phi }) => {
                if st.rows.len() < 2 {
                    return 0.0;
                }
                let xs = d.feature_values(j, &st.rows);
                let sm = if d.column(j).is_categorical() { Smoother::fit_categorical(&xs, phi) } else { Smoother::fit(&xs, phi, self.knots) };
                sm.rss(&xs, phi)
            }
            _ => unreachable!("feature state does not match the engine"),
        }
    }

    /// Number of local-effect values entering feature `pos`'s risk.
    pub fn term_count(&self, st: &NodeState, pos: usize) -> usize {
        match &st.features[pos] {
            FeatureState::Pd { mask } => st.rows.len() * mask.iter().filter(|&&m| m).count(),
            _ => st.rows.len(),
        }
    }
}

/// Sum over feasible grid points of the squared deviations of the centered
/// ICE values from their mean, with curves centered on the feasible points.
pub fn pd_risk(ice: &Array2<f64>, rows: &[usize], mask: &[bool]) -> f64 {
    let feasible: Vec<usize> = mask.iter().enumerate().filter(|(_, &m)| m).map(|(k, _)| k).collect();
    if feasible.len() < 2 || rows.len() < 2 {
        return 0.0;
    }
    let mut s1 = vec![0.0; feasible.len()];
    let mut s2 = vec![0.0; feasible.len()];
    for &i in rows {
        let row = ice.row(i);
        let c = feasible.iter().map(|&k| row[k]).sum::<f64>() / feasible.len() as f64;
        for (a, &k) in feasible.iter().enumerate() {
            let v = row[k] - c;
            s1[a] += v;
            s2[a] += v * v;
        }
    }
    let n = rows.len() as f64;
    s1.iter().zip(&s2).map(|(a, b)| (b - a * a / n).max(0.0)).sum()
}

fn subset_derivatives(der: &AleDerivatives, rows: &[usize]) -> AleDerivatives {
    let pos = subset_positions(&der.rows, rows);
    AleDerivatives {
        feature: der.feature,
        boundaries: der.boundaries.clone(),
        rows: rows.to_vec(),
        interval: pos.iter().map(|&p| der.interval[p]).collect(),
        diffs: pos.iter().map(|&p| der.diffs[p]).collect(),
    }
}

/// Replace derivatives close to a split point when they vary more than twice
/// as much as the rest. `xs` holds the feature values aligned with
/// `der.rows`. Returns whether a replacement happened.
pub fn ale_derivative_repair<R: Rng>(der: &mut AleDerivatives, xs: &[f64], split: f64, window: f64, rng: &mut R) -> bool {
    let near: Vec<usize> = (0..xs.len()).filter(|&r| (xs[r] - split).abs() <= window).collect();
    if near.is_empty() || near.len() == xs.len() {
        return false;
    }
    let far: Vec<f64> = (0..xs.len()).filter(|&r| (xs[r] - split).abs() > window).map(|r| der.diffs[r]).collect();
    if far.len() < 2 {
        return false;
    }
    let near_vals: Vec<f64> = near.iter().map(|&r| der.diffs[r]).collect();
    let sd_near = stats::std_dev(&near_vals);
    let sd_far = stats::std_dev(&far);
    if sd_near <= 2.0 * sd_far {
        return false;
    }
    let mean_far = stats::mean(&far);
    match Normal::new(mean_far, sd_far) {
        Ok(dist) => {
            for &r in &near {
                der.diffs[r] = dist.sample(rng);
            }
        }
        Err(_) => {
            warn!("derivative repair fell back to the far mean");
            for &r in &near {
                der.diffs[r] = mean_far;
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use ndarray::array;

    #[test]
    fn two_centered_values_give_loss_two() {
        // centered values (-1, 1) at the second grid point: rows (1, 0), (-1, 0) after centering
        let ice = array![[1.0, 0.0, -1.0], [-1.0, 0.0, 1.0]];
        let full = pd_risk(&ice, &[0, 1], &[true, true, true]);
        // grid point 0: values (1, -1) -> 2, point 1: 0, point 2: 2
        assert!((full - 4.0).abs() < 1e-12);
        assert_eq!(pd_risk(&ice, &[0], &[true, true, true]), 0.0);
        assert_eq!(pd_risk(&ice, &[0, 1], &[true, false, false]), 0.0);
    }

    #[test]
    fn feasible_recentering() {
        // identical slopes once the first point is dropped
        let ice = array![[5.0, 1.0, 2.0], [-5.0, 3.0, 4.0]];
        assert!(pd_risk(&ice, &[0, 1], &[true, true, true]) > 1.0);
        assert!(pd_risk(&ice, &[0, 1], &[false, true, true]) < 1e-12);
    }

    #[test]
    fn subset_positions_walk() {
        assert_eq!(subset_positions(&[1, 3, 5, 7], &[3, 7]), vec![1, 3]);
    }

    fn toy_der(diffs: Vec<f64>) -> AleDerivatives {
        let n = diffs.len();
        AleDerivatives { feature: 0, boundaries: vec![0.0, 1.0], rows: (0..n).collect(), interval: vec![0; n], diffs }
    }

    #[test]
    fn repair_replaces_only_near_values() {
        let xs: Vec<f64> = (0..20).map(|i| i as f64 / 19.0).collect();
        let mut diffs: Vec<f64> = (0..20).map(|i| 1.0 + 0.01 * (i % 3) as f64).collect();
        diffs[0] = 30.0;
        diffs[1] = -25.0;
        let mut der = toy_der(diffs.clone());
        let mut rng = stream_rng(1, Stream::Repair);
        assert!(ale_derivative_repair(&mut der, &xs, 0.0, 0.06, &mut rng));
        assert!(der.diffs[0].abs() < 2.0 && der.diffs[1].abs() < 2.0);
        assert_eq!(&der.diffs[2..], &diffs[2..]);
    }

    #[test]
    fn repair_noop_cases() {
        let xs: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let mut der = toy_der(vec![1.0; 10]);
        let mut rng = stream_rng(1, Stream::Repair);
        assert!(!ale_derivative_repair(&mut der, &xs, 100.0, 0.5, &mut rng));
        assert!(!ale_derivative_repair(&mut der, &xs, 4.0, 0.5, &mut rng));
    }
}

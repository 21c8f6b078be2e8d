use ndarray::Array2;
use rand::seq::{IndexedRandom, SliceRandom};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{GadgetError, Result};
use crate::learners::Predictor;
use crate::rng::{indexed_rng, stream_rng, Stream};

pub const MAX_EXACT_FEATURES: usize = 12;
pub const DEFAULT_MAX_BACKGROUND: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ShapleyEstimator {
    ExactSubset,
    PermutationMc { samples: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapleyConfig {
    pub estimator: ShapleyEstimator,
    pub max_background: usize,
    pub seed: u64,
}

impl Default for ShapleyConfig {
    fn default() -> Self {
        ShapleyConfig { estimator: ShapleyEstimator::ExactSubset, max_background: DEFAULT_MAX_BACKGROUND, seed: 0 }
    }
}

/// Interventional Shapley values for `rows` (one row of `values` per entry)
/// and the queried `features` (one column each).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapleyMatrix {
    pub features: Vec<usize>,
    pub rows: Vec<usize>,
    pub values: Array2<f64>,
    pub estimator: ShapleyEstimator,
    pub background: Vec<usize>,
}

impl ShapleyMatrix {
    pub fn column_of(&self, j: usize) -> Option<Vec<f64>> {
        let c = self.features.iter().position(|&f| f == j)?;
        Some(self.values.column(c).to_vec())
    }
}

/// Seeded subsample (sorted) of at most `max` rows.
pub fn background_sample(rows: &[usize], max: usize, seed: u64) -> Vec<usize> {
    if rows.len() <= max {
        return rows.to_vec();
    }
    let mut rng = stream_rng(seed, Stream::Shapley);
    let mut pick: Vec<usize> = rows.choose_multiple(&mut rng, max).copied().collect();
    pick.sort_unstable();
    pick
}

/// Weight `|W|! (p - |W| - 1)! / p!` indexed by coalition size.
pub fn shapley_weights(p: usize) -> Vec<f64> {
    let fact = |k: usize| (1..=k).map(|v| v as f64).product::<f64>();
    (0..p).map(|s| fact(s) * fact(p - s - 1) / fact(p)).collect()
}

/// Shapley values of every feature from coalition values `v[W]`, where bit
/// `k` of `W` means feature `k` is taken from the explained row.
pub fn phi_from_coalitions(v: &[f64], p: usize, weights: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|o| *o = 0.0);
    for w in 0..(1usize << p) {
        let size = w.count_ones() as usize;
        for (j, o) in out.iter_mut().enumerate() {
            if w & (1 << j) == 0 {
                *o += weights[size] * (v[w | (1 << j)] - v[w]);
            }
        }
    }
}

/// Predictions `f(x_W^(i), x_-W^(b))` for every explained row `i`, every
/// coalition `W` and every background row `b`.
#[derive(Debug, Clone)]
pub struct CoalitionTensor {
    pub p: usize,
    pub rows: Vec<usize>,
    pub background: Vec<usize>,
    values: Vec<f64>,
}

const MAX_TENSOR_ENTRIES: usize = 1 << 28;

impl CoalitionTensor {
    pub fn build(pr: &dyn Predictor, d: &Dataset, rows: &[usize], background: &[usize]) -> Result<Self> {
        let p = d.n_features();
        check_exact(p)?;
        let nw = 1usize << p;
        let nb = background.len();
        if nb == 0 {
            return Err(GadgetError::Data("Shapley background is empty".into()));
        }
        if rows.len().saturating_mul(nw).saturating_mul(nb) > MAX_TENSOR_ENTRIES {
            return Err(GadgetError::Numeric("Shapley coalition tensor too large; lower max_background".into()));
        }
        let blocks: Vec<Result<Vec<f64>>> = rows.par_iter().map(|&i| coalition_predictions(pr, d, i, background)).collect();
        let mut values = Vec::with_capacity(rows.len() * nw * nb);
        for b in blocks {
            values.extend(b?);
        }
        Ok(CoalitionTensor { p, rows: rows.to_vec(), background: background.to_vec(), values })
    }

    /// Slice over background positions for explained row `r` and coalition `w`.
    pub fn slice(&self, r: usize, w: usize) -> &[f64] {
        let nb = self.background.len();
        let start = (r * (1 << self.p) + w) * nb;
        &self.values[start..start + nb]
    }

    /// Shapley values of all features for row position `r`, averaging over
    /// the background positions in `bg`.
    pub fn phi(&self, r: usize, bg: &[usize], weights: &[f64], out: &mut [f64]) {
        let nw = 1usize << self.p;
        let inv = 1.0 / bg.len() as f64;
        let v: Vec<f64> = (0..nw)
            .map(|w| {
                let s = self.slice(r, w);
                bg.iter().map(|&b| s[b]).sum::<f64>() * inv
            })
            .collect();
        phi_from_coalitions(&v, self.p, weights, out);
    }
}

fn check_exact(p: usize) -> Result<()> {
    if p > MAX_EXACT_FEATURES {
        return Err(GadgetError::Usage(format!(
            "exact Shapley enumeration supports at most {MAX_EXACT_FEATURES} features, got {p}"
        )));
    }
    Ok(())
}

fn coalition_predictions(pr: &dyn Predictor, d: &Dataset, i: usize, background: &[usize]) -> Result<Vec<f64>> {
    let p = d.n_features();
    let nw = 1usize << p;
    let mut x = Array2::zeros((nw * background.len(), p));
    let xi = d.row(i);
    for w in 0..nw {
        for (bpos, &b) in background.iter().enumerate() {
            let xb = d.row(b);
            let mut dst = x.row_mut(w * background.len() + bpos);
            for k in 0..p {
                dst[k] = if w & (1 << k) != 0 { xi[k] } else { xb[k] };
            }
        }
    }
    pr.predict(x.view())
}

pub fn shapley(pr: &dyn Predictor, d: &Dataset, rows: &[usize], features: &[usize], cfg: &ShapleyConfig) -> Result<ShapleyMatrix> {
    if rows.is_empty() {
        return Err(GadgetError::Data("Shapley requested on an empty row set".into()));
    }
    if cfg.max_background < 1 {
        return Err(GadgetError::Usage("max_background must be at least 1".into()));
    }
    let p = d.n_features();
    let background = background_sample(rows, cfg.max_background, cfg.seed);
    let per_row: Vec<Result<Vec<f64>>> = match cfg.estimator {
        ShapleyEstimator::ExactSubset => {
            check_exact(p)?;
            let weights = shapley_weights(p);
            let nb = background.len() as f64;
            rows.par_iter()
                .map(|&i| {
                    let pred = coalition_predictions(pr, d, i, &background)?;
                    let v: Vec<f64> = pred.chunks(background.len()).map(|c| c.iter().sum::<f64>() / nb).collect();
                    let mut phi = vec![0.0; p];
                    phi_from_coalitions(&v, p, &weights, &mut phi);
                    Ok(phi)
                })
                .collect()
        }
        ShapleyEstimator::PermutationMc { samples } => {
            if samples < 1 {
                return Err(GadgetError::Usage("Monte Carlo Shapley needs at least one sample".into()));
            }
            rows.par_iter()
                .enumerate()
                .map(|(pos, &i)| permutation_estimate(pr, d, i, &background, samples, cfg.seed, pos as u64))
                .collect()
        }
    };
    let mut values = Array2::zeros((rows.len(), features.len()));
    for (r, phi) in per_row.into_iter().enumerate() {
        let phi = phi?;
        for (c, &j) in features.iter().enumerate() {
            values[[r, c]] = phi[j];
        }
    }
    Ok(ShapleyMatrix { features: features.to_vec(), rows: rows.to_vec(), values, estimator: cfg.estimator, background })
}

/// Antithetic permutation sampling: each drawn ordering is paired with its
/// reverse, and background rows are visited in reshuffled rounds.
fn permutation_estimate(pr: &dyn Predictor, d: &Dataset, i: usize, background: &[usize], samples: usize, seed: u64, pos: u64) -> Result<Vec<f64>> {
    let p = d.n_features();
    let mut rng = indexed_rng(seed, Stream::Shapley, pos + 1);
    let mut order: Vec<usize> = (0..p).collect();
    let mut bg_cycle: Vec<usize> = Vec::new();
    let mut chains: Vec<Vec<usize>> = Vec::with_capacity(samples);
    let mut bgs = Vec::with_capacity(samples);
    while chains.len() < samples {
        if bg_cycle.is_empty() {
            bg_cycle = background.to_vec();
            bg_cycle.shuffle(&mut rng);
        }
        let b = bg_cycle.pop().expect("refilled above");
        order.shuffle(&mut rng);
        chains.push(order.clone());
        bgs.push(b);
        if chains.len() < samples {
            chains.push(order.iter().rev().copied().collect());
            bgs.push(b);
        }
    }
    let mut x = Array2::zeros((samples * (p + 1), p));
    let xi = d.row(i);
    for (s, (chain, &b)) in chains.iter().zip(&bgs).enumerate() {
        let mut cur = d.row(b).to_owned();
        x.row_mut(s * (p + 1)).assign(&cur);
        for (step, &j) in chain.iter().enumerate() {
            cur[j] = xi[j];
            x.row_mut(s * (p + 1) + step + 1).assign(&cur);
        }
    }
    let pred = pr.predict(x.view())?;
    let mut phi = vec![0.0; p];
    for (s, chain) in chains.iter().enumerate() {
        for (step, &j) in chain.iter().enumerate() {
            phi[j] += pred[s * (p + 1) + step + 1] - pred[s * (p + 1) + step];
        }
    }
    phi.iter_mut().for_each(|v| *v /= samples as f64);
    Ok(phi)
}

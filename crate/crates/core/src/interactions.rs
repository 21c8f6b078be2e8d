//! Interaction measures read off a fitted tree, plus the H-statistic.
//!
//! Every tree-based measure uses the node risks stored at fit time, so the
//! per-split reductions telescope exactly into the goodness-of-fit values.

use std::io::Write;

use ndarray::Array2;
use rand::seq::IndexedRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{GadgetError, Result};
use crate::gadget::{GadgetTree, SplitRule};
use crate::learners::Predictor;
use crate::rng::{stream_rng, Stream};
use crate::stats;

/// Evaluation points used by the H-statistic before subsampling kicks in.
pub const H_MAX_ROWS: usize = 2000;

fn position(tree: &GadgetTree, j: usize) -> Result<usize> {
    tree.config
        .s
        .iter()
        .position(|&s| s == j)
        .ok_or_else(|| GadgetError::Usage(format!("feature {} is not a feature of interest", tree.feature_names.get(j).map(String::as_str).unwrap_or("?"))))
}

fn node_reduction(tree: &GadgetTree, node: usize, pos: usize) -> f64 {
    let n = &tree.nodes[node];
    match &n.split {
        Some(s) => n.risks[pos] - tree.nodes[s.left].risks[pos] - tree.nodes[s.right].risks[pos],
        None => 0.0,
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Share of the root heterogeneity of feature `j` removed by splitting `node`.
pub fn split_reduction(tree: &GadgetTree, node: usize, j: usize) -> Result<f64> {
    let pos = position(tree, j)?;
    let n = tree.nodes.get(node).ok_or_else(|| GadgetError::Usage(format!("no node {node}")))?;
    if n.is_leaf() {
        return Err(GadgetError::Usage(format!("node {node} is a leaf")));
    }
    Ok(ratio(node_reduction(tree, node, pos), tree.root_risk(pos)))
}

/// Summed reduction for feature `j` over all splits on `z`.
pub fn feature_pair_reduction(tree: &GadgetTree, z: usize, j: usize) -> Result<f64> {
    let pos = position(tree, j)?;
    let num: f64 = tree
        .internal_nodes()
        .iter()
        .filter(|n| n.split.as_ref().is_some_and(|s| s.feature == z))
        .map(|n| node_reduction(tree, n.id, pos))
        .sum();
    Ok(ratio(num, tree.root_risk(pos)))
}

/// Reduction of the risk summed over all features of interest by splits on `z`.
pub fn split_feature_total(tree: &GadgetTree, z: usize) -> f64 {
    let num: f64 = tree
        .internal_nodes()
        .iter()
        .filter(|n| n.split.as_ref().is_some_and(|s| s.feature == z))
        .map(|n| (0..tree.config.s.len()).map(|pos| node_reduction(tree, n.id, pos)).sum::<f64>())
        .sum();
    ratio(num, tree.root().total_risk())
}

/// Per-feature and total goodness of fit: one minus leaf risk over root risk.
pub fn r_squared(tree: &GadgetTree) -> (Vec<f64>, f64) {
    let leaves = tree.leaves();
    let per: Vec<f64> = (0..tree.config.s.len())
        .map(|pos| {
            let root = tree.root_risk(pos);
            let leaf: f64 = leaves.iter().map(|l| l.risks[pos]).sum();
            ratio(root - leaf, root)
        })
        .collect();
    let root = tree.root().total_risk();
    let leaf: f64 = leaves.iter().map(|l| l.total_risk()).sum();
    (per, ratio(root - leaf, root))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitTerm {
    pub node: usize,
    pub depth: usize,
    pub split_feature: String,
    pub threshold: Option<f64>,
    /// Reduction per feature of interest, aligned with `InteractionReport::features`.
    pub reductions: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitFeatureTerm {
    pub split_feature: String,
    /// `I_{z,j}` for each feature of interest.
    pub per_feature: Vec<f64>,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionReport {
    pub method: String,
    pub features: Vec<String>,
    pub splits: Vec<SplitTerm>,
    pub split_features: Vec<SplitFeatureTerm>,
    pub r2: Vec<f64>,
    pub r2_total: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h_statistic: Option<Vec<f64>>,
    pub warnings: Vec<String>,
}

impl InteractionReport {
    pub fn from_tree(tree: &GadgetTree) -> Self {
        let names = &tree.feature_names;
        let features: Vec<String> = tree.config.s.iter().map(|&j| names[j].clone()).collect();
        let mut warnings = Vec::new();
        let splits: Vec<SplitTerm> = tree
            .internal_nodes()
            .iter()
            .map(|n| {
                let s = n.split.as_ref().expect("internal node");
                let reductions: Vec<f64> =
                    (0..features.len()).map(|pos| ratio(node_reduction(tree, n.id, pos), tree.root_risk(pos))).collect();
                for (pos, r) in reductions.iter().enumerate() {
                    if *r < 0.0 {
                        warnings.push(format!(
                            "split at node {} on {} increases the heterogeneity of {} ({r:.4})",
                            n.id, names[s.feature], features[pos]
                        ));
                    }
                }
                SplitTerm {
                    node: n.id,
                    depth: n.depth,
                    split_feature: names[s.feature].clone(),
                    threshold: match s.rule {
                        SplitRule::Threshold { threshold } => Some(threshold),
                        SplitRule::Partition { .. } => None,
                    },
                    reductions,
                }
            })
            .collect();
        let mut used: Vec<usize> = tree.internal_nodes().iter().filter_map(|n| n.split.as_ref().map(|s| s.feature)).collect();
        used.sort_unstable();
        used.dedup();
        let split_features = used
            .iter()
            .map(|&z| SplitFeatureTerm {
                split_feature: names[z].clone(),
                per_feature: tree.config.s.iter().map(|&j| feature_pair_reduction(tree, z, j).unwrap_or(0.0)).collect(),
                total: split_feature_total(tree, z),
            })
            .collect();
        let (r2, r2_total) = r_squared(tree);
        for (pos, v) in r2.iter().enumerate() {
            if *v < -1e-9 {
                warnings.push(format!("R2 of {} is negative ({v:.4})", features[pos]));
            }
        }
        InteractionReport {
            method: tree.config.method.to_string(),
            features,
            splits,
            split_features,
            r2,
            r2_total,
            h_statistic: None,
            warnings,
        }
    }

    /// Largest absolute gap between each R² and the sum of its split terms.
    pub fn consistency_gap(&self) -> f64 {
        let mut gap: f64 = 0.0;
        for (pos, r2) in self.r2.iter().enumerate() {
            let s: f64 = self.split_features.iter().map(|t| t.per_feature[pos]).sum();
            gap = gap.max((r2 - s).abs());
        }
        let s: f64 = self.split_features.iter().map(|t| t.total).sum();
        gap.max((self.r2_total - s).abs())
    }

    pub fn to_json(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("report serializes");
        v["schema_version"] = serde_json::json!(1);
        v
    }

    /// Flat CSV: one row per (measure, feature, split).
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["measure", "feature", "split_feature", "node", "value"])?;
        for s in &self.splits {
            for (f, v) in self.features.iter().zip(&s.reductions) {
                out.write_record(["split_reduction", f, &s.split_feature, &s.node.to_string(), &v.to_string()])?;
            }
        }
        for t in &self.split_features {
            for (f, v) in self.features.iter().zip(&t.per_feature) {
                out.write_record(["pair_reduction", f, &t.split_feature, "", &v.to_string()])?;
            }
            out.write_record(["split_feature_total", "", &t.split_feature, "", &t.total.to_string()])?;
        }
        for (f, v) in self.features.iter().zip(&self.r2) {
            out.write_record(["r2", f, "", "", &v.to_string()])?;
        }
        out.write_record(["r2_total", "", "", "", &self.r2_total.to_string()])?;
        if let Some(h) = &self.h_statistic {
            for (f, v) in self.features.iter().zip(h) {
                out.write_record(["h2", f, "", "", &v.to_string()])?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

/// Rows used as evaluation points: all of them up to `H_MAX_ROWS`, else a seeded subsample.
pub fn h_rows(d: &Dataset, seed: u64) -> Vec<usize> {
    let all = d.all_rows();
    if all.len() <= H_MAX_ROWS {
        return all;
    }
    let mut rng = stream_rng(seed, Stream::Shapley);
    let mut rows: Vec<usize> = all.choose_multiple(&mut rng, H_MAX_ROWS).copied().collect();
    rows.sort_unstable();
    rows
}

/// Squared H-statistic of feature `j`: the share of the centered prediction
/// variance not explained by the sum of the centered PD of `j` and of all
/// remaining features jointly.
pub fn h_statistic(pr: &dyn Predictor, d: &Dataset, j: usize, seed: u64) -> Result<f64> {
    Ok(h_statistics(pr, d, &[j], seed)?[0])
}

pub fn h_statistics(pr: &dyn Predictor, d: &Dataset, features: &[usize], seed: u64) -> Result<Vec<f64>> {
    let p = d.n_features();
    if let Some(&bad) = features.iter().find(|&&j| j >= p) {
        return Err(GadgetError::Usage(format!("feature index {} out of range", bad + 1)));
    }
    let rows = h_rows(d, seed);
    let x = d.select_rows(&rows)?.x().clone();
    let n = rows.len();
    let mut f = pr.predict(x.view())?;
    let fm = stats::mean(&f);
    f.iter_mut().for_each(|v| *v -= fm);
    let denom: f64 = f.iter().map(|v| v * v).sum();
    if denom <= 1e-20 * n as f64 * fm.abs().max(1.0).powi(2) {
        return Err(GadgetError::DegenerateModel("predictions have zero variance".into()));
    }
    features
        .iter()
        .map(|&j| {
            // own[i]: mean over k of f(x_ij, x_k,-j); rest[i]: mean over k of f(x_kj, x_i,-j)
            let pairs: Vec<(f64, f64)> = (0..n)
                .into_par_iter()
                .map(|i| -> Result<(f64, f64)> {
                    let mut a = x.clone();
                    a.column_mut(j).fill(x[[i, j]]);
                    let own = stats::mean(&pr.predict(a.view())?);
                    let mut b = Array2::zeros((n, p));
                    for k in 0..n {
                        b.row_mut(k).assign(&x.row(i));
                        b[[k, j]] = x[[k, j]];
                    }
                    let rest = stats::mean(&pr.predict(b.view())?);
                    Ok((own, rest))
                })
                .collect::<Result<_>>()?;
            let own: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let rest: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            let (om, rm) = (stats::mean(&own), stats::mean(&rest));
            let num: f64 = (0..n).map(|i| (f[i] - (own[i] - om) - (rest[i] - rm)).powi(2)).sum();
            Ok(num / denom)
        })
        .collect()
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
            Ok(x.rows().into_iter().map(|r| r[0] * r[1]).collect())
        }
        fn name(&self) -> &str {
            "product"
        }
    }

    fn grid_data() -> Dataset {
        let mut x = Array2::zeros((25, 2));
        for i in 0..25 {
            x[[i, 0]] = (i % 5) as f64 - 2.0;
            x[[i, 1]] = (i / 5) as f64 - 2.0;
        }
        Dataset::from_numeric(x, vec![0.0; 25]).unwrap()
    }

    #[test]
    fn additive_model_has_no_h() {
        let d = grid_data();
        let f = LinearModel::from_coefficients(1.0, vec![2.0, -1.0]);
        for h in h_statistics(&f, &d, &[0, 1], 0).unwrap() {
            assert!(h.abs() < 1e-12);
        }
    }

    #[test]
    fn product_is_symmetric() {
        let d = grid_data();
        let h = h_statistics(&Product, &d, &[0, 1], 0).unwrap();
        assert!((h[0] - h[1]).abs() < 1e-12);
        // on a centered product grid both PDs vanish, so the whole variance is interaction
        assert!((h[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_model_is_degenerate() {
        let d = Dataset::from_numeric(array![[0.0], [1.0], [2.0]], vec![0.0; 3]).unwrap();
        let f = LinearModel::from_coefficients(3.0, vec![0.0]);
        assert!(matches!(h_statistic(&f, &d, 0, 0), Err(GadgetError::DegenerateModel(_))));
    }
}

//! Interaction-minimizing recursive partitioning of the feature space.
//!
//! A tree is grown greedily: each split minimizes the summed risk (remaining
//! heterogeneity of local effects) of the features of interest over the two
//! children, subject to depth, node size, improvement and R² stop rules.

mod config;
mod engine;
mod regional;
mod tree;

pub use config::{GadgetConfig, Method, StopConfig};
pub use engine::{ale_derivative_repair, pd_risk, EffectEngine, FeatureState, NodeState, Side};
pub use regional::{curve_slope, decomposition_r2, interpolate, regional_effects, LeafEffects};
pub use tree::{
    fit_tree, search_split, split_candidates, Candidate, CandidateRecord, GadgetNode, GadgetTree, SplitRecord, SplitRule,
    StopReason,
};

use crate::data::Dataset;

/// Risk of each feature of interest normalized by the number of local-effect
/// terms and the prediction variance, evaluated at the root.
pub fn normalized_root_risks(tree: &GadgetTree) -> Vec<f64> {
    let root = tree.state(0);
    let var = tree.prediction_variance();
    tree.root()
        .risks
        .iter()
        .enumerate()
        .map(|(pos, r)| {
            let terms = match root {
                Some(st) => tree.engine.term_count(st, pos),
                None => tree.root().rows.len(),
            };
            if var > 0.0 && terms > 0 {
                r / (terms as f64 * var)
            } else {
                0.0
            }
        })
        .collect()
}

/// Number of local-effect values per feature at the root, for normalizing risks.
pub fn root_term_counts(cfg: &GadgetConfig, d: &Dataset) -> Vec<usize> {
    cfg.s
        .iter()
        .map(|&j| match cfg.method {
            Method::Pd => {
                let m = crate::data::make_grid(d, j, cfg.grid_size, cfg.grid_mode).map(|g| g.len()).unwrap_or(0);
                d.n_rows() * m
            }
            _ => d.n_rows(),
        })
        .collect()
}

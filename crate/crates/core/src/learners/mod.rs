//! Prediction functions: the opaque `Predictor` interface and the built-in
//! trainable learners used for explanation, refitting under permutation and
//! the simulation lab.

mod external;
mod knn;
mod linear;
mod trees;

use std::sync::Arc;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{GadgetError, Result};

pub use external::ExternalTable;
pub use knn::Knn;
pub use linear::{LinearModel, LinearWithInteractions};
pub use trees::{BaggedTrees, RegressionTree, TreeParams};

/// A fitted prediction function over `p` features.
///
/// Implementations are immutable after fitting and safe to call from many
/// threads at once. Predicting an empty matrix yields an empty vector.
pub trait Predictor: Send + Sync {
    fn n_features(&self) -> usize;

    fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Vec<f64>>;

    fn name(&self) -> &str;

    /// Whether a model of this kind can be refit on new data.
    fn trainable(&self) -> bool {
        true
    }
}

pub type SharedPredictor = Arc<dyn Predictor>;

pub(crate) fn check_width(expected: usize, x: &ArrayView2<'_, f64>) -> Result<()> {
    if x.ncols() != expected {
        return Err(GadgetError::SchemaMismatch { expected, got: x.ncols() });
    }
    Ok(())
}

/// Convenience: predict on an owned matrix.
pub fn predict_owned(pr: &dyn Predictor, x: &Array2<f64>) -> Result<Vec<f64>> {
    pr.predict(x.view())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LearnerKind {
    Linear,
    LinearInteractions,
    Knn { k: usize },
    BaggedTrees { n_trees: usize, max_depth: usize, min_leaf: usize },
    ExternalTable,
}

impl LearnerKind {
    pub fn default_bagged_trees() -> Self {
        LearnerKind::BaggedTrees { n_trees: 50, max_depth: 10, min_leaf: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerSpec {
    #[serde(flatten)]
    pub kind: LearnerKind,
    pub seed: u64,
}

impl LearnerSpec {
    pub fn new(kind: LearnerKind, seed: u64) -> Self {
        LearnerSpec { kind, seed }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            LearnerKind::Knn { k } if k < 1 => Err(GadgetError::Usage("knn requires k >= 1".into())),
            LearnerKind::BaggedTrees { n_trees, max_depth, min_leaf } => {
                if n_trees < 1 || max_depth < 1 || min_leaf < 1 {
                    Err(GadgetError::Usage("bagged trees need n_trees, max_depth, min_leaf >= 1".into()))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    pub fn is_trainable(&self) -> bool {
        self.kind != LearnerKind::ExternalTable
    }

    fn min_rows(&self) -> usize {
        match self.kind {
            LearnerKind::BaggedTrees { min_leaf, .. } => min_leaf.max(5),
            _ => 5,
        }
    }
}

/// Train a learner on `d`. Deterministic given the spec's seed.
pub fn fit(spec: &LearnerSpec, d: &Dataset) -> Result<SharedPredictor> {
    spec.validate()?;
    if !spec.is_trainable() {
        return Err(GadgetError::NotTrainable);
    }
    if d.n_rows() < spec.min_rows() {
        return Err(GadgetError::Data(format!(
            "learner needs at least {} rows, dataset has {}",
            spec.min_rows(),
            d.n_rows()
        )));
    }
    let pr: SharedPredictor = match spec.kind {
        LearnerKind::Linear => Arc::new(LinearModel::fit(d.x().view(), d.y())?),
        LearnerKind::LinearInteractions => Arc::new(LinearWithInteractions::fit(d.x().view(), d.y())?),
        LearnerKind::Knn { k } => Arc::new(Knn::fit(d.x().view(), d.y(), k)),
        LearnerKind::BaggedTrees { n_trees, max_depth, min_leaf } => Arc::new(BaggedTrees::fit(
            d.x().view(),
            d.y(),
            n_trees,
            TreeParams { max_depth, min_leaf },
            spec.seed,
        )),
        LearnerKind::ExternalTable => unreachable!(),
    };
    Ok(pr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn external_kind_cannot_be_fit() {
        let d = Dataset::from_numeric(Array2::zeros((10, 1)), vec![0.0; 10]).unwrap();
        let spec = LearnerSpec::new(LearnerKind::ExternalTable, 0);
        assert!(matches!(fit(&spec, &d), Err(GadgetError::NotTrainable)));
    }

    #[test]
    fn invalid_hyperparameters_rejected() {
        assert!(LearnerSpec::new(LearnerKind::Knn { k: 0 }, 0).validate().is_err());
        let bt = LearnerKind::BaggedTrees { n_trees: 0, max_depth: 3, min_leaf: 1 };
        assert!(LearnerSpec::new(bt, 0).validate().is_err());
    }

    #[test]
    fn constant_target_predicts_constant() {
        let x = Array2::from_shape_fn((20, 2), |(i, j)| (i * (j + 1)) as f64 * 0.1);
        let d = Dataset::from_numeric(x, vec![5.0; 20]).unwrap();
        for kind in [
            LearnerKind::Linear,
            LearnerKind::LinearInteractions,
            LearnerKind::Knn { k: 3 },
            LearnerKind::BaggedTrees { n_trees: 5, max_depth: 3, min_leaf: 2 },
        ] {
            let pr = fit(&LearnerSpec::new(kind, 1), &d).unwrap();
            let out = pr.predict(array![[100.0, -3.0], [0.5, 0.5]].view()).unwrap();
            for v in out {
                assert!((v - 5.0).abs() < 1e-9, "{} predicted {v}", pr.name());
            }
        }
    }

    #[test]
    fn empty_and_mismatched_inputs() {
        let x = Array2::from_shape_fn((10, 2), |(i, j)| (i + j) as f64);
        let d = Dataset::from_numeric(x, (0..10).map(|i| i as f64).collect()).unwrap();
        let pr = fit(&LearnerSpec::new(LearnerKind::Linear, 0), &d).unwrap();
        assert!(pr.predict(Array2::zeros((0, 2)).view()).unwrap().is_empty());
        assert!(matches!(
            pr.predict(Array2::zeros((1, 3)).view()),
            Err(GadgetError::SchemaMismatch { expected: 2, got: 3 })
        ));
    }
}

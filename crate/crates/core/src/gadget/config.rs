use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, GridMode, DEFAULT_GRID_SIZE};
use crate::effects::{DEFAULT_INTERIOR_KNOTS, DEFAULT_MAX_BACKGROUND};
use crate::error::{GadgetError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Pd,
    Ale,
    Sd,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Pd => "pd",
            Method::Ale => "ale",
            Method::Sd => "sd",
        })
    }
}

impl FromStr for Method {
    type Err = GadgetError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pd" => Ok(Method::Pd),
            "ale" => Ok(Method::Ale),
            "sd" | "shap" => Ok(Method::Sd),
            other => Err(GadgetError::Usage(format!("unknown method '{other}' (expected pd, ale or sd)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopConfig {
    pub max_depth: usize,
    pub min_node_size: usize,
    pub gamma: f64,
    pub r2_total_target: f64,
}

impl Default for StopConfig {
    fn default() -> Self {
        StopConfig { max_depth: 6, min_node_size: 40, gamma: 0.2, r2_total_target: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GadgetConfig {
    /// Features of interest (0-based).
    pub s: Vec<usize>,
    /// Split candidates (0-based).
    pub z: Vec<usize>,
    pub method: Method,
    pub sd_recalculate: bool,
    pub stop: StopConfig,
    pub grid_size: usize,
    pub grid_mode: GridMode,
    /// ALE interval count; `None` uses `min(20, rows / 10)` per node.
    pub ale_intervals: Option<usize>,
    /// Number of quantiles whose midpoints become numeric thresholds.
    pub max_candidates: usize,
    pub ale_repair: bool,
    /// Half-width of the near-split window as a fraction of the node's range.
    pub repair_window: f64,
    pub max_background: usize,
    pub interior_knots: usize,
    pub seed: u64,
}

impl GadgetConfig {
    pub fn new(method: Method, s: Vec<usize>, z: Vec<usize>) -> Self {
        GadgetConfig {
            s,
            z,
            method,
            sd_recalculate: true,
            stop: StopConfig::default(),
            grid_size: DEFAULT_GRID_SIZE,
            grid_mode: GridMode::Quantile,
            ale_intervals: None,
            max_candidates: 30,
            ale_repair: true,
            repair_window: 0.05,
            max_background: DEFAULT_MAX_BACKGROUND,
            interior_knots: DEFAULT_INTERIOR_KNOTS,
            seed: 0,
        }
    }

    /// All features as both S and Z.
    pub fn all_features(method: Method, p: usize) -> Self {
        let all: Vec<usize> = (0..p).collect();
        Self::new(method, all.clone(), all)
    }

    pub fn with_stop(mut self, max_depth: usize, min_node_size: usize, gamma: f64) -> Self {
        self.stop.max_depth = max_depth;
        self.stop.min_node_size = min_node_size;
        self.stop.gamma = gamma;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self, d: &Dataset) -> Result<()> {
        let p = d.n_features();
        let check = |set: &[usize], name: &str| -> Result<()> {
            if set.is_empty() {
                return Err(GadgetError::Usage(format!("{name} must not be empty")));
            }
            if let Some(&bad) = set.iter().find(|&&j| j >= p) {
                return Err(GadgetError::Usage(format!("{name} contains feature index {} but p = {p}", bad + 1)));
            }
            let mut seen = set.to_vec();
            seen.sort_unstable();
            seen.dedup();
            if seen.len() != set.len() {
                return Err(GadgetError::Usage(format!("{name} lists a feature twice")));
            }
            Ok(())
        };
        check(&self.s, "S")?;
        check(&self.z, "Z")?;
        if self.stop.min_node_size < 2 {
            return Err(GadgetError::Usage("min node size must be at least 2".into()));
        }
        if !(0.0..=1.0).contains(&self.stop.gamma) {
            return Err(GadgetError::Usage(format!("gamma must lie in [0, 1], got {}", self.stop.gamma)));
        }
        if !(0.0..=1.0).contains(&self.stop.r2_total_target) {
            return Err(GadgetError::Usage("R2 target must lie in [0, 1]".into()));
        }
        if self.grid_size < 2 {
            return Err(GadgetError::Usage("grid size must be at least 2".into()));
        }
        if self.max_candidates < 2 {
            return Err(GadgetError::Usage("at least two split quantiles are needed".into()));
        }
        if self.ale_intervals == Some(0) {
            return Err(GadgetError::Usage("ALE interval count must be at least 1".into()));
        }
        if self.max_background < 1 {
            return Err(GadgetError::Usage("Shapley background size must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.repair_window) {
            return Err(GadgetError::Usage("repair window must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

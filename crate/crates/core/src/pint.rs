//! Permutation interaction test.
//!
//! The root risk of each feature is compared against a null distribution
//! built from refits on permuted targets. Features whose observed risk
//! exceeds the null `1 - alpha` quantile are declared interacting.

use log::warn;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Gamma, LogNormal, Normal};

use crate::data::{Dataset, GridMode, DEFAULT_GRID_SIZE};
use crate::effects::DEFAULT_MAX_BACKGROUND;
use crate::error::{GadgetError, Result};
use crate::gadget::{EffectEngine, GadgetConfig, Method};
use crate::learners::{fit, LearnerSpec, Predictor};
use crate::rng::{derive_seed, indexed_rng, Stream};
use crate::stats;

pub const RECOMMENDED_MIN_PERMUTATIONS: usize = 20;
const MAX_RETRIES: u64 = 3;
const GOF_LEVEL: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistFit {
    Empirical,
    ParametricAuto,
}

impl std::str::FromStr for DistFit {
    type Err = GadgetError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "empirical" => Ok(DistFit::Empirical),
            "parametric-auto" | "auto" => Ok(DistFit::ParametricAuto),
            other => Err(GadgetError::Usage(format!("unknown null fit '{other}' (expected empirical or parametric-auto)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PintConfig {
    /// Number of permutations.
    pub s: usize,
    pub alpha: f64,
    pub method: Method,
    pub dist_fit: DistFit,
    pub seed: u64,
    /// Exclude features whose normalized root risk is below this value.
    pub prefilter: Option<f64>,
    /// Features to test (0-based); `None` tests all.
    pub features: Option<Vec<usize>>,
    pub bonferroni: bool,
    pub grid_size: usize,
    pub max_background: usize,
}

impl PintConfig {
    pub fn new(method: Method) -> Self {
        PintConfig {
            s: 50,
            alpha: 0.05,
            method,
            dist_fit: DistFit::ParametricAuto,
            seed: 0,
            prefilter: None,
            features: None,
            bonferroni: false,
            grid_size: DEFAULT_GRID_SIZE,
            max_background: DEFAULT_MAX_BACKGROUND,
        }
    }

    /// Validation errors, plus warnings for legal but weak settings.
    pub fn validate(&self) -> Result<Vec<String>> {
        if self.s < 1 {
            return Err(GadgetError::Usage("at least one permutation is required".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(GadgetError::Usage(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.prefilter.is_some_and(|t| !(t >= 0.0)) {
            return Err(GadgetError::Usage("prefilter threshold must be nonnegative".into()));
        }
        let mut warnings = Vec::new();
        if self.s < RECOMMENDED_MIN_PERMUTATIONS {
            warnings.push(format!("s below recommended minimum ({} < {RECOMMENDED_MIN_PERMUTATIONS})", self.s));
        }
        Ok(warnings)
    }

    fn gadget_config(&self, features: Vec<usize>) -> GadgetConfig {
        let mut c = GadgetConfig::new(self.method, features.clone(), features);
        c.grid_size = self.grid_size;
        c.grid_mode = GridMode::Quantile;
        c.max_background = self.max_background;
        c.seed = self.seed;
        c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NullFamily {
    Empirical,
    Normal,
    LogNormal,
    Gamma,
}

/// A fitted null distribution. Parameters: normal (mean, sd), log-normal
/// (mu, sigma of the log), gamma (shape, rate); empirical keeps the sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullFit {
    pub family: NullFamily,
    pub params: Vec<f64>,
    pub ks_statistic: Option<f64>,
    pub ks_p_value: Option<f64>,
    #[serde(skip)]
    sample: Vec<f64>,
}

impl NullFit {
    pub fn empirical(sample: &[f64]) -> Self {
        NullFit { family: NullFamily::Empirical, params: vec![], ks_statistic: None, ks_p_value: None, sample: stats::sorted_copy(sample) }
    }

    fn cdf(&self, x: f64) -> f64 {
        match self.family {
            NullFamily::Empirical => self.sample.partition_point(|&v| v <= x) as f64 / self.sample.len() as f64,
            NullFamily::Normal => Normal::new(self.params[0], self.params[1]).map(|d| d.cdf(x)).unwrap_or(f64::NAN),
            NullFamily::LogNormal => LogNormal::new(self.params[0], self.params[1]).map(|d| d.cdf(x)).unwrap_or(f64::NAN),
            NullFamily::Gamma => Gamma::new(self.params[0], self.params[1]).map(|d| d.cdf(x)).unwrap_or(f64::NAN),
        }
    }

    /// The `1 - alpha` critical value; for the empirical null the
    /// `ceil(s (1 - alpha))`-th order statistic.
    pub fn critical_value(&self, alpha: f64) -> f64 {
        let q = 1.0 - alpha;
        match self.family {
            NullFamily::Empirical => {
                let n = self.sample.len();
                let k = ((n as f64 * q).ceil() as usize).clamp(1, n);
                self.sample[k - 1]
            }
            NullFamily::Normal => Normal::new(self.params[0], self.params[1]).map(|d| d.inverse_cdf(q)).unwrap_or(f64::NAN),
            NullFamily::LogNormal => LogNormal::new(self.params[0], self.params[1]).map(|d| d.inverse_cdf(q)).unwrap_or(f64::NAN),
            NullFamily::Gamma => Gamma::new(self.params[0], self.params[1]).map(|d| d.inverse_cdf(q)).unwrap_or(f64::NAN),
        }
    }

    /// Upper-tail probability of `obs`: the share of null draws at least as
    /// large for the empirical null, `1 - F(obs)` otherwise.
    pub fn p_value(&self, obs: f64) -> f64 {
        match self.family {
            NullFamily::Empirical => {
                let n = self.sample.len();
                (n - self.sample.partition_point(|&v| v < obs)) as f64 / n as f64
            }
            _ => (1.0 - self.cdf(obs)).clamp(0.0, 1.0),
        }
    }
}

/// Asymptotic Kolmogorov distribution tail with Stephens' small-sample correction.
pub fn ks_p_value(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// One-sample Kolmogorov-Smirnov statistic of `sorted` against `cdf`.
pub fn ks_statistic(sorted: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Moment-matched normal, log-normal and gamma candidates; the one with the
/// smallest KS statistic is used unless its KS test rejects, in which case
/// the empirical distribution is kept.
pub fn fit_null(sample: &[f64], dist_fit: DistFit) -> NullFit {
    let emp = NullFit::empirical(sample);
    if dist_fit == DistFit::Empirical || sample.len() < 2 {
        return emp;
    }
    let sorted = stats::sorted_copy(sample);
    let n = sorted.len();
    let m = stats::mean(&sorted);
    let sd = (stats::sum_sq_dev(&sorted) / (n - 1) as f64).sqrt();
    if !(sd > 1e-300) {
        return emp;
    }
    let mut cands: Vec<NullFit> = Vec::new();
    let mk = |family, params: Vec<f64>| NullFit { family, params, ks_statistic: None, ks_p_value: None, sample: Vec::new() };
    cands.push(mk(NullFamily::Normal, vec![m, sd]));
    if sorted[0] > 0.0 {
        let logs: Vec<f64> = sorted.iter().map(|v| v.ln()).collect();
        let lsd = (stats::sum_sq_dev(&logs) / (n - 1) as f64).sqrt();
        if lsd > 0.0 {
            cands.push(mk(NullFamily::LogNormal, vec![stats::mean(&logs), lsd]));
        }
        let var = sd * sd;
        cands.push(mk(NullFamily::Gamma, vec![m * m / var, m / var]));
    }
    let mut best: Option<NullFit> = None;
    for mut c in cands {
        let d = ks_statistic(&sorted, |x| c.cdf(x));
        if !d.is_finite() {
            continue;
        }
        c.ks_statistic = Some(d);
        c.ks_p_value = Some(ks_p_value(d, n));
        if best.as_ref().is_none_or(|b| d < b.ks_statistic.unwrap()) {
            best = Some(c);
        }
    }
    match best {
        Some(b) if b.ks_p_value.unwrap() >= GOF_LEVEL => b,
        _ => emp,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PintFeature {
    pub feature: usize,
    pub name: String,
    pub observed: f64,
    pub null_sample: Vec<f64>,
    pub null: NullFit,
    pub critical_value: f64,
    pub p_value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_bonferroni: Option<f64>,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Excluded {
    pub feature: usize,
    pub name: String,
    pub normalized_risk: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PintResult {
    pub method: Method,
    pub s: usize,
    pub alpha: f64,
    pub dist_fit: DistFit,
    pub features: Vec<PintFeature>,
    pub excluded: Vec<Excluded>,
    /// Significant features (0-based), ready to serve as S and Z.
    pub selected: Vec<usize>,
    pub selected_names: Vec<String>,
    pub warnings: Vec<String>,
}

impl PintResult {
    pub fn feature(&self, j: usize) -> Option<&PintFeature> {
        self.features.iter().find(|f| f.feature == j)
    }

    pub fn to_json(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("result serializes");
        v["schema_version"] = serde_json::json!(1);
        v
    }
}

/// Root risk of every listed feature under the given effect method.
pub fn root_risks(cfg: &PintConfig, features: &[usize], d: &Dataset, pr: &dyn Predictor) -> Result<Vec<f64>> {
    let gc = cfg.gadget_config(features.to_vec());
    let engine = EffectEngine::build(&gc, d, pr)?;
    Ok(engine.root_state(d, pr)?.risks)
}

/// Features whose root risk, normalized by the number of local-effect values
/// and the prediction variance, falls below `threshold`.
pub fn prefilter(cfg: &PintConfig, d: &Dataset, pr: &dyn Predictor, features: &[usize], threshold: f64) -> Result<(Vec<usize>, Vec<Excluded>)> {
    let gc = cfg.gadget_config(features.to_vec());
    let engine = EffectEngine::build(&gc, d, pr)?;
    let root = engine.root_state(d, pr)?;
    let var = stats::variance(&pr.predict(d.x().view())?);
    let norm: Vec<f64> = (0..features.len())
        .map(|pos| {
            let terms = engine.term_count(&root, pos) as f64;
            if var > 0.0 && terms > 0.0 {
                root.risks[pos] / (terms * var)
            } else {
                0.0
            }
        })
        .collect();
    let mut keep = Vec::new();
    let mut out = Vec::new();
    for (&j, &r) in features.iter().zip(&norm) {
        if r < threshold {
            out.push(Excluded { feature: j, name: d.column(j).name.clone(), normalized_risk: r });
        } else {
            keep.push(j);
        }
    }
    Ok((keep, out))
}

/// Target shuffled with the PINT stream for permutation slot `index`.
pub fn permuted_target(y: &[f64], seed: u64, index: u64) -> Vec<f64> {
    let mut rng = indexed_rng(seed, Stream::Pint, index);
    let mut out = y.to_vec();
    out.shuffle(&mut rng);
    out
}

fn permuted_risks(cfg: &PintConfig, spec: &LearnerSpec, d: &Dataset, features: &[usize], k: usize) -> Result<Vec<f64>> {
    let mut last = None;
    for attempt in 0..MAX_RETRIES {
        let dk = d.with_y(permuted_target(d.y(), cfg.seed, (k as u64) * MAX_RETRIES + attempt + 1))?;
        let mut sk = spec.clone();
        sk.seed = derive_seed(spec.seed, Stream::Learner, (k as u64) * MAX_RETRIES + attempt + 1);
        match fit(&sk, &dk).and_then(|pr| root_risks(cfg, features, &dk, pr.as_ref())) {
            Ok(r) => return Ok(r),
            Err(e) => {
                warn!("permutation {k} attempt {} failed: {e}", attempt + 1);
                last = Some(e);
            }
        }
    }
    Err(GadgetError::Numeric(format!(
        "refit on permutation {k} failed {MAX_RETRIES} times: {}",
        last.map(|e| e.to_string()).unwrap_or_default()
    )))
}

pub fn run_pint(cfg: &PintConfig, spec: &LearnerSpec, d: &Dataset) -> Result<PintResult> {
    if !spec.is_trainable() {
        return Err(GadgetError::Usage("PINT requires a trainable learner".into()));
    }
    let mut warnings = cfg.validate()?;
    for w in &warnings {
        warn!("{w}");
    }
    let p = d.n_features();
    let mut features = cfg.features.clone().unwrap_or_else(|| (0..p).collect());
    if let Some(&bad) = features.iter().find(|&&j| j >= p) {
        return Err(GadgetError::Usage(format!("feature index {} out of range", bad + 1)));
    }
    let model = fit(spec, d)?;
    let mut excluded = Vec::new();
    if let Some(t) = cfg.prefilter {
        let (keep, ex) = prefilter(cfg, d, model.as_ref(), &features, t)?;
        features = keep;
        excluded = ex;
    }
    if features.is_empty() {
        warnings.push("every feature was excluded by the prefilter".into());
        return Ok(PintResult {
            method: cfg.method,
            s: cfg.s,
            alpha: cfg.alpha,
            dist_fit: cfg.dist_fit,
            features: vec![],
            excluded,
            selected: vec![],
            selected_names: vec![],
            warnings,
        });
    }
    let observed = root_risks(cfg, &features, d, model.as_ref())?;
    let nulls: Vec<Vec<f64>> =
        (0..cfg.s).into_par_iter().map(|k| permuted_risks(cfg, spec, d, &features, k)).collect::<Result<_>>()?;
    let m = features.len();
    let mut out = Vec::with_capacity(m);
    for (pos, &j) in features.iter().enumerate() {
        let sample: Vec<f64> = nulls.iter().map(|r| r[pos]).collect();
        let null = fit_null(&sample, cfg.dist_fit);
        let crit = null.critical_value(cfg.alpha);
        let pv = null.p_value(observed[pos]);
        out.push(PintFeature {
            feature: j,
            name: d.column(j).name.clone(),
            observed: observed[pos],
            null_sample: sample,
            critical_value: crit,
            p_value: pv,
            p_bonferroni: cfg.bonferroni.then(|| (pv * m as f64).min(1.0)),
            significant: observed[pos] > crit,
            null,
        });
    }
    let selected: Vec<usize> = out.iter().filter(|f| f.significant).map(|f| f.feature).collect();
    Ok(PintResult {
        method: cfg.method,
        s: cfg.s,
        alpha: cfg.alpha,
        dist_fit: cfg.dist_fit,
        selected_names: selected.iter().map(|&j| d.column(j).name.clone()).collect(),
        selected,
        features: out,
        excluded,
        warnings,
    })
}

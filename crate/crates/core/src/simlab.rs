//! Seeded simulation designs with known interaction structure, and a
//! repetition harness that summarizes how well the partitioning recovers it.

use std::collections::BTreeMap;

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{GadgetError, Result};
use crate::gadget::{fit_tree, GadgetConfig, Method};
use crate::interactions::{h_statistics, InteractionReport};
use crate::learners::{fit, LearnerSpec};
use crate::pint::{run_pint, PintConfig};
use crate::rng::{derive_seed, indexed_rng, Stream};
use crate::stats;

pub const SUPPORTED_RHO: [f64; 4] = [0.0, 0.4, 0.7, 0.9];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "design", rename_all = "kebab-case")]
pub enum DesignKind {
    /// `y = 3 x1 1[x3 > 0] - 3 x1 1[x3 <= 0] + x3 + e` with `corr(x1, x3) = rho`.
    Xor { rho: f64 },
    /// Slope of `x1` switches across five regions defined by `x2..x5`.
    Hierarchical,
    /// `y = x1 + x2 + x3 - 2 x1 x2` with `x3` a noisy copy of `x2`.
    Spurious,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimDesign {
    #[serde(flatten)]
    pub kind: DesignKind,
    pub n: usize,
    /// Noise standard deviation; `None` uses the design's own noise level.
    pub noise_sd: Option<f64>,
    pub seed: u64,
}

/// Mixing weight giving `corr(c x3 + (1 - c) z, x3) = rho` for iid uniforms.
pub fn xor_mixing(rho: f64) -> f64 {
    if rho <= 0.0 {
        return 0.0;
    }
    rho / (rho + (1.0 - rho * rho).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub description: String,
    /// Slope of each feature (0-based index, slope) inside the region.
    pub slopes: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub split_feature: Option<usize>,
    pub split_point: Option<f64>,
    /// Features that take part in an interaction.
    pub interacting: Vec<usize>,
    pub regions: Vec<Region>,
    /// Realized noise standard deviation.
    pub noise_sd: f64,
}

impl SimDesign {
    pub fn xor(rho: f64, n: usize, seed: u64) -> Self {
        SimDesign { kind: DesignKind::Xor { rho }, n, noise_sd: None, seed }
    }

    pub fn hierarchical(n: usize, seed: u64) -> Self {
        SimDesign { kind: DesignKind::Hierarchical, n, noise_sd: None, seed }
    }

    pub fn spurious(n: usize, seed: u64) -> Self {
        SimDesign { kind: DesignKind::Spurious, n, noise_sd: None, seed }
    }

    pub fn noiseless(mut self) -> Self {
        self.noise_sd = Some(0.0);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if let DesignKind::Xor { rho } = self.kind {
            if !SUPPORTED_RHO.iter().any(|r| (r - rho).abs() < 1e-12) {
                return Err(GadgetError::Usage(format!("unsupported rho {rho}; supported values are 0, 0.4, 0.7, 0.9")));
            }
        }
        if self.n < 2 {
            return Err(GadgetError::Usage("a design needs at least two rows".into()));
        }
        if self.noise_sd.is_some_and(|s| !(s >= 0.0)) {
            return Err(GadgetError::Usage("noise sd must be nonnegative".into()));
        }
        Ok(())
    }

    pub fn n_features(&self) -> usize {
        match self.kind {
            DesignKind::Xor { .. } => 3,
            DesignKind::Hierarchical => 5,
            DesignKind::Spurious => 4,
        }
    }

    /// Noise-free response at one feature vector.
    pub fn truth(&self, x: &[f64]) -> f64 {
        match self.kind {
            DesignKind::Xor { .. } => {
                let s = if x[2] > 0.0 { 3.0 } else { -3.0 };
                s * x[0] + x[2]
            }
            DesignKind::Hierarchical => hierarchical_slope(x) * x[0],
            DesignKind::Spurious => x[0] + x[1] + x[2] - 2.0 * x[0] * x[1],
        }
    }

    fn draw_x<R: Rng>(&self, rng: &mut R, n: usize) -> Array2<f64> {
        let u = Uniform::new(-1.0, 1.0).expect("valid range");
        let u01 = Uniform::new(0.0, 1.0).expect("valid range");
        let p = self.n_features();
        let mut x = Array2::zeros((n, p));
        for i in 0..n {
            match self.kind {
                DesignKind::Xor { rho } => {
                    let c = xor_mixing(rho);
                    let (z, x2, x3) = (u.sample(rng), u.sample(rng), u.sample(rng));
                    x[[i, 0]] = c * x3 + (1.0 - c) * z;
                    x[[i, 1]] = x2;
                    x[[i, 2]] = x3;
                }
                DesignKind::Hierarchical => {
                    x[[i, 0]] = u01.sample(rng);
                    for j in 1..5 {
                        x[[i, j]] = u.sample(rng);
                    }
                }
                DesignKind::Spurious => {
                    let e = Normal::new(0.0, 0.3).expect("valid sd");
                    let (x1, x2, x4) = (u.sample(rng), u.sample(rng), u.sample(rng));
                    x[[i, 0]] = x1;
                    x[[i, 1]] = x2;
                    x[[i, 2]] = x2 + e.sample(rng);
                    x[[i, 3]] = x4;
                }
            }
        }
        x
    }

    fn noise_level(&self, f: &[f64]) -> f64 {
        match (self.noise_sd, self.kind) {
            (Some(s), _) => s,
            (None, DesignKind::Xor { .. }) => 0.3,
            (None, DesignKind::Hierarchical) => (0.01 * stats::variance(f)).sqrt(),
            (None, DesignKind::Spurious) => 0.0,
        }
    }

    fn sample(&self, n: usize, index: u64) -> Result<(Dataset, Vec<f64>, f64)> {
        self.validate()?;
        let mut rng = indexed_rng(self.seed, Stream::Simlab, index);
        let x = self.draw_x(&mut rng, n);
        let f: Vec<f64> = x.rows().into_iter().map(|r| self.truth(r.as_slice().expect("contiguous row"))).collect();
        let sd = self.noise_level(&f);
        let y: Vec<f64> = if sd > 0.0 {
            let e = Normal::new(0.0, sd).map_err(|e| GadgetError::Numeric(e.to_string()))?;
            f.iter().map(|v| v + e.sample(&mut rng)).collect()
        } else {
            f.clone()
        };
        let names = (1..=self.n_features()).map(|j| crate::data::FeatureMeta::numeric(format!("x{j}"))).collect();
        Ok((Dataset::new(names, x, y)?, f, sd))
    }

    pub fn ground_truth(&self, noise_sd: f64) -> GroundTruth {
        match self.kind {
            DesignKind::Xor { .. } => GroundTruth {
                split_feature: Some(2),
                split_point: Some(0.0),
                interacting: vec![0, 2],
                regions: vec![
                    Region { description: "x3 <= 0".into(), slopes: vec![(0, -3.0), (2, 1.0)] },
                    Region { description: "x3 > 0".into(), slopes: vec![(0, 3.0), (2, 1.0)] },
                ],
                noise_sd,
            },
            DesignKind::Hierarchical => GroundTruth {
                split_feature: Some(2),
                split_point: Some(0.0),
                interacting: vec![0, 1, 2, 3, 4],
                regions: vec![
                    Region { description: "x3 <= 0 & x4 > 0".into(), slopes: vec![(0, 1.0)] },
                    Region { description: "x3 <= 0 & x4 <= 0".into(), slopes: vec![(0, 4.0)] },
                    Region { description: "x3 > 0 & x5 <= 0 & x2 > 0".into(), slopes: vec![(0, -1.0)] },
                    Region { description: "x3 > 0 & x5 <= 0 & x2 <= 0".into(), slopes: vec![(0, -3.0)] },
                    Region { description: "x3 > 0 & x5 > 0".into(), slopes: vec![(0, -5.0)] },
                ],
                noise_sd,
            },
            DesignKind::Spurious => GroundTruth {
                split_feature: None,
                split_point: None,
                interacting: vec![0, 1],
                regions: vec![],
                noise_sd,
            },
        }
    }
}

fn hierarchical_slope(x: &[f64]) -> f64 {
    if x[2] <= 0.0 {
        if x[3] > 0.0 {
            1.0
        } else {
            4.0
        }
    } else if x[4] > 0.0 {
        -5.0
    } else if x[1] > 0.0 {
        -1.0
    } else {
        -3.0
    }
}

/// Draw the design's training sample with its ground truth.
pub fn generate(design: &SimDesign) -> Result<(Dataset, GroundTruth)> {
    let (d, _, sd) = design.sample(design.n, 0)?;
    Ok((d, design.ground_truth(sd)))
}

/// Noise-free response for every training row, for oracle checks.
pub fn generate_with_truth(design: &SimDesign) -> Result<(Dataset, Vec<f64>)> {
    let (d, f, _) = design.sample(design.n, 0)?;
    Ok((d, f))
}

/// Independent test draw from the same design.
pub fn generate_test(design: &SimDesign, n: usize) -> Result<Dataset> {
    Ok(design.sample(n, 1)?.0)
}

/// One GADGET configuration to run in every repetition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variant {
    pub label: String,
    pub config: GadgetConfig,
}

impl Variant {
    pub fn new(label: impl Into<String>, config: GadgetConfig) -> Self {
        Variant { label: label.into(), config }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub design: SimDesign,
    pub learner: LearnerSpec,
    pub variants: Vec<Variant>,
    pub pint: Option<PintConfig>,
    pub h_statistic: bool,
    pub reps: usize,
    pub test_rows: usize,
}

impl ExperimentSpec {
    pub fn new(design: SimDesign, learner: LearnerSpec, reps: usize) -> Self {
        ExperimentSpec { design, learner, variants: vec![], pint: None, h_statistic: false, reps, test_rows: 2000 }
    }
}

/// Outcome of one variant within one repetition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepRecord {
    pub rep: usize,
    pub seed: u64,
    pub variant: String,
    pub first_split_feature: Option<String>,
    pub first_split_value: Option<f64>,
    /// Split features used at depth one (children of the root).
    pub second_level_features: Vec<String>,
    pub i_z: BTreeMap<String, f64>,
    pub r2: Vec<f64>,
    pub r2_total: f64,
    pub n_leaves: usize,
    pub test_mse: f64,
    pub test_r2: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PintRecord {
    pub rep: usize,
    pub seed: u64,
    pub p_values: Vec<f64>,
    pub significant: Vec<bool>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HRecord {
    pub rep: usize,
    pub seed: u64,
    pub h2: Vec<f64>,
}

/// Aggregate over repetitions for one variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub variant: String,
    pub runs: usize,
    pub failures: usize,
    /// Share of runs whose first split uses the true split feature.
    pub true_first_split_share: Option<f64>,
    pub split_value_min: Option<f64>,
    pub split_value_max: Option<f64>,
    pub second_level_share: f64,
    pub leaves_min: usize,
    pub leaves_max: usize,
    pub leaves_median: f64,
    pub r2_total_mean: f64,
    pub test_mse_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSummary {
    pub feature: String,
    pub significant_share: Option<f64>,
    pub p_value_median: Option<f64>,
    pub h2_min: Option<f64>,
    pub h2_max: Option<f64>,
    pub h2_mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub spec: ExperimentSpec,
    pub records: Vec<RepRecord>,
    pub pint: Vec<PintRecord>,
    pub h_statistic: Vec<HRecord>,
    pub summary: Vec<VariantSummary>,
    pub features: Vec<FeatureSummary>,
}

struct RepOutput {
    records: Vec<RepRecord>,
    pint: Option<PintRecord>,
    h: Option<HRecord>,
}

fn run_rep(spec: &ExperimentSpec, rep: usize) -> RepOutput {
    let seed = derive_seed(spec.design.seed, Stream::Simlab, rep as u64 + 1);
    let design = spec.design.with_seed(seed);
    let fail = |variant: &str, e: &GadgetError| RepRecord {
        rep,
        seed,
        variant: variant.to_string(),
        first_split_feature: None,
        first_split_value: None,
        second_level_features: vec![],
        i_z: BTreeMap::new(),
        r2: vec![],
        r2_total: f64::NAN,
        n_leaves: 0,
        test_mse: f64::NAN,
        test_r2: f64::NAN,
        error: Some(e.to_string()),
    };
    let prepared = (|| -> Result<_> {
        let (d, _) = generate(&design)?;
        let test = generate_test(&design, spec.test_rows)?;
        let mut ls = spec.learner.clone();
        ls.seed = derive_seed(seed, Stream::Learner, 0);
        let model = fit(&ls, &d)?;
        let pred = model.predict(test.x().view())?;
        let mse = pred.iter().zip(test.y()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / pred.len().max(1) as f64;
        let r2 = stats::r_squared(test.y(), &pred);
        Ok((d, ls, model, mse, r2))
    })();
    let (d, ls, model, mse, test_r2) = match prepared {
        Ok(v) => v,
        Err(e) => {
            return RepOutput {
                records: spec.variants.iter().map(|v| fail(&v.label, &e)).collect(),
                pint: spec.pint.as_ref().map(|_| PintRecord { rep, seed, p_values: vec![], significant: vec![], error: Some(e.to_string()) }),
                h: None,
            }
        }
    };
    let names: Vec<String> = d.columns().iter().map(|c| c.name.clone()).collect();
    let records = spec
        .variants
        .iter()
        .map(|v| {
            let cfg = v.config.clone().with_seed(derive_seed(seed, Stream::Shapley, 0));
            match fit_tree(&cfg, &d, model.as_ref()) {
                Ok(tree) => {
                    let report = InteractionReport::from_tree(&tree);
                    let first = tree.first_split();
                    let second = first
                        .map(|s| {
                            [s.left, s.right]
                                .iter()
                                .filter_map(|&c| tree.nodes[c].split.as_ref().map(|cs| names[cs.feature].clone()))
                                .collect()
                        })
                        .unwrap_or_default();
                    RepRecord {
                        rep,
                        seed,
                        variant: v.label.clone(),
                        first_split_feature: first.map(|s| names[s.feature].clone()),
                        first_split_value: first.and_then(|s| s.rule.threshold()),
                        second_level_features: second,
                        i_z: report.split_features.iter().map(|t| (t.split_feature.clone(), t.total)).collect(),
                        r2: report.r2.clone(),
                        r2_total: report.r2_total,
                        n_leaves: tree.n_leaves(),
                        test_mse: mse,
                        test_r2,
                        error: None,
                    }
                }
                Err(e) => fail(&v.label, &e),
            }
        })
        .collect();
    let pint = spec.pint.as_ref().map(|pc| {
        let mut pc = pc.clone();
        pc.seed = derive_seed(seed, Stream::Pint, 0);
        match run_pint(&pc, &ls, &d) {
            Ok(r) => PintRecord {
                rep,
                seed,
                p_values: r.features.iter().map(|f| f.p_value).collect(),
                significant: r.features.iter().map(|f| f.significant).collect(),
                error: None,
            },
            Err(e) => PintRecord { rep, seed, p_values: vec![], significant: vec![], error: Some(e.to_string()) },
        }
    });
    let h = if spec.h_statistic {
        let all: Vec<usize> = (0..d.n_features()).collect();
        h_statistics(model.as_ref(), &d, &all, seed).ok().map(|h2| HRecord { rep, seed, h2 })
    } else {
        None
    };
    RepOutput { records, pint, h }
}

fn summarize(spec: &ExperimentSpec, records: &[RepRecord]) -> Vec<VariantSummary> {
    let truth = spec.design.ground_truth(0.0).split_feature.map(|j| format!("x{}", j + 1));
    spec.variants
        .iter()
        .map(|v| {
            let all: Vec<&RepRecord> = records.iter().filter(|r| r.variant == v.label).collect();
            let ok: Vec<&RepRecord> = all.iter().copied().filter(|r| r.error.is_none()).collect();
            let n = ok.len().max(1) as f64;
            let values: Vec<f64> = ok.iter().filter_map(|r| r.first_split_value).collect();
            let leaves: Vec<f64> = ok.iter().map(|r| r.n_leaves as f64).collect();
            VariantSummary {
                variant: v.label.clone(),
                runs: all.len(),
                failures: all.len() - ok.len(),
                true_first_split_share: truth
                    .as_ref()
                    .map(|t| ok.iter().filter(|r| r.first_split_feature.as_ref() == Some(t)).count() as f64 / n),
                split_value_min: values.iter().copied().reduce(f64::min),
                split_value_max: values.iter().copied().reduce(f64::max),
                second_level_share: ok.iter().filter(|r| !r.second_level_features.is_empty()).count() as f64 / n,
                leaves_min: ok.iter().map(|r| r.n_leaves).min().unwrap_or(0),
                leaves_max: ok.iter().map(|r| r.n_leaves).max().unwrap_or(0),
                leaves_median: if leaves.is_empty() { 0.0 } else { stats::median(&leaves) },
                r2_total_mean: stats::mean(&ok.iter().map(|r| r.r2_total).collect::<Vec<_>>()),
                test_mse_mean: stats::mean(&ok.iter().map(|r| r.test_mse).collect::<Vec<_>>()),
            }
        })
        .collect()
}

fn summarize_features(p: usize, pint: &[PintRecord], h: &[HRecord]) -> Vec<FeatureSummary> {
    let ok: Vec<&PintRecord> = pint.iter().filter(|r| r.error.is_none() && r.p_values.len() == p).collect();
    (0..p)
        .map(|j| {
            let ps: Vec<f64> = ok.iter().map(|r| r.p_values[j]).collect();
            let hs: Vec<f64> = h.iter().map(|r| r.h2[j]).collect();
            FeatureSummary {
                feature: format!("x{}", j + 1),
                significant_share: (!ok.is_empty()).then(|| ok.iter().filter(|r| r.significant[j]).count() as f64 / ok.len() as f64),
                p_value_median: (!ps.is_empty()).then(|| stats::median(&ps)),
                h2_min: hs.iter().copied().reduce(f64::min),
                h2_max: hs.iter().copied().reduce(f64::max),
                h2_mean: (!hs.is_empty()).then(|| stats::mean(&hs)),
            }
        })
        .collect()
}

/// Run every repetition (in parallel) and aggregate. Failing repetitions are
/// recorded with their error and do not stop the run.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    if spec.reps < 1 {
        return Err(GadgetError::Usage("at least one repetition is required".into()));
    }
    spec.design.validate()?;
    spec.learner.validate()?;
    let outs: Vec<RepOutput> = (0..spec.reps).into_par_iter().map(|rep| run_rep(spec, rep)).collect();
    let mut records = Vec::new();
    let mut pint = Vec::new();
    let mut h = Vec::new();
    for o in outs {
        records.extend(o.records);
        pint.extend(o.pint);
        h.extend(o.h);
    }
    let summary = summarize(spec, &records);
    let features = summarize_features(spec.design.n_features(), &pint, &h);
    Ok(ExperimentResult { spec: spec.clone(), records, pint, h_statistic: h, summary, features })
}

impl ExperimentResult {
    pub fn to_json(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("result serializes");
        v["schema_version"] = serde_json::json!(1);
        v
    }

    pub fn records_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["rep", "seed", "variant", "first_split_feature", "first_split_value", "n_leaves", "r2_total", "test_mse", "error"])?;
        for r in &self.records {
            out.write_record([
                r.rep.to_string(),
                r.seed.to_string(),
                r.variant.clone(),
                r.first_split_feature.clone().unwrap_or_default(),
                r.first_split_value.map(|v| v.to_string()).unwrap_or_default(),
                r.n_leaves.to_string(),
                r.r2_total.to_string(),
                r.test_mse.to_string(),
                r.error.clone().unwrap_or_default(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn summary_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record([
            "variant", "runs", "failures", "true_first_split_share", "split_min", "split_max", "second_level_share", "leaves_min",
            "leaves_max", "leaves_median", "r2_total_mean", "test_mse_mean",
        ])?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for s in &self.summary {
            out.write_record([
                s.variant.clone(),
                s.runs.to_string(),
                s.failures.to_string(),
                opt(s.true_first_split_share),
                opt(s.split_value_min),
                opt(s.split_value_max),
                s.second_level_share.to_string(),
                s.leaves_min.to_string(),
                s.leaves_max.to_string(),
                s.leaves_median.to_string(),
                s.r2_total_mean.to_string(),
                s.test_mse_mean.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn features_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["feature", "significant_share", "p_value_median", "h2_min", "h2_max", "h2_mean"])?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for f in &self.features {
            out.write_record([f.feature.clone(), opt(f.significant_share), opt(f.p_value_median), opt(f.h2_min), opt(f.h2_max), opt(f.h2_mean)])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Default variants for a design: one per method with the design's stop settings.
pub fn default_variants(kind: DesignKind, methods: &[Method]) -> Vec<Variant> {
    let mut out = Vec::new();
    for &m in methods {
        match kind {
            DesignKind::Xor { .. } => out.push(Variant::new(m.to_string(), GadgetConfig::all_features(m, 3).with_stop(6, 40, 0.2))),
            DesignKind::Spurious => out.push(Variant::new(m.to_string(), GadgetConfig::all_features(m, 4).with_stop(6, 40, 0.15))),
            DesignKind::Hierarchical => {
                let base = GadgetConfig::new(m, vec![0], vec![1, 2, 3, 4]).with_stop(7, 40, 0.1);
                if m == Method::Sd {
                    let mut no = base.clone();
                    no.sd_recalculate = false;
                    out.push(Variant::new("sd-recalc", base));
                    out.push(Variant::new("sd-no-recalc", no));
                } else {
                    out.push(Variant::new(m.to_string(), base));
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mixing_weights() {
        assert_eq!(xor_mixing(0.0), 0.0);
        let c = xor_mixing(0.9);
        assert!((c / (c * c + (1.0 - c) * (1.0 - c)).sqrt() - 0.9).abs() < 1e-12);
        assert!(c < 0.7);
    }

    #[test]
    fn unsupported_rho_lists_values() {
        let e = generate(&SimDesign::xor(0.5, 100, 1)).unwrap_err().to_string();
        assert!(e.contains("0, 0.4, 0.7, 0.9"));
    }

    #[test]
    fn reproducible_and_consistent() {
        for design in [SimDesign::xor(0.4, 200, 5), SimDesign::hierarchical(200, 5), SimDesign::spurious(200, 5)] {
            let (a, f) = generate_with_truth(&design).unwrap();
            let (b, _) = generate_with_truth(&design).unwrap();
            assert_eq!(a.x(), b.x());
            assert_eq!(a.y(), b.y());
            for (i, r) in a.x().rows().into_iter().enumerate() {
                assert_eq!(design.truth(r.as_slice().unwrap()), f[i]);
            }
            let (c, _) = generate_with_truth(&design.noiseless()).unwrap();
            assert_eq!(c.y(), &f[..]);
        }
    }

    #[test]
    fn hierarchical_regions_match_slopes() {
        let design = SimDesign::hierarchical(10, 0);
        let gt = design.ground_truth(0.0);
        assert_eq!(gt.regions.len(), 5);
        let probe = [
            ([0.5, 0.0, -0.5, 0.5, 0.0], 1.0),
            ([0.5, 0.0, -0.5, -0.5, 0.0], 4.0),
            ([0.5, 0.5, 0.5, 0.0, -0.5], -1.0),
            ([0.5, -0.5, 0.5, 0.0, -0.5], -3.0),
            ([0.5, 0.0, 0.5, 0.0, 0.5], -5.0),
        ];
        for (k, (x, slope)) in probe.iter().enumerate() {
            assert_eq!(hierarchical_slope(x), *slope);
            assert_eq!(gt.regions[k].slopes[0].1, *slope);
        }
    }
}

//! Command-line front end: `explain`, `pint`, `simlab run`, `hstat`, `version`.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::data::{load_dataset, Dataset, GridMode};
use crate::error::{GadgetError, Result};
use crate::gadget::{fit_tree, regional_effects, GadgetConfig, Method};
use crate::interactions::{h_statistics, InteractionReport};
use crate::learners::{fit, ExternalTable, LearnerKind, LearnerSpec, SharedPredictor};
use crate::pint::{run_pint, DistFit, PintConfig};
use crate::simlab::{default_variants, run_experiment, DesignKind, ExperimentSpec, SimDesign};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Parser)]
#[command(name = "gadget", version, about = "Regional feature effects and interaction detection for tabular models")]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "GADGET_THREADS")]
    pub threads: Option<usize>,

    /// Increase log verbosity.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a model, partition the feature space and export regional effects.
    Explain(ExplainArgs),
    /// Permutation interaction test for every feature.
    Pint(PintArgs),
    /// Simulation experiments.
    Simlab {
        #[command(subcommand)]
        command: SimlabCommand,
    },
    /// Global H-statistic per feature.
    Hstat(HstatArgs),
    /// Print the tool and schema versions.
    Version,
}

#[derive(Debug, Subcommand)]
pub enum SimlabCommand {
    Run(SimlabArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LearnerArg {
    Linear,
    LinearInteractions,
    Knn,
    BaggedTrees,
    External,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Input CSV with a header row.
    #[arg(long)]
    pub data: PathBuf,
    /// Name of the target column.
    #[arg(long)]
    pub target: String,
}

#[derive(Debug, Clone, Args)]
pub struct LearnerArgs {
    #[arg(long, value_enum, default_value = "bagged-trees")]
    pub learner: LearnerArg,
    #[arg(long, default_value_t = 50)]
    pub n_trees: usize,
    #[arg(long = "tree-depth", default_value_t = 10)]
    pub tree_depth: usize,
    #[arg(long, default_value_t = 3)]
    pub min_leaf: usize,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    /// Archived predictions for the external learner.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
}

impl LearnerArgs {
    fn spec(&self, seed: u64) -> LearnerSpec {
        let kind = match self.learner {
            LearnerArg::Linear => LearnerKind::Linear,
            LearnerArg::LinearInteractions => LearnerKind::LinearInteractions,
            LearnerArg::Knn => LearnerKind::Knn { k: self.k },
            LearnerArg::BaggedTrees => {
                LearnerKind::BaggedTrees { n_trees: self.n_trees, max_depth: self.tree_depth, min_leaf: self.min_leaf }
            }
            LearnerArg::External => LearnerKind::ExternalTable,
        };
        LearnerSpec::new(kind, seed)
    }

    fn model(&self, spec: &LearnerSpec, d: &Dataset) -> Result<SharedPredictor> {
        if spec.kind == LearnerKind::ExternalTable {
            let path = self
                .predictions
                .as_ref()
                .ok_or_else(|| GadgetError::Usage("the external learner needs --predictions".into()))?;
            return Ok(Arc::new(ExternalTable::from_archive(d, path)?));
        }
        fit(spec, d)
    }
}

#[derive(Debug, Clone, Args)]
pub struct ExplainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub learner: LearnerArgs,
    #[arg(long, default_value = "pd")]
    pub method: String,
    /// Features of interest: 1-based indices or names, comma separated.
    #[arg(long = "S")]
    pub s: Option<String>,
    /// Split candidates: 1-based indices or names, comma separated.
    #[arg(long = "Z")]
    pub z: Option<String>,
    /// Take S (and Z unless given) from a pint.json or handoff file.
    #[arg(long = "S-from")]
    pub s_from: Option<PathBuf>,
    #[arg(long, default_value_t = 6)]
    pub max_depth: usize,
    #[arg(long, default_value_t = 40)]
    pub min_node_size: usize,
    #[arg(long, default_value_t = 0.2)]
    pub gamma: f64,
    #[arg(long, default_value_t = 1.0)]
    pub r2_target: f64,
    #[arg(long, default_value_t = 20)]
    pub grid_size: usize,
    #[arg(long, default_value = "quantile")]
    pub grid_mode: String,
    #[arg(long)]
    pub ale_intervals: Option<usize>,
    #[arg(long, default_value_t = 30)]
    pub split_quantiles: usize,
    /// Keep the root Shapley values instead of recomputing them per node.
    #[arg(long)]
    pub no_recalc: bool,
    #[arg(long)]
    pub no_ale_repair: bool,
    #[arg(long, default_value_t = 200)]
    pub max_background: usize,
    /// Also compute the H-statistic for every feature of interest.
    #[arg(long)]
    pub h_statistic: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct PintArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub learner: LearnerArgs,
    #[arg(long, default_value = "pd")]
    pub method: String,
    /// Number of permutations.
    #[arg(long, default_value_t = 50)]
    pub s: usize,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value = "parametric-auto")]
    pub dist_fit: String,
    #[arg(long)]
    pub prefilter_threshold: Option<f64>,
    /// Features to test: 1-based indices or names.
    #[arg(long)]
    pub features: Option<String>,
    /// Add Bonferroni-adjusted p-values.
    #[arg(long)]
    pub bonferroni: bool,
    #[arg(long, default_value_t = 20)]
    pub grid_size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the selected feature set to this file.
    #[arg(long)]
    pub handoff: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct HstatArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub learner: LearnerArgs,
    #[arg(long)]
    pub features: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DesignArg {
    Xor,
    Hierarchical,
    Spurious,
}

#[derive(Debug, Clone, Args)]
pub struct SimlabArgs {
    #[arg(long, value_enum)]
    pub design: DesignArg,
    #[arg(long, default_value_t = 0.0)]
    pub rho: f64,
    #[arg(long, default_value_t = 500)]
    pub n: usize,
    #[arg(long, default_value_t = 10)]
    pub reps: usize,
    /// Methods to run, comma separated.
    #[arg(long, default_value = "pd,ale,sd")]
    pub method: String,
    #[arg(long, value_enum, default_value = "bagged-trees")]
    pub learner: LearnerArg,
    /// Run PINT in every repetition.
    #[arg(long)]
    pub pint: bool,
    #[arg(long, default_value_t = 50)]
    pub s: usize,
    #[arg(long)]
    pub h_statistic: bool,
    #[arg(long)]
    pub noiseless: bool,
    #[arg(long, default_value_t = 2000)]
    pub test_rows: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

/// Parse `1,3` or `x1,x3` into 0-based indices.
pub fn parse_features(spec: &str, d: &Dataset) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for tok in spec.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        let j = match d.feature_index(tok) {
            Some(j) => j,
            None => match tok.parse::<usize>() {
                Ok(k) if (1..=d.n_features()).contains(&k) => k - 1,
                _ => return Err(GadgetError::Usage(format!("unknown feature '{tok}'"))),
            },
        };
        if out.contains(&j) {
            return Err(GadgetError::Usage(format!("feature '{tok}' listed twice")));
        }
        out.push(j);
    }
    if out.is_empty() {
        return Err(GadgetError::Usage("empty feature list".into()));
    }
    Ok(out)
}

fn read_s_from(path: &Path, d: &Dataset) -> Result<Vec<usize>> {
    let v: Value = serde_json::from_str(&fs::read_to_string(path)?)?;
    let names = v
        .get("selected_names")
        .or_else(|| v.get("S"))
        .and_then(Value::as_array)
        .ok_or_else(|| GadgetError::Usage(format!("{} has no selected feature list", path.display())))?;
    let names: Vec<&str> = names.iter().filter_map(Value::as_str).collect();
    if names.is_empty() {
        return Err(GadgetError::Usage(format!("{} selects no features", path.display())));
    }
    parse_features(&names.join(","), d)
}

fn parse_grid_mode(s: &str) -> Result<GridMode> {
    match s {
        "quantile" => Ok(GridMode::Quantile),
        "equidistant" => Ok(GridMode::Equidistant),
        "unique-values" | "unique" => Ok(GridMode::UniqueValues),
        other => Err(GadgetError::Usage(format!("unknown grid mode '{other}'"))),
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn pretty(v: &Value) -> Vec<u8> {
    let mut s = serde_json::to_vec_pretty(v).expect("json serializes");
    s.push(b'\n');
    s
}

/// Files produced by a command, written together and removed together on failure.
#[derive(Default)]
struct Artifacts {
    files: Vec<(PathBuf, Vec<u8>)>,
}

impl Artifacts {
    fn add(&mut self, path: PathBuf, bytes: Vec<u8>) {
        self.files.push((path, bytes));
    }

    fn hashes(&self) -> Value {
        let m: serde_json::Map<String, Value> = self
            .files
            .iter()
            .map(|(p, b)| (p.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default(), json!(sha256_hex(b))))
            .collect();
        Value::Object(m)
    }

    fn commit(self) -> Result<Vec<PathBuf>> {
        let mut written = Vec::new();
        for (path, bytes) in &self.files {
            let res = path.parent().filter(|p| !p.as_os_str().is_empty()).map_or(Ok(()), fs::create_dir_all).and_then(|_| fs::write(path, bytes));
            if let Err(e) = res {
                for w in &written {
                    let _ = fs::remove_file(w);
                }
                return Err(e.into());
            }
            written.push(path.clone());
        }
        Ok(written)
    }
}

fn input_entry(path: &Path) -> Result<Value> {
    let bytes = fs::read(path)?;
    Ok(json!({"path": path.display().to_string(), "sha256": sha256_hex(&bytes)}))
}

fn manifest(command: &str, argv: &[String], inputs: Vec<Value>, learner: &LearnerSpec, method: Option<Method>, config: Value, seed: u64, outputs: Value) -> Value {
    json!({
        "schema_version": SCHEMA_VERSION,
        "tool": "gadget",
        "tool_version": VERSION,
        "command": command,
        "argv": argv,
        "inputs": inputs,
        "learner": learner,
        "method": method,
        "config": config,
        "seed": seed,
        "outputs": outputs,
    })
}

fn explain(a: &ExplainArgs, argv: &[String]) -> Result<Vec<PathBuf>> {
    let d = load_dataset(&a.data.data, &a.data.target, None)?;
    let method: Method = a.method.parse()?;
    let all: Vec<usize> = (0..d.n_features()).collect();
    let from = a.s_from.as_ref().map(|p| read_s_from(p, &d)).transpose()?;
    let s = match (&a.s, &from) {
        (Some(s), _) => parse_features(s, &d)?,
        (None, Some(f)) => f.clone(),
        (None, None) => all.clone(),
    };
    let z = match (&a.z, &from) {
        (Some(z), _) => parse_features(z, &d)?,
        (None, Some(f)) => f.clone(),
        (None, None) => all.clone(),
    };
    let mut cfg = GadgetConfig::new(method, s, z).with_stop(a.max_depth, a.min_node_size, a.gamma).with_seed(a.seed);
    cfg.stop.r2_total_target = a.r2_target;
    cfg.grid_size = a.grid_size;
    cfg.grid_mode = parse_grid_mode(&a.grid_mode)?;
    cfg.ale_intervals = a.ale_intervals;
    cfg.max_candidates = a.split_quantiles;
    cfg.sd_recalculate = !a.no_recalc;
    cfg.ale_repair = !a.no_ale_repair;
    cfg.max_background = a.max_background;
    cfg.validate(&d)?;

    let spec = a.learner.spec(a.seed);
    let model = a.learner.model(&spec, &d)?;
    info!("fitted {} on {} rows", model.name(), d.n_rows());
    let tree = fit_tree(&cfg, &d, model.as_ref())?;
    info!("tree has {} leaves", tree.n_leaves());
    let mut report = InteractionReport::from_tree(&tree);
    if a.h_statistic {
        report.h_statistic = Some(h_statistics(model.as_ref(), &d, &cfg.s, a.seed)?);
    }
    for w in &report.warnings {
        warn!("{w}");
    }
    let leaves = regional_effects(&tree, &d)?;
    let curves = json!({
        "schema_version": SCHEMA_VERSION,
        "method": method,
        "leaves": leaves,
    });
    let mut csv = Vec::new();
    report.write_csv(&mut csv)?;

    let mut arts = Artifacts::default();
    arts.add(a.out.join("tree.json"), pretty(&tree.to_json(&d)));
    arts.add(a.out.join("curves.json"), pretty(&curves));
    arts.add(a.out.join("report.json"), pretty(&report.to_json()));
    arts.add(a.out.join("report.csv"), csv);
    let mut inputs = vec![input_entry(&a.data.data)?];
    if let Some(p) = &a.learner.predictions {
        inputs.push(input_entry(p)?);
    }
    if let Some(p) = &a.s_from {
        inputs.push(input_entry(p)?);
    }
    let m = manifest("explain", argv, inputs, &spec, Some(method), serde_json::to_value(&cfg)?, a.seed, arts.hashes());
    arts.add(a.out.join("manifest.json"), pretty(&m));
    arts.commit()
}

fn pint_cmd(a: &PintArgs, argv: &[String]) -> Result<Vec<PathBuf>> {
    let d = load_dataset(&a.data.data, &a.data.target, None)?;
    let mut cfg = PintConfig::new(a.method.parse()?);
    cfg.s = a.s;
    cfg.alpha = a.alpha;
    cfg.dist_fit = a.dist_fit.parse::<DistFit>()?;
    cfg.seed = a.seed;
    cfg.prefilter = a.prefilter_threshold;
    cfg.features = a.features.as_ref().map(|f| parse_features(f, &d)).transpose()?;
    cfg.bonferroni = a.bonferroni;
    cfg.grid_size = a.grid_size;
    let spec = a.learner.spec(a.seed);
    cfg.validate()?;
    let res = run_pint(&cfg, &spec, &d)?;
    let mut arts = Artifacts::default();
    arts.add(a.out.clone(), pretty(&res.to_json()));
    if let Some(h) = &a.handoff {
        arts.add(h.clone(), pretty(&json!({"schema_version": SCHEMA_VERSION, "S": res.selected_names})));
    }
    let m = manifest("pint", argv, vec![input_entry(&a.data.data)?], &spec, Some(cfg.method), serde_json::to_value(&cfg)?, a.seed, arts.hashes());
    arts.add(sibling(&a.out, "manifest.json"), pretty(&m));
    arts.commit()
}

fn hstat_cmd(a: &HstatArgs, argv: &[String]) -> Result<Vec<PathBuf>> {
    let d = load_dataset(&a.data.data, &a.data.target, None)?;
    let features = match &a.features {
        Some(f) => parse_features(f, &d)?,
        None => (0..d.n_features()).collect(),
    };
    let spec = a.learner.spec(a.seed);
    let model = a.learner.model(&spec, &d)?;
    let h = h_statistics(model.as_ref(), &d, &features, a.seed)?;
    let rows: Vec<Value> = features.iter().zip(&h).map(|(&j, v)| json!({"feature": d.column(j).name, "h2": v})).collect();
    let mut arts = Artifacts::default();
    arts.add(a.out.clone(), pretty(&json!({"schema_version": SCHEMA_VERSION, "features": rows})));
    let m = manifest("hstat", argv, vec![input_entry(&a.data.data)?], &spec, None, json!({"features": features}), a.seed, arts.hashes());
    arts.add(sibling(&a.out, "manifest.json"), pretty(&m));
    arts.commit()
}

fn simlab_cmd(a: &SimlabArgs, argv: &[String]) -> Result<Vec<PathBuf>> {
    let mut design = match a.design {
        DesignArg::Xor => SimDesign::xor(a.rho, a.n, a.seed),
        DesignArg::Hierarchical => SimDesign::hierarchical(a.n, a.seed),
        DesignArg::Spurious => SimDesign::spurious(a.n, a.seed),
    };
    if a.noiseless {
        design = design.noiseless();
    }
    design.validate()?;
    let methods: Vec<Method> = a.method.split(',').map(|m| m.trim().parse()).collect::<Result<_>>()?;
    let learner = LearnerArgs { learner: a.learner, n_trees: 50, tree_depth: 10, min_leaf: 3, k: 10, predictions: None }.spec(a.seed);
    if !learner.is_trainable() {
        return Err(GadgetError::Usage("simulations need a trainable learner".into()));
    }
    let mut spec = ExperimentSpec::new(design, learner.clone(), a.reps);
    spec.variants = default_variants(design.kind, &methods);
    spec.h_statistic = a.h_statistic;
    spec.test_rows = a.test_rows;
    if a.pint {
        let mut pc = PintConfig::new(methods[0]);
        pc.s = a.s;
        spec.pint = Some(pc);
    }
    let res = run_experiment(&spec)?;
    let failures = res.records.iter().filter(|r| r.error.is_some()).count();
    if failures > 0 {
        warn!("{failures} repetition records failed; see the error column");
    }
    let mut arts = Artifacts::default();
    arts.add(a.out.clone(), pretty(&res.to_json()));
    for (suffix, which) in [("records", 0), ("summary", 1), ("features", 2)] {
        let mut buf = Vec::new();
        match which {
            0 => res.records_csv(&mut buf)?,
            1 => res.summary_csv(&mut buf)?,
            _ => res.features_csv(&mut buf)?,
        }
        arts.add(with_suffix(&a.out, suffix), buf);
    }
    let method = if let DesignKind::Xor { .. } = design.kind { methods.first().copied() } else { None };
    let m = manifest("simlab run", argv, vec![], &learner, method, serde_json::to_value(&spec)?, a.seed, arts.hashes());
    arts.add(sibling(&a.out, "manifest.json"), pretty(&m));
    arts.commit()
}

fn sibling(path: &Path, name: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{name}"))
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}.csv"))
}

fn init_threads(threads: Option<usize>) {
    if let Some(n) = threads.filter(|&n| n > 0) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            warn!("could not size the thread pool: {e}");
        }
    }
}

fn error_kind(e: &GadgetError) -> &'static str {
    match e.exit_code() {
        2 => "usage",
        3 => "data",
        _ => "numeric",
    }
}

/// Run the CLI on `argv` (including the program name); returns the exit code.
pub fn run(argv: Vec<String>) -> i32 {
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    init_threads(cli.threads);
    let args: Vec<String> = argv.iter().skip(1).cloned().collect();
    let res = match &cli.command {
        Command::Explain(a) => explain(a, &args),
        Command::Pint(a) => pint_cmd(a, &args),
        Command::Hstat(a) => hstat_cmd(a, &args),
        Command::Simlab { command: SimlabCommand::Run(a) } => simlab_cmd(a, &args),
        Command::Version => {
            println!("gadget {VERSION} (schema {SCHEMA_VERSION})");
            return 0;
        }
    };
    match res {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            0
        }
        Err(e) => {
            let code = e.exit_code();
            eprintln!("{}", json!({"error": error_kind(&e), "message": e.to_string(), "exit_code": code}));
            code
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn three() -> Dataset {
        let x = Array2::from_shape_fn((4, 3), |(i, j)| (i * 3 + j) as f64);
        Dataset::from_numeric(x, vec![0.0; 4]).unwrap()
    }

    #[test]
    fn features_by_name_or_position() {
        let d = three();
        assert_eq!(parse_features("x1, 3", &d).unwrap(), vec![0, 2]);
        assert_eq!(parse_features("x2", &d).unwrap(), vec![1]);
    }

    #[test]
    fn bad_feature_lists_are_usage_errors() {
        let d = three();
        for spec in ["x9", "0", "4", "x1,1", ""] {
            assert_eq!(parse_features(spec, &d).unwrap_err().exit_code(), 2, "{spec}");
        }
    }

    #[test]
    fn explain_defaults_parse() {
        let cli = Cli::try_parse_from(["gadget", "explain", "--data", "a.csv", "--target", "y", "--out", "o"]).unwrap();
        let Command::Explain(a) = cli.command else { panic!("expected explain") };
        assert_eq!(a.method, "pd");
        assert_eq!((a.max_depth, a.min_node_size, a.gamma), (6, 40, 0.2));
        assert_eq!(a.split_quantiles, 30);
    }

    #[test]
    fn clap_errors_exit_two() {
        assert_eq!(run(vec!["gadget".into(), "frobnicate".into()]), 2);
    }
}

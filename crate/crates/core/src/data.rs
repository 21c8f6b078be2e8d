//! Tabular data, feature metadata, subspaces and evaluation grids.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::Path;

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{GadgetError, Result};
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Numeric,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMeta {
    pub name: String,
    pub kind: FeatureKind,
    /// Category labels in code order; empty for numeric features.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub categories: Vec<String>,
}

impl FeatureMeta {
    pub fn numeric(name: impl Into<String>) -> Self {
        FeatureMeta { name: name.into(), kind: FeatureKind::Numeric, categories: Vec::new() }
    }

    pub fn categorical(name: impl Into<String>, categories: Vec<String>) -> Self {
        FeatureMeta { name: name.into(), kind: FeatureKind::Categorical, categories }
    }

    pub fn is_categorical(&self) -> bool {
        self.kind == FeatureKind::Categorical
    }
}

/// Feature matrix plus target. Categorical values are stored as integer codes
/// indexing `FeatureMeta::categories`.
#[derive(Debug, Clone)]
pub struct Dataset {
    columns: Vec<FeatureMeta>,
    x: Array2<f64>,
    y: Vec<f64>,
    target: String,
}

impl Dataset {
    pub fn new(columns: Vec<FeatureMeta>, x: Array2<f64>, y: Vec<f64>) -> Result<Self> {
        Self::with_target_name(columns, x, y, "y")
    }

    pub fn with_target_name(
        columns: Vec<FeatureMeta>,
        x: Array2<f64>,
        y: Vec<f64>,
        target: impl Into<String>,
    ) -> Result<Self> {
        let (n, p) = x.dim();
        if n == 0 {
            return Err(GadgetError::Data("dataset has no rows".into()));
        }
        if p != columns.len() {
            return Err(GadgetError::SchemaMismatch { expected: columns.len(), got: p });
        }
        if y.len() != n {
            return Err(GadgetError::Data(format!("target has {} values for {} rows", y.len(), n)));
        }
        let mut seen = HashSet::new();
        for c in &columns {
            if !seen.insert(c.name.as_str()) {
                return Err(GadgetError::Data(format!("duplicate feature name '{}'", c.name)));
            }
            if c.is_categorical() && c.categories.len() < 2 {
                return Err(GadgetError::Data(format!(
                    "categorical feature '{}' needs at least 2 categories",
                    c.name
                )));
            }
        }
        for (i, row) in x.outer_iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(GadgetError::MissingValue { row: i + 1, column: columns[j].name.clone() });
                }
                let c = &columns[j];
                if c.is_categorical() && (v.fract() != 0.0 || *v < 0.0 || *v as usize >= c.categories.len()) {
                    return Err(GadgetError::Data(format!(
                        "row {}: invalid category code {} for '{}'",
                        i + 1,
                        v,
                        c.name
                    )));
                }
            }
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(GadgetError::MissingValue { row: i + 1, column: "target".into() });
        }
        Ok(Dataset { columns, x, y, target: target.into() })
    }

    /// All-numeric dataset with generated names `x1..xp`.
    pub fn from_numeric(x: Array2<f64>, y: Vec<f64>) -> Result<Self> {
        let columns = (1..=x.ncols()).map(|j| FeatureMeta::numeric(format!("x{j}"))).collect();
        Self::new(columns, x, y)
    }

    pub fn n_rows(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.x.ncols()
    }

    pub fn columns(&self) -> &[FeatureMeta] {
        &self.columns
    }

    pub fn column(&self, j: usize) -> &FeatureMeta {
        &self.columns[j]
    }

    pub fn x(&self) -> &Array2<f64> {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn target_name(&self) -> &str {
        &self.target
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.x.row(i)
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.x[[i, j]]
    }

    pub fn feature_values(&self, j: usize, rows: &[usize]) -> Vec<f64> {
        rows.iter().map(|&i| self.x[[i, j]]).collect()
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn all_rows(&self) -> Vec<usize> {
        (0..self.n_rows()).collect()
    }

    /// Same features, replaced target.
    pub fn with_y(&self, y: Vec<f64>) -> Result<Self> {
        Self::with_target_name(self.columns.clone(), self.x.clone(), y, self.target.clone())
    }

    /// Rows selected in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let x = self.x.select(ndarray::Axis(0), rows);
        let y = rows.iter().map(|&i| self.y[i]).collect();
        Self::with_target_name(self.columns.clone(), x, y, self.target.clone())
    }

    /// Human-readable value, mapping category codes back to labels.
    pub fn format_value(&self, j: usize, v: f64) -> String {
        let c = &self.columns[j];
        if c.is_categorical() {
            c.categories.get(v as usize).cloned().unwrap_or_else(|| v.to_string())
        } else {
            format!("{v}")
        }
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<String> = self.columns.iter().map(|c| c.name.clone()).collect();
        header.push(self.target.clone());
        w.write_record(&header)?;
        for i in 0..self.n_rows() {
            let mut rec: Vec<String> = (0..self.n_features()).map(|j| self.format_value(j, self.x[[i, j]])).collect();
            rec.push(format!("{}", self.y[i]));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Optional per-column overrides when reading CSV.
pub type SchemaHints = HashMap<String, FeatureKind>;

/// Read a headered CSV. Numeric columns stay numeric, anything else becomes
/// categorical with categories in first-appearance order. A non-numeric target
/// with exactly two labels is encoded 0/1 in first-appearance order.
pub fn load_dataset(path: &Path, target: &str, hints: Option<&SchemaHints>) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(|s| s.trim().to_string()).collect();
    if header.is_empty() || header.iter().all(|h| h.is_empty()) {
        return Err(GadgetError::Data("empty file".into()));
    }
    let target_col = header
        .iter()
        .position(|h| h == target)
        .ok_or_else(|| GadgetError::Data(format!("unknown target column '{target}'")))?;

    let mut cells: Vec<Vec<String>> = vec![Vec::new(); header.len()];
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != header.len() {
            return Err(GadgetError::Data(format!(
                "row {}: expected {} fields, found {}",
                r + 1,
                header.len(),
                rec.len()
            )));
        }
        for (c, field) in rec.iter().enumerate() {
            let field = field.trim();
            if field.is_empty() || field.eq_ignore_ascii_case("na") || field.eq_ignore_ascii_case("nan") {
                return Err(GadgetError::MissingValue { row: r + 1, column: header[c].clone() });
            }
            cells[c].push(field.to_string());
        }
    }
    let n = cells[0].len();
    if n == 0 {
        return Err(GadgetError::Data("empty file: no data rows".into()));
    }

    let parse_numeric = |col: &[String]| -> Option<Vec<f64>> {
        col.iter().map(|s| s.parse::<f64>().ok().filter(|v| v.is_finite())).collect()
    };

    let y = match parse_numeric(&cells[target_col]) {
        Some(v) => v,
        None => {
            let (codes, labels) = encode_categorical(&cells[target_col]);
            if labels.len() != 2 {
                return Err(GadgetError::Data(format!(
                    "target '{target}' is non-numeric with {} labels; only binary labels are supported",
                    labels.len()
                )));
            }
            codes
        }
    };

    let mut columns = Vec::new();
    let mut data: Vec<Vec<f64>> = Vec::new();
    for (c, name) in header.iter().enumerate() {
        if c == target_col {
            continue;
        }
        let hint = hints.and_then(|h| h.get(name)).copied();
        let numeric = if hint == Some(FeatureKind::Categorical) { None } else { parse_numeric(&cells[c]) };
        match (numeric, hint) {
            (Some(v), _) => {
                columns.push(FeatureMeta::numeric(name.clone()));
                data.push(v);
            }
            (None, Some(FeatureKind::Numeric)) => {
                return Err(GadgetError::Data(format!("column '{name}' declared numeric but has non-numeric values")));
            }
            (None, _) => {
                let (codes, labels) = encode_categorical(&cells[c]);
                if labels.len() < 2 {
                    return Err(GadgetError::Data(format!("categorical column '{name}' has fewer than 2 categories")));
                }
                columns.push(FeatureMeta::categorical(name.clone(), labels));
                data.push(codes);
            }
        }
    }
    let p = columns.len();
    let x = Array2::from_shape_fn((n, p), |(i, j)| data[j][i]);
    Dataset::with_target_name(columns, x, y, target)
}

fn encode_categorical(col: &[String]) -> (Vec<f64>, Vec<String>) {
    let mut labels: Vec<String> = Vec::new();
    let mut index: HashMap<&str, usize> = HashMap::new();
    let mut codes = Vec::with_capacity(col.len());
    for s in col {
        let code = *index.entry(s.as_str()).or_insert_with(|| {
            labels.push(s.clone());
            labels.len() - 1
        });
        codes.push(code as f64);
    }
    (codes, labels)
}

/// One side of a split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Predicate {
    LessEq { threshold: f64 },
    Greater { threshold: f64 },
    InSet { codes: Vec<usize> },
}

impl Predicate {
    pub fn holds(&self, v: f64) -> bool {
        match self {
            Predicate::LessEq { threshold } => v <= *threshold,
            Predicate::Greater { threshold } => v > *threshold,
            Predicate::InSet { codes } => codes.contains(&(v as usize)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub feature: usize,
    pub predicate: Predicate,
}

/// Conjunction of per-feature constraints. The root subspace has none.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Subspace {
    pub constraints: Vec<Constraint>,
}

impl Subspace {
    pub fn root() -> Self {
        Subspace::default()
    }

    pub fn is_root(&self) -> bool {
        self.constraints.is_empty()
    }

    pub fn with(&self, feature: usize, predicate: Predicate) -> Self {
        let mut s = self.clone();
        s.constraints.push(Constraint { feature, predicate });
        s
    }

    pub fn contains(&self, row: ArrayView1<'_, f64>) -> bool {
        self.constraints.iter().all(|c| c.predicate.holds(row[c.feature]))
    }

    /// Whether value `v` of feature `j` is compatible with every constraint on `j`.
    pub fn admits(&self, j: usize, v: f64) -> bool {
        self.constraints.iter().filter(|c| c.feature == j).all(|c| c.predicate.holds(v))
    }

    pub fn constrains(&self, j: usize) -> bool {
        self.constraints.iter().any(|c| c.feature == j)
    }

    pub fn describe(&self, d: &Dataset) -> String {
        if self.constraints.is_empty() {
            return "all".into();
        }
        self.constraints
            .iter()
            .map(|c| {
                let name = &d.column(c.feature).name;
                match &c.predicate {
                    Predicate::LessEq { threshold } => format!("{name} <= {threshold}"),
                    Predicate::Greater { threshold } => format!("{name} > {threshold}"),
                    Predicate::InSet { codes } => {
                        let labels: Vec<String> = codes.iter().map(|&k| d.format_value(c.feature, k as f64)).collect();
                        format!("{name} in {{{}}}", labels.join(","))
                    }
                }
            })
            .collect::<Vec<_>>()
            .join(" & ")
    }
}

/// Row indices of `d` satisfying every constraint of `s`, in ascending order.
pub fn filter_rows(d: &Dataset, s: &Subspace) -> Vec<usize> {
    (0..d.n_rows()).filter(|&i| s.contains(d.row(i))).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridMode {
    Quantile,
    Equidistant,
    UniqueValues,
}

impl fmt::Display for GridMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            GridMode::Quantile => "quantile",
            GridMode::Equidistant => "equidistant",
            GridMode::UniqueValues => "unique-values",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub feature: usize,
    pub points: Vec<f64>,
    pub mode: GridMode,
}

impl GridSpec {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

pub const DEFAULT_GRID_SIZE: usize = 20;

/// Evaluation grid for feature `j` over all rows.
pub fn make_grid(d: &Dataset, j: usize, m: usize, mode: GridMode) -> Result<GridSpec> {
    make_grid_on(d, &d.all_rows(), j, m, mode)
}

/// Evaluation grid for feature `j` over the given rows.
pub fn make_grid_on(d: &Dataset, rows: &[usize], j: usize, m: usize, mode: GridMode) -> Result<GridSpec> {
    let meta = d.column(j);
    if meta.is_categorical() {
        let points = (0..meta.categories.len()).map(|k| k as f64).collect();
        return Ok(GridSpec { feature: j, points, mode: GridMode::UniqueValues });
    }
    if m < 2 && mode != GridMode::UniqueValues {
        return Err(GadgetError::Usage(format!("grid size must be at least 2, got {m}")));
    }
    let sorted = stats::sorted_copy(&d.feature_values(j, rows));
    if sorted.is_empty() {
        return Err(GadgetError::Data("cannot build a grid on zero rows".into()));
    }
    let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
    if lo == hi {
        return Err(GadgetError::DegenerateFeature(format!("'{}' is constant", meta.name)));
    }
    let points = match mode {
        GridMode::Quantile => {
            let q: Vec<f64> = (0..m).map(|k| stats::quantile_sorted(&sorted, k as f64 / (m - 1) as f64)).collect();
            stats::dedup_sorted(q)
        }
        GridMode::Equidistant => (0..m).map(|k| lo + (hi - lo) * k as f64 / (m - 1) as f64).collect(),
        GridMode::UniqueValues => stats::dedup_sorted(sorted),
    };
    Ok(GridSpec { feature: j, points, mode })
}

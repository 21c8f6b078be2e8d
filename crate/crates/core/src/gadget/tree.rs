use std::collections::VecDeque;

use log::{debug, info};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::config::GadgetConfig;
use super::engine::{EffectEngine, NodeState, Side};
use crate::data::{Dataset, Predicate, Subspace};
use crate::error::Result;
use crate::learners::Predictor;
use crate::stats;

/// How a node's rows are divided.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum SplitRule {
    /// Left child holds `x <= threshold`.
    Threshold { threshold: f64 },
    /// Left child holds the listed category codes.
    Partition { left: Vec<usize>, right: Vec<usize> },
}

impl SplitRule {
    pub fn predicates(&self) -> (Predicate, Predicate) {
        match self {
            SplitRule::Threshold { threshold } => {
                (Predicate::LessEq { threshold: *threshold }, Predicate::Greater { threshold: *threshold })
            }
            SplitRule::Partition { left, right } => {
                (Predicate::InSet { codes: left.clone() }, Predicate::InSet { codes: right.clone() })
            }
        }
    }

    pub fn threshold(&self) -> Option<f64> {
        match self {
            SplitRule::Threshold { threshold } => Some(*threshold),
            SplitRule::Partition { .. } => None,
        }
    }

    pub fn goes_left(&self, v: f64) -> bool {
        self.predicates().0.holds(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitRecord {
    pub feature: usize,
    pub rule: SplitRule,
    /// Summed child risks over the features of interest.
    pub objective: f64,
    /// Parent risk sum minus the objective.
    pub reduction: f64,
    /// `reduction` relative to the root risk sum.
    pub relative_reduction: f64,
    pub left: usize,
    pub right: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GadgetNode {
    pub id: usize,
    pub depth: usize,
    pub parent: Option<usize>,
    pub subspace: Subspace,
    pub rows: Vec<usize>,
    /// Risk per feature of interest (aligned with the config's S).
    pub risks: Vec<f64>,
    pub split: Option<SplitRecord>,
}

impl GadgetNode {
    pub fn is_leaf(&self) -> bool {
        self.split.is_none()
    }

    pub fn total_risk(&self) -> f64 {
        self.risks.iter().sum()
    }
}

/// One evaluated split candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub node: usize,
    pub feature: usize,
    pub rule: SplitRule,
    pub objective: f64,
    pub n_left: usize,
    pub n_right: usize,
    pub left_risks: Vec<f64>,
    pub right_risks: Vec<f64>,
}

/// Why a node was not split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    MaxDepth,
    MinNodeSize,
    NoCandidate,
    NoImprovement,
    Gamma,
    R2Target,
    NoHeterogeneity,
}

pub struct GadgetTree {
    pub config: GadgetConfig,
    pub feature_names: Vec<String>,
    pub nodes: Vec<GadgetNode>,
    pub audit: Vec<CandidateRecord>,
    pub stop_reasons: Vec<(usize, StopReason)>,
    pub(crate) engine: EffectEngine,
    /// Local-effect state of every leaf, indexed by node id.
    pub(crate) states: Vec<Option<NodeState>>,
    pub(crate) prediction_variance: f64,
}

impl std::fmt::Debug for GadgetTree {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GadgetTree").field("nodes", &self.nodes.len()).field("leaves", &self.n_leaves()).finish()
    }
}

impl GadgetTree {
    pub fn root(&self) -> &GadgetNode {
        &self.nodes[0]
    }

    pub fn leaves(&self) -> Vec<&GadgetNode> {
        self.nodes.iter().filter(|n| n.is_leaf()).collect()
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_leaf()).count()
    }

    pub fn internal_nodes(&self) -> Vec<&GadgetNode> {
        self.nodes.iter().filter(|n| !n.is_leaf()).collect()
    }

    pub fn depth(&self) -> usize {
        self.nodes.iter().map(|n| n.depth).max().unwrap_or(0)
    }

    pub fn root_risk(&self, pos: usize) -> f64 {
        self.nodes[0].risks[pos]
    }

    pub fn first_split(&self) -> Option<&SplitRecord> {
        self.nodes[0].split.as_ref()
    }

    pub fn prediction_variance(&self) -> f64 {
        self.prediction_variance
    }

    pub fn state(&self, id: usize) -> Option<&NodeState> {
        self.states.get(id).and_then(|s| s.as_ref())
    }

    /// Leaf id containing feature vector `x`.
    pub fn leaf_for(&self, x: &[f64]) -> usize {
        let mut id = 0;
        while let Some(s) = &self.nodes[id].split {
            id = if s.rule.goes_left(x[s.feature]) { s.left } else { s.right };
        }
        id
    }

    pub fn to_json(&self, d: &Dataset) -> Value {
        let nodes: Vec<Value> = self
            .nodes
            .iter()
            .map(|n| {
                let risks: serde_json::Map<String, Value> = self
                    .config
                    .s
                    .iter()
                    .zip(&n.risks)
                    .map(|(&j, r)| (self.feature_names[j].clone(), json!(r)))
                    .collect();
                let split = n.split.as_ref().map(|s| {
                    let mut v = json!({
                        "feature": self.feature_names[s.feature],
                        "feature_index": s.feature,
                        "objective": s.objective,
                        "reduction": s.reduction,
                        "relative_reduction": s.relative_reduction,
                    });
                    match &s.rule {
                        SplitRule::Threshold { threshold } => v["threshold"] = json!(threshold),
                        SplitRule::Partition { left, right } => {
                            let lab = |c: &Vec<usize>| c.iter().map(|&k| d.format_value(s.feature, k as f64)).collect::<Vec<_>>();
                            v["partition"] = json!({"left": lab(left), "right": lab(right)});
                        }
                    }
                    v
                });
                let children: Vec<usize> = n.split.as_ref().map(|s| vec![s.left, s.right]).unwrap_or_default();
                json!({
                    "id": n.id,
                    "depth": n.depth,
                    "parent": n.parent,
                    "subspace": n.subspace.describe(d),
                    "n_rows": n.rows.len(),
                    "rows": n.rows,
                    "risk": risks,
                    "split": split,
                    "children": children,
                })
            })
            .collect();
        json!({
            "schema_version": 1,
            "method": self.config.method,
            "S": self.config.s.iter().map(|&j| self.feature_names[j].clone()).collect::<Vec<_>>(),
            "Z": self.config.z.iter().map(|&j| self.feature_names[j].clone()).collect::<Vec<_>>(),
            "config": self.config,
            "n_leaves": self.n_leaves(),
            "nodes": nodes,
            "audit": self.audit,
        })
    }
}

/// A candidate split with its evaluated child risks.
#[derive(Debug, Clone)]
pub struct Candidate {
    pub feature: usize,
    pub rule: SplitRule,
    pub objective: f64,
    pub left_rows: Vec<usize>,
    pub right_rows: Vec<usize>,
}

/// Threshold or partition candidates for feature `z` within `rows`.
pub fn split_candidates(d: &Dataset, rows: &[usize], z: usize, max_candidates: usize, preds: &[f64]) -> Vec<SplitRule> {
    if d.column(z).is_categorical() {
        let mut codes: Vec<usize> = rows.iter().map(|&i| d.value(i, z) as usize).collect();
        codes.sort_unstable();
        codes.dedup();
        let k = codes.len();
        if k < 2 {
            return Vec::new();
        }
        if k <= 8 {
            let others = &codes[1..];
            let full = (1usize << (k - 1)) - 1;
            (0..full)
                .map(|mask| {
                    let mut left = vec![codes[0]];
                    let mut right = Vec::new();
                    for (b, &c) in others.iter().enumerate() {
                        if mask & (1 << b) != 0 {
                            left.push(c);
                        } else {
                            right.push(c);
                        }
                    }
                    SplitRule::Partition { left, right }
                })
                .collect()
        } else {
            // order categories by mean prediction, then scan like a threshold
            let mut means: Vec<(f64, usize)> = codes
                .iter()
                .map(|&c| {
                    let vals: Vec<f64> = rows.iter().filter(|&&i| d.value(i, z) as usize == c).map(|&i| preds[i]).collect();
                    (stats::mean(&vals), c)
                })
                .collect();
            means.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let ordered: Vec<usize> = means.iter().map(|m| m.1).collect();
            (1..k)
                .map(|r| {
                    let mut left = ordered[..r].to_vec();
                    let mut right = ordered[r..].to_vec();
                    left.sort_unstable();
                    right.sort_unstable();
                    SplitRule::Partition { left, right }
                })
                .collect()
        }
    } else {
        let sorted = stats::sorted_copy(&d.feature_values(z, rows));
        let q: Vec<f64> = (0..max_candidates)
            .map(|k| stats::quantile_sorted(&sorted, k as f64 / (max_candidates - 1) as f64))
            .collect();
        let q = stats::dedup_sorted(q);
        q.windows(2).map(|w| SplitRule::Threshold { threshold: 0.5 * (w[0] + w[1]) }).collect()
    }
}

fn partition_rows(d: &Dataset, rows: &[usize], z: usize, rule: &SplitRule) -> (Vec<usize>, Vec<usize>) {
    rows.iter().partition(|&&i| rule.goes_left(d.value(i, z)))
}

fn is_better(obj: f64, best: f64) -> bool {
    obj < best - 1e-12 * best.abs()
}

/// Exhaustive search over `Z` and the candidate rules. Ties resolve to the
/// lowest feature, then the earliest candidate. Every evaluated candidate is
/// returned for the audit log.
#[allow(clippy::too_many_arguments)]
pub fn search_split(
    engine: &EffectEngine,
    cfg: &GadgetConfig,
    d: &Dataset,
    pr: &dyn Predictor,
    node_id: usize,
    state: &NodeState,
    preds: &[f64],
) -> Result<(Option<Candidate>, Vec<CandidateRecord>)> {
    let min = cfg.stop.min_node_size;
    let mut z_sorted = cfg.z.clone();
    z_sorted.sort_unstable();
    let mut jobs = Vec::new();
    for &z in &z_sorted {
        for rule in split_candidates(d, &state.rows, z, cfg.max_candidates, preds) {
            let (l, r) = partition_rows(d, &state.rows, z, &rule);
            if l.len() >= min && r.len() >= min {
                jobs.push((z, rule, l, r));
            }
        }
    }
    let evaluated: Vec<Result<(Vec<f64>, Vec<f64>)>> = jobs
        .par_iter()
        .map(|(z, rule, l, r)| {
            let (pl, pr_) = rule.predicates();
            let left = engine.child_state(d, pr, state, *z, &pl, Side::Left, l.clone())?;
            let right = engine.child_state(d, pr, state, *z, &pr_, Side::Right, r.clone())?;
            Ok((left.risks, right.risks))
        })
        .collect();
    let mut audit = Vec::with_capacity(jobs.len());
    let mut best: Option<Candidate> = None;
    for ((z, rule, l, r), res) in jobs.into_iter().zip(evaluated) {
        let (lr, rr) = res?;
        let objective: f64 = lr.iter().sum::<f64>() + rr.iter().sum::<f64>();
        audit.push(CandidateRecord {
            node: node_id,
            feature: z,
            rule: rule.clone(),
            objective,
            n_left: l.len(),
            n_right: r.len(),
            left_risks: lr,
            right_risks: rr,
        });
        if best.as_ref().is_none_or(|b| is_better(objective, b.objective)) {
            best = Some(Candidate { feature: z, rule, objective, left_rows: l, right_rows: r });
        }
    }
    Ok((best, audit))
}

/// Fit a GADGET tree: breadth-first greedy splitting until a stop rule holds.
pub fn fit_tree(cfg: &GadgetConfig, d: &Dataset, pr: &dyn Predictor) -> Result<GadgetTree> {
    cfg.validate(d)?;
    let engine = EffectEngine::build(cfg, d, pr)?;
    let root = engine.root_state(d, pr)?;
    let preds = pr.predict(d.x().view())?;
    let prediction_variance = stats::variance(&preds);

    let root_total = root.total_risk();
    let scale: f64 = (0..cfg.s.len()).map(|pos| engine.term_count(&root, pos) as f64).sum::<f64>() * prediction_variance;
    let mut nodes = vec![GadgetNode {
        id: 0,
        depth: 0,
        parent: None,
        subspace: root.subspace.clone(),
        rows: root.rows.clone(),
        risks: root.risks.clone(),
        split: None,
    }];
    let mut states: Vec<Option<NodeState>> = vec![Some(root)];
    let mut audit = Vec::new();
    let mut stop_reasons = Vec::new();
    let mut current_total = root_total;

    let mut queue: VecDeque<(usize, f64)> = VecDeque::new();
    if root_total > 1e-12 * scale.max(f64::MIN_POSITIVE) {
        queue.push_back((0, 1.0));
    } else {
        info!("no interaction-related heterogeneity at the root; tree is a single leaf");
        stop_reasons.push((0, StopReason::NoHeterogeneity));
    }

    while let Some((id, prev_rr)) = queue.pop_front() {
        let depth = nodes[id].depth;
        if depth >= cfg.stop.max_depth {
            stop_reasons.push((id, StopReason::MaxDepth));
            continue;
        }
        if nodes[id].rows.len() < 2 * cfg.stop.min_node_size {
            stop_reasons.push((id, StopReason::MinNodeSize));
            continue;
        }
        if root_total > 0.0 && 1.0 - current_total / root_total >= cfg.stop.r2_total_target {
            stop_reasons.push((id, StopReason::R2Target));
            continue;
        }
        let state = states[id].as_ref().expect("queued nodes keep their state");
        let (best, records) = search_split(&engine, cfg, d, pr, id, state, &preds)?;
        audit.extend(records);
        let Some(best) = best else {
            stop_reasons.push((id, StopReason::NoCandidate));
            continue;
        };
        let parent_total = state.total_risk();
        let reduction = parent_total - best.objective;
        let rr = if root_total > 0.0 { reduction / root_total } else { 0.0 };
        if reduction <= 0.0 {
            stop_reasons.push((id, StopReason::NoImprovement));
            continue;
        }
        if rr < cfg.stop.gamma * prev_rr {
            debug!("node {id}: relative reduction {rr:.4} below gamma * {prev_rr:.4}");
            stop_reasons.push((id, StopReason::Gamma));
            continue;
        }
        let (pl, pr_) = best.rule.predicates();
        let left = engine.child_state(d, pr, state, best.feature, &pl, Side::Left, best.left_rows)?;
        let right = engine.child_state(d, pr, state, best.feature, &pr_, Side::Right, best.right_rows)?;
        current_total -= parent_total - (left.total_risk() + right.total_risk());
        let (lid, rid) = (nodes.len(), nodes.len() + 1);
        for (cid, st) in [(lid, &left), (rid, &right)] {
            nodes.push(GadgetNode {
                id: cid,
                depth: depth + 1,
                parent: Some(id),
                subspace: st.subspace.clone(),
                rows: st.rows.clone(),
                risks: st.risks.clone(),
                split: None,
            });
        }
        nodes[id].split = Some(SplitRecord {
            feature: best.feature,
            rule: best.rule,
            objective: best.objective,
            reduction,
            relative_reduction: rr,
            left: lid,
            right: rid,
        });
        states[id] = None;
        states.push(Some(left));
        states.push(Some(right));
        queue.push_back((lid, rr));
        queue.push_back((rid, rr));
    }

    Ok(GadgetTree {
        config: cfg.clone(),
        feature_names: d.columns().iter().map(|c| c.name.clone()).collect(),
        nodes,
        audit,
        stop_reasons,
        engine,
        states,
        prediction_variance,
    })
}

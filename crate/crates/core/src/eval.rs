//! Tool scoring: the cheapest feature set that still meets the censor's
//! accuracy demand on a tool's traffic, and which cheap features the tool
//! obfuscates.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::armsrace::{split_trace, Scenario};
use crate::censor::{ConfusionReport, FeatureMatrix, LogLikTable, TrainedCatalog, MAX_EXHAUSTIVE};
use crate::economics::{CostBreakdown, SurrogateTable};
use crate::error::{Error, Result};
use crate::evader::Tool;
use crate::traffic::{FeatureId, FeatureSet};

pub const DEFAULT_EPSILON: f64 = 0.05;

/// Largest error rates the censor accepts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AccuracyDemand {
    pub max_fn_rate: f64,
    pub max_fp_rate: f64,
}

impl AccuracyDemand {
    pub fn new(max_fn_rate: f64, max_fp_rate: f64) -> Result<Self> {
        let d = AccuracyDemand {
            max_fn_rate,
            max_fp_rate,
        };
        d.validate("demand")?;
        Ok(d)
    }

    pub fn validate(&self, prefix: &str) -> Result<()> {
        for (name, v) in [("max_fn_rate", self.max_fn_rate), ("max_fp_rate", self.max_fp_rate)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config(format!("{prefix}.{name}"), "must lie in [0, 1]"));
            }
        }
        Ok(())
    }

    pub fn met_by(&self, c: &ConfusionReport) -> bool {
        c.fn_rate <= self.max_fn_rate && c.fp_rate <= self.max_fp_rate
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObfuscationFlag {
    pub feature: FeatureId,
    /// Operating + storage + implementation of the feature alone.
    pub surrogate_cost: f64,
    /// Balanced error of the censor's single-feature classifier.
    pub balanced_error: f64,
    pub obfuscated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolScore {
    pub tool: String,
    /// Fingerprint of the catalog the score was computed against.
    pub catalog: String,
    /// Cheapest adequate set; `None` when no subset of the catalog meets
    /// the demand.
    pub feature_set: Option<FeatureSet>,
    /// Non-classification cost of `feature_set`.
    pub score: Option<f64>,
    /// Full cost of `feature_set` including held-out classification.
    pub cost: Option<CostBreakdown>,
    pub confusion: Option<ConfusionReport>,
    pub subsets_tried: usize,
    /// Flagged features, cheapest first.
    pub obfuscated: Vec<FeatureId>,
}

impl ToolScore {
    pub fn is_infeasible(&self) -> bool {
        self.score.is_none()
    }

    /// Strength for the evader: infeasible beats every finite score.
    pub fn strength_cmp(&self, other: &ToolScore) -> Ordering {
        match (self.score, other.score) {
            (None, None) => Ordering::Equal,
            (None, Some(_)) => Ordering::Greater,
            (Some(_), None) => Ordering::Less,
            (Some(a), Some(b)) => a.total_cmp(&b),
        }
    }
}

/// A tool's traffic, split and scored once for every catalog feature.
struct Prepared {
    eval: LogLikTable,
    costs: SurrogateTable,
}

fn prepare(tool: &Tool, s: &Scenario) -> Result<Prepared> {
    if s.catalog.len() > MAX_EXHAUSTIVE {
        return Err(Error::config(
            "catalog.features",
            format!(
                "evaluation supports at most {MAX_EXHAUSTIVE} features, catalog has {}",
                s.catalog.len()
            ),
        ));
    }
    tool.validate(&format!("tools.{}", tool.id))?;
    // First-cycle traffic, so every tool is judged on the same draws.
    let trace = s.cycle_traffic(tool, 1)?;
    let (train, eval) = split_trace(&trace, s.training_fraction);
    let trained = TrainedCatalog::fit(
        &FeatureMatrix::compute(&s.catalog, &train)?,
        s.params.bins,
        s.params.alpha,
    )?;
    let eval = trained.score(&FeatureMatrix::compute(&s.catalog, &eval)?);
    let costs = SurrogateTable::new(&s.catalog, &FeatureSet::new(), &s.econ)?;
    Ok(Prepared { eval, costs })
}

/// Every subset of `n` features as ascending index lists, cheapest first.
/// Equal costs go to the smaller set, then the lexicographically first.
fn subsets_by_cost(n: usize, costs: &SurrogateTable) -> Vec<(f64, Vec<usize>)> {
    let mut all: Vec<(f64, Vec<usize>)> = (0u32..(1u32 << n))
        .map(|mask| {
            let idx: Vec<usize> = (0..n).filter(|j| mask & (1 << j) != 0).collect();
            (costs.breakdown(&idx, 0.0).surrogate(), idx)
        })
        .collect();
    all.sort_by(|a, b| {
        a.0.total_cmp(&b.0)
            .then(a.1.len().cmp(&b.1.len()))
            .then_with(|| a.1.cmp(&b.1))
    });
    all
}

fn flags(p: &Prepared, s: &Scenario, epsilon: f64) -> Vec<ObfuscationFlag> {
    let mut out: Vec<ObfuscationFlag> = (0..p.eval.ids.len())
        .map(|j| {
            let balanced_error = p.eval.classify(&[j], &s.cost_matrix).confusion.balanced_error();
            ObfuscationFlag {
                feature: p.eval.ids[j].clone(),
                surrogate_cost: p.costs.breakdown(&[j], 0.0).surrogate(),
                balanced_error,
                obfuscated: balanced_error >= 0.5 - epsilon,
            }
        })
        .collect();
    out.sort_by(|a, b| {
        a.surrogate_cost
            .total_cmp(&b.surrogate_cost)
            .then_with(|| a.feature.cmp(&b.feature))
    });
    out
}

/// Per-feature obfuscation flags for `tool`, sorted by surrogate cost.
pub fn obfuscation_report(tool: &Tool, s: &Scenario, epsilon: f64) -> Result<Vec<ObfuscationFlag>> {
    check_epsilon(epsilon)?;
    Ok(flags(&prepare(tool, s)?, s, epsilon))
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(0.0..=0.5).contains(&epsilon) {
        return Err(Error::config("epsilon", "must lie in [0, 0.5]"));
    }
    Ok(())
}

/// Scores `tool` by the cheapest catalog subset meeting `demand` on
/// held-out traffic.
pub fn evaluate_tool(tool: &Tool, s: &Scenario, demand: &AccuracyDemand, epsilon: f64) -> Result<ToolScore> {
    demand.validate("demand")?;
    check_epsilon(epsilon)?;
    let p = prepare(tool, s)?;
    let mut tried = 0;
    let mut found = None;
    for (surrogate, idx) in subsets_by_cost(p.eval.ids.len(), &p.costs) {
        tried += 1;
        let c = p.eval.classify(&idx, &s.cost_matrix);
        if demand.met_by(&c.confusion) {
            found = Some((surrogate, idx, c));
            break;
        }
    }
    let obfuscated = flags(&p, s, epsilon)
        .into_iter()
        .filter(|f| f.obfuscated)
        .map(|f| f.feature)
        .collect();
    let mut score = ToolScore {
        tool: tool.id.clone(),
        catalog: s.catalog.fingerprint(),
        feature_set: None,
        score: None,
        cost: None,
        confusion: None,
        subsets_tried: tried,
        obfuscated,
    };
    if let Some((surrogate, idx, c)) = found {
        score.feature_set = Some(p.eval.set_of(&idx));
        score.score = Some(surrogate);
        score.cost = Some(p.costs.breakdown(&idx, c.total_cost));
        score.confusion = Some(c.confusion);
    }
    Ok(score)
}

/// Orders scores strongest tool first, ties by tool id. Scores computed
/// against different catalogs are not comparable.
pub fn rank(mut scores: Vec<ToolScore>) -> Result<Vec<ToolScore>> {
    if let Some(first) = scores.first() {
        if let Some(other) = scores.iter().find(|s| s.catalog != first.catalog) {
            return Err(Error::CatalogMismatch(first.catalog.clone(), other.catalog.clone()));
        }
    }
    scores.sort_by(|a, b| b.strength_cmp(a).then_with(|| a.tool.cmp(&b.tool)));
    Ok(scores)
}

pub fn compare_tools(tools: &[Tool], s: &Scenario, demand: &AccuracyDemand, epsilon: f64) -> Result<Vec<ToolScore>> {
    if tools.len() < 2 {
        return Err(Error::config("tools", "comparison needs at least two tools"));
    }
    rank(
        tools
            .iter()
            .map(|t| evaluate_tool(t, s, demand, epsilon))
            .collect::<Result<Vec<_>>>()?,
    )
}

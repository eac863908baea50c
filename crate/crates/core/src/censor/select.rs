use serde::{Deserialize, Serialize};

use super::model::{FeatureMatrix, TrainedCatalog};
use super::CostMatrix;
use crate::economics::{CostBreakdown, EconomyConfig, SurrogateTable};
use crate::error::{Error, Result};
use crate::traffic::{FeatureCatalog, FeatureSet, Flow};

/// Largest catalog the exhaustive search accepts.
pub const MAX_EXHAUSTIVE: usize = 20;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// Every subset of the catalog.
    #[default]
    Exhaustive,
    /// Forward selection; stops when no single addition lowers the cost.
    Greedy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingParams {
    pub bins: usize,
    pub alpha: f64,
}

impl Default for TrainingParams {
    fn default() -> Self {
        TrainingParams { bins: 16, alpha: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub features: FeatureSet,
    /// Estimated cycle cost: classification on the training traffic plus
    /// the surrogate terms.
    pub estimated: CostBreakdown,
    /// Number of subsets costed.
    pub evaluated: usize,
}

fn better(cost: f64, fs: &FeatureSet, best: &Option<(f64, FeatureSet)>) -> bool {
    match best {
        None => true,
        Some((bc, bfs)) => cost < *bc || (cost == *bc && fs.tie_cmp(bfs).is_lt()),
    }
}

/// Picks the feature set minimizing estimated cycle cost on `training`.
/// Ties go to the smaller set, then to the lexicographically first.
pub fn select_feature_set(
    catalog: &FeatureCatalog,
    prior: &FeatureSet,
    training: &[Flow],
    cm: &CostMatrix,
    econ: &EconomyConfig,
    strategy: Strategy,
    params: TrainingParams,
) -> Result<Selection> {
    if catalog.is_empty() {
        return Err(Error::config("catalog.features", "catalog is empty"));
    }
    if strategy == Strategy::Exhaustive && catalog.len() > MAX_EXHAUSTIVE {
        return Err(Error::config(
            "strategy",
            format!(
                "exhaustive search supports at most {MAX_EXHAUSTIVE} features, catalog has {}",
                catalog.len()
            ),
        ));
    }
    let matrix = FeatureMatrix::compute(catalog, training)?;
    let trained = TrainedCatalog::fit(&matrix, params.bins, params.alpha)?;
    let ll = trained.score(&matrix);
    let costs = SurrogateTable::new(catalog, prior, econ)?;
    let n = ll.ids.len();

    let eval = |idx: &[usize]| -> CostBreakdown { costs.breakdown(idx, ll.classify(idx, cm).total_cost) };
    let mut evaluated = 0usize;
    let mut best: Option<(f64, FeatureSet)> = None;
    let mut best_breakdown = CostBreakdown::default();

    match strategy {
        Strategy::Exhaustive => {
            for mask in 0u32..(1u32 << n) {
                let idx: Vec<usize> = (0..n).filter(|j| mask & (1 << j) != 0).collect();
                let b = eval(&idx);
                evaluated += 1;
                let fs = ll.set_of(&idx);
                if better(b.total, &fs, &best) {
                    best = Some((b.total, fs));
                    best_breakdown = b;
                }
            }
        }
        Strategy::Greedy => {
            let mut current: Vec<usize> = Vec::new();
            let mut current_cost = eval(&current);
            evaluated += 1;
            loop {
                let mut step: Option<(f64, FeatureSet)> = None;
                let mut step_idx = Vec::new();
                let mut step_cost = CostBreakdown::default();
                for j in (0..n).filter(|j| !current.contains(j)) {
                    let mut idx = current.clone();
                    idx.push(j);
                    idx.sort_unstable();
                    let b = eval(&idx);
                    evaluated += 1;
                    let fs = ll.set_of(&idx);
                    if better(b.total, &fs, &step) {
                        step = Some((b.total, fs));
                        step_idx = idx;
                        step_cost = b;
                    }
                }
                match step {
                    Some((c, _)) if c < current_cost.total => {
                        current = step_idx;
                        current_cost = step_cost;
                    }
                    _ => break,
                }
            }
            best = Some((current_cost.total, ll.set_of(&current)));
            best_breakdown = current_cost;
        }
    }
    let (_, features) = best.expect("at least the empty set is costed");
    Ok(Selection {
        features,
        estimated: best_breakdown,
        evaluated,
    })
}

//! The development-cycle loop.
//!
//! Every cycle draws fresh traffic, lets the scheduled tool transform the
//! disallowed flows, and has the censor pick, train and pay for a feature
//! set. Features implemented in one cycle stay implemented.

use serde::{Deserialize, Serialize};

use crate::censor::{
    classify_trace, select_feature_set, train_posterior, ConfusionReport, CostMatrix, PosteriorModel, Strategy,
    TrainingParams,
};
use crate::economics::{cycle_cost, CostBreakdown, EconomyConfig};
use crate::error::{Error, Result};
use crate::evader::{transform_trace, Tool};
use crate::seed::cycle_seed;
use crate::traffic::{generate_traffic, FeatureCatalog, FeatureSet, Flow, TrafficSpec, TrafficTrace, TrafficType};

/// Everything a run needs, already validated.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub traffic: TrafficSpec,
    pub catalog: FeatureCatalog,
    pub cost_matrix: CostMatrix,
    pub econ: EconomyConfig,
    /// One tool per cycle; the last one repeats.
    pub tool_schedule: Vec<Tool>,
    pub n_cycles: usize,
    pub training_fraction: f64,
    pub strategy: Strategy,
    pub params: TrainingParams,
    /// Keep the previous classifier in any cycle where the tool changes.
    pub frozen_classifier: bool,
    pub seed: u64,
}

impl Scenario {
    /// Tool active in 1-based `cycle`.
    pub fn tool_for(&self, cycle: usize) -> &Tool {
        let i = cycle.saturating_sub(1).min(self.tool_schedule.len() - 1);
        &self.tool_schedule[i]
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_cycles == 0 {
            return Err(Error::config("cycles", "must be at least 1"));
        }
        if self.tool_schedule.is_empty() {
            return Err(Error::config("schedule", "needs at least one tool"));
        }
        if !(self.training_fraction > 0.0 && self.training_fraction < 1.0) {
            return Err(Error::config("training_fraction", "must lie in (0, 1)"));
        }
        if self.params.bins < 2 {
            return Err(Error::config("bins", "must be at least 2"));
        }
        if !(self.params.alpha > 0.0 && self.params.alpha.is_finite()) {
            return Err(Error::config("alpha", "must be positive"));
        }
        self.traffic.validate("traffic")?;
        self.catalog.validate("catalog")?;
        self.econ.validate("economy", &self.catalog)?;
        self.cost_matrix.validate("cost_matrix")?;
        for t in &self.tool_schedule {
            t.validate(&format!("tools.{}", t.id))?;
        }
        Ok(())
    }

    /// Traffic of one cycle after the given tool has been applied.
    pub fn cycle_traffic(&self, tool: &Tool, cycle: usize) -> Result<TrafficTrace> {
        let seed = cycle_seed(self.seed, cycle);
        let trace = generate_traffic(&self.traffic.clone().with_seed(seed))?;
        transform_trace(tool, &trace, &self.traffic, seed)
    }
}

/// Stratified split: the first `round(n_c * fraction)` flows of each class
/// train, the rest evaluate. Flow order is kept on both sides.
pub fn split_trace(trace: &[Flow], fraction: f64) -> (TrafficTrace, TrafficTrace) {
    let mut quota = TrafficType::ALL.map(|t| {
        let n = trace.iter().filter(|f| f.true_type() == t).count();
        (n as f64 * fraction).round() as usize
    });
    let (mut train, mut eval) = (Vec::new(), Vec::new());
    for f in trace {
        let q = &mut quota[f.true_type().index()];
        if *q > 0 {
            *q -= 1;
            train.push(f.clone());
        } else {
            eval.push(f.clone());
        }
    }
    (train, eval)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleReport {
    /// 1-based.
    pub cycle: usize,
    pub tool: String,
    pub feature_set: FeatureSet,
    /// The classifier was carried over from the previous cycle.
    pub frozen: bool,
    pub cost: CostBreakdown,
    pub confusion: ConfusionReport,
    /// The censor's implemented features after this cycle.
    pub implemented: FeatureSet,
}

/// What the censor carries from one cycle to the next.
#[derive(Debug, Clone, Default)]
pub struct CensorState {
    pub implemented: FeatureSet,
    last: Option<(String, PosteriorModel)>,
}

pub fn run_cycle(state: &mut CensorState, s: &Scenario, cycle: usize) -> Result<CycleReport> {
    let tool = s.tool_for(cycle);
    let trace = s.cycle_traffic(tool, cycle)?;
    let (train, eval) = split_trace(&trace, s.training_fraction);

    let carried = match &state.last {
        Some((prev_tool, model)) if s.frozen_classifier && prev_tool != &tool.id => Some(model.clone()),
        _ => None,
    };
    let frozen = carried.is_some();
    let model = match carried {
        Some(m) => m,
        None => {
            let sel = select_feature_set(
                &s.catalog,
                &state.implemented,
                &train,
                &s.cost_matrix,
                &s.econ,
                s.strategy,
                s.params,
            )?;
            train_posterior(&train, &sel.features, &s.catalog, s.params.bins, s.params.alpha)?
        }
    };
    let fs = model.feature_set();
    let classification = classify_trace(&model, &s.cost_matrix, &eval)?;
    let cost = cycle_cost(&fs, &state.implemented, classification.total_cost, &s.econ, &s.catalog)?;

    state.implemented = state.implemented.union(&fs);
    state.last = Some((tool.id.clone(), model));
    Ok(CycleReport {
        cycle,
        tool: tool.id.clone(),
        feature_set: fs,
        frozen,
        cost,
        confusion: classification.confusion,
        implemented: state.implemented.clone(),
    })
}

pub fn run_scenario(s: &Scenario) -> Result<Vec<CycleReport>> {
    s.validate()?;
    let mut state = CensorState::default();
    (1..=s.n_cycles).map(|c| run_cycle(&mut state, s, c)).collect()
}

/// Sum of the per-cycle totals.
pub fn grand_total(reports: &[CycleReport]) -> f64 {
    reports.iter().map(|r| r.cost.total).sum()
}

//! The censor: expected-cost decisions over a learned posterior, incurred
//! cost against ground truth, and per-cycle feature-set selection.

mod model;
mod select;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::traffic::{Flow, TrafficType};

pub use model::{
    train_posterior, FeatureMatrix, FeatureTable, LikelihoodTable, LogLikTable, PosteriorModel, TrainedCatalog,
};
pub use select::{select_feature_set, Selection, Strategy, TrainingParams, MAX_EXHAUSTIVE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Action {
    Allow,
    Disallow,
}

impl Action {
    /// Evaluation order; an exact tie resolves to the first entry.
    pub const ALL: [Action; 2] = [Action::Allow, Action::Disallow];
}

/// Consequence cost `c(type, action)`.
///
/// Missing a disallowed flow and blocking an allowed one must both cost
/// something; the correct actions may be free or even rewarded (negative).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostMatrix {
    pub allowed_allow: f64,
    pub allowed_disallow: f64,
    pub disallowed_allow: f64,
    pub disallowed_disallow: f64,
}

impl CostMatrix {
    pub fn new(
        allowed_allow: f64,
        allowed_disallow: f64,
        disallowed_allow: f64,
        disallowed_disallow: f64,
    ) -> Result<Self> {
        let cm = CostMatrix {
            allowed_allow,
            allowed_disallow,
            disallowed_allow,
            disallowed_disallow,
        };
        cm.validate("cost_matrix")?;
        Ok(cm)
    }

    /// False-negative cost `fn_cost` and false-positive cost `fp_cost`,
    /// zero for correct actions.
    pub fn symmetric_errors(fn_cost: f64, fp_cost: f64) -> Result<Self> {
        CostMatrix::new(0.0, fp_cost, fn_cost, 0.0)
    }

    pub fn validate(&self, prefix: &str) -> Result<()> {
        let fields = [
            ("allowed_allow", self.allowed_allow),
            ("allowed_disallow", self.allowed_disallow),
            ("disallowed_allow", self.disallowed_allow),
            ("disallowed_disallow", self.disallowed_disallow),
        ];
        for (name, v) in fields {
            if !v.is_finite() {
                return Err(Error::config(format!("{prefix}.{name}"), "must be finite"));
            }
        }
        if self.disallowed_allow <= 0.0 {
            return Err(Error::config(
                format!("{prefix}.disallowed_allow"),
                "false negatives must have positive cost",
            ));
        }
        if self.allowed_disallow <= 0.0 {
            return Err(Error::config(
                format!("{prefix}.allowed_disallow"),
                "false positives must have positive cost",
            ));
        }
        Ok(())
    }

    pub fn c(&self, t: TrafficType, a: Action) -> f64 {
        match (t, a) {
            (TrafficType::Allowed, Action::Allow) => self.allowed_allow,
            (TrafficType::Allowed, Action::Disallow) => self.allowed_disallow,
            (TrafficType::Disallowed, Action::Allow) => self.disallowed_allow,
            (TrafficType::Disallowed, Action::Disallow) => self.disallowed_disallow,
        }
    }

    pub fn scaled(&self, k: f64) -> CostMatrix {
        CostMatrix {
            allowed_allow: self.allowed_allow * k,
            allowed_disallow: self.allowed_disallow * k,
            disallowed_allow: self.disallowed_allow * k,
            disallowed_disallow: self.disallowed_disallow * k,
        }
    }
}

/// A distribution over traffic types, indexed by [`TrafficType::index`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Posterior(pub [f64; 2]);

impl Posterior {
    pub fn new(allowed: f64, disallowed: f64) -> Self {
        Posterior([allowed, disallowed])
    }

    pub fn p(&self, t: TrafficType) -> f64 {
        self.0[t.index()]
    }
}

/// Expected cost of taking `a` under `post`.
pub fn expected_cost(post: &Posterior, a: Action, cm: &CostMatrix) -> f64 {
    TrafficType::ALL.iter().map(|&t| post.p(t) * cm.c(t, a)).sum()
}

/// The action minimizing expected cost; an exact tie allows.
pub fn decide(post: &Posterior, cm: &CostMatrix) -> Action {
    let allow = expected_cost(post, Action::Allow, cm);
    let disallow = expected_cost(post, Action::Disallow, cm);
    if disallow < allow {
        Action::Disallow
    } else {
        Action::Allow
    }
}

/// Cost actually incurred for a flow of type `true_type`.
pub fn instance_cost(true_type: TrafficType, action: Action, cm: &CostMatrix) -> f64 {
    cm.c(true_type, action)
}

/// Error counts with disallowed as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ConfusionReport {
    pub true_positives: usize,
    pub false_positives: usize,
    pub true_negatives: usize,
    pub false_negatives: usize,
    /// Share of disallowed flows that were allowed.
    pub fn_rate: f64,
    /// Share of allowed flows that were disallowed.
    pub fp_rate: f64,
}

impl ConfusionReport {
    pub fn from_decisions(labels: impl Iterator<Item = TrafficType>, actions: impl Iterator<Item = Action>) -> Self {
        let mut r = ConfusionReport::default();
        for (t, a) in labels.zip(actions) {
            match (t, a) {
                (TrafficType::Disallowed, Action::Disallow) => r.true_positives += 1,
                (TrafficType::Disallowed, Action::Allow) => r.false_negatives += 1,
                (TrafficType::Allowed, Action::Disallow) => r.false_positives += 1,
                (TrafficType::Allowed, Action::Allow) => r.true_negatives += 1,
            }
        }
        let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        r.fn_rate = ratio(r.false_negatives, r.false_negatives + r.true_positives);
        r.fp_rate = ratio(r.false_positives, r.false_positives + r.true_negatives);
        r
    }

    pub fn total(&self) -> usize {
        self.true_positives + self.false_positives + self.true_negatives + self.false_negatives
    }

    /// Mean of the two error rates.
    pub fn balanced_error(&self) -> f64 {
        (self.fn_rate + self.fp_rate) / 2.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub actions: Vec<Action>,
    pub confusion: ConfusionReport,
    /// Sum of incurred per-flow costs.
    pub total_cost: f64,
}

impl Classification {
    pub(crate) fn from_actions(labels: &[TrafficType], actions: Vec<Action>, cm: &CostMatrix) -> Self {
        let total_cost = labels
            .iter()
            .zip(&actions)
            .map(|(&t, &a)| instance_cost(t, a, cm))
            .sum();
        let confusion = ConfusionReport::from_decisions(labels.iter().copied(), actions.iter().copied());
        Classification {
            actions,
            confusion,
            total_cost,
        }
    }
}

/// Decides every flow of `trace` with `model` and charges the incurred cost.
pub fn classify_trace(model: &PosteriorModel, cm: &CostMatrix, trace: &[Flow]) -> Result<Classification> {
    let actions = trace
        .iter()
        .map(|f| Ok(decide(&model.posterior(f)?, cm)))
        .collect::<Result<Vec<_>>>()?;
    let labels: Vec<TrafficType> = trace.iter().map(Flow::true_type).collect();
    Ok(Classification::from_actions(&labels, actions, cm))
}

//! Discretized naive-Bayes posterior with Laplace smoothing.
//!
//! Each feature gets a class-conditional likelihood table: equal-width bins
//! over the training range for scalar features, one bucket per observed
//! category (plus one for unseen categories) for categorical ones. Features
//! are combined as conditionally independent, in feature-id order.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{decide, Action, Classification, CostMatrix, Posterior};
use crate::error::{Error, Result};
use crate::traffic::{
    compute_feature, Feature, FeatureCatalog, FeatureId, FeatureSet, FeatureValue, Flow, TrafficType,
};

/// Smoothed class-conditional bucket probabilities for one feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LikelihoodTable {
    Numeric {
        /// `bins + 1` strictly increasing edges.
        edges: Vec<f64>,
        allowed: Vec<f64>,
        disallowed: Vec<f64>,
    },
    Categorical {
        /// Sorted observed categories; the final bucket holds unseen ones.
        categories: Vec<String>,
        allowed: Vec<f64>,
        disallowed: Vec<f64>,
    },
}

impl LikelihoodTable {
    fn fit(values: &[FeatureValue], labels: &[TrafficType], bins: usize, alpha: f64) -> Result<Self> {
        let categorical = matches!(values.first(), Some(FeatureValue::Category(_)));
        if categorical {
            let mut categories: Vec<String> = values
                .iter()
                .filter_map(|v| match v {
                    FeatureValue::Category(c) => Some(c.clone()),
                    FeatureValue::Scalar(_) => None,
                })
                .collect();
            categories.sort();
            categories.dedup();
            let table = LikelihoodTable::Categorical {
                categories,
                allowed: Vec::new(),
                disallowed: Vec::new(),
            };
            Ok(table.with_counts(values, labels, alpha))
        } else {
            let xs: Vec<f64> = values.iter().filter_map(FeatureValue::as_scalar).collect();
            if xs.len() != values.len() || xs.iter().any(|x| !x.is_finite()) {
                return Err(Error::Training("feature mixes value kinds or is not finite".into()));
            }
            let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let table = LikelihoodTable::Numeric {
                edges: equal_width_edges(lo, hi, bins),
                allowed: Vec::new(),
                disallowed: Vec::new(),
            };
            Ok(table.with_counts(values, labels, alpha))
        }
    }

    fn with_counts(mut self, values: &[FeatureValue], labels: &[TrafficType], alpha: f64) -> Self {
        let n = self.buckets();
        let mut counts = [vec![0usize; n], vec![0usize; n]];
        for (v, t) in values.iter().zip(labels) {
            counts[t.index()][self.bucket(v)] += 1;
        }
        let smooth = |c: &[usize]| -> Vec<f64> {
            let total: usize = c.iter().sum();
            let denom = total as f64 + alpha * n as f64;
            c.iter().map(|&k| (k as f64 + alpha) / denom).collect()
        };
        let [ca, cd] = counts;
        match &mut self {
            LikelihoodTable::Numeric {
                allowed, disallowed, ..
            }
            | LikelihoodTable::Categorical {
                allowed, disallowed, ..
            } => {
                *allowed = smooth(&ca);
                *disallowed = smooth(&cd);
            }
        }
        self
    }

    pub fn buckets(&self) -> usize {
        match self {
            LikelihoodTable::Numeric { edges, .. } => edges.len() - 1,
            LikelihoodTable::Categorical { categories, .. } => categories.len() + 1,
        }
    }

    /// Bucket of `v`. Out-of-range scalars land in the nearest edge bin.
    pub fn bucket(&self, v: &FeatureValue) -> usize {
        match (self, v) {
            (LikelihoodTable::Numeric { edges, .. }, FeatureValue::Scalar(x)) => {
                let interior = &edges[1..edges.len() - 1];
                interior.partition_point(|e| e <= x)
            }
            (LikelihoodTable::Categorical { categories, .. }, FeatureValue::Category(c)) => {
                categories.binary_search(c).unwrap_or(categories.len())
            }
            // a value of the wrong kind carries no information we have seen
            (LikelihoodTable::Numeric { edges, .. }, FeatureValue::Category(_)) => edges.len() - 2,
            (LikelihoodTable::Categorical { categories, .. }, FeatureValue::Scalar(_)) => categories.len(),
        }
    }

    pub fn probs(&self, t: TrafficType) -> &[f64] {
        match (self, t) {
            (LikelihoodTable::Numeric { allowed, .. }, TrafficType::Allowed)
            | (LikelihoodTable::Categorical { allowed, .. }, TrafficType::Allowed) => allowed,
            (LikelihoodTable::Numeric { disallowed, .. }, TrafficType::Disallowed)
            | (LikelihoodTable::Categorical { disallowed, .. }, TrafficType::Disallowed) => disallowed,
        }
    }

    /// Natural-log likelihood of `v` under each type.
    pub fn log_likelihood(&self, v: &FeatureValue) -> [f64; 2] {
        let b = self.bucket(v);
        TrafficType::ALL.map(|t| self.probs(t)[b].ln())
    }

    fn validate(&self, field: &str) -> Result<()> {
        if let LikelihoodTable::Numeric { edges, .. } = self {
            if edges.len() < 2
                || edges
                    .windows(2)
                    .any(|w| w[0].partial_cmp(&w[1]) != Some(Ordering::Less))
            {
                return Err(Error::config(
                    format!("{field}.edges"),
                    "bin edges must be strictly increasing",
                ));
            }
        }
        if let LikelihoodTable::Categorical { categories, .. } = self {
            if categories.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::config(
                    format!("{field}.categories"),
                    "categories must be sorted and unique",
                ));
            }
        }
        let n = self.buckets();
        for t in TrafficType::ALL {
            let p = self.probs(t);
            if p.len() != n || p.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
                return Err(Error::config(
                    format!("{field}.{t}"),
                    format!("expected {n} probabilities in [0, 1]"),
                ));
            }
            let sum: f64 = p.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::config(format!("{field}.{t}"), format!("row sums to {sum}")));
            }
        }
        Ok(())
    }
}

fn equal_width_edges(lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    let (mut lo, mut hi) = (lo, hi);
    loop {
        let edges: Vec<f64> = (0..=bins)
            .map(|i| {
                if i == bins {
                    hi
                } else {
                    lo + (hi - lo) * i as f64 / bins as f64
                }
            })
            .collect();
        if edges.windows(2).all(|w| w[0] < w[1]) {
            return edges;
        }
        // constant (or numerically flat) training range
        let pad = (0.5f64).max(lo.abs().max(hi.abs()) * 1e-9);
        lo -= pad;
        hi += pad;
    }
}

/// A feature together with its fitted table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureTable {
    pub feature: Feature,
    pub table: LikelihoodTable,
}

/// Estimate of `P(type | F(i))` for a fixed feature set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorModel {
    /// Keyed (and combined) in feature-id order.
    pub features: BTreeMap<FeatureId, FeatureTable>,
    pub priors: Posterior,
    pub alpha: f64,
}

impl PosteriorModel {
    pub fn new(features: Vec<FeatureTable>, priors: Posterior, alpha: f64) -> Result<Self> {
        let model = PosteriorModel {
            features: features.into_iter().map(|ft| (ft.feature.id.clone(), ft)).collect(),
            priors,
            alpha,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if self.alpha.is_nan() || self.alpha <= 0.0 {
            return Err(Error::config("model.alpha", "must be positive"));
        }
        let [a, d] = self.priors.0;
        if !(a >= 0.0 && d >= 0.0 && ((a + d) - 1.0).abs() <= 1e-9) {
            return Err(Error::config(
                "model.priors",
                "priors must be non-negative and sum to 1",
            ));
        }
        for (id, ft) in &self.features {
            if &ft.feature.id != id {
                return Err(Error::config(
                    format!("model.features.{id}"),
                    "key does not match feature id",
                ));
            }
            ft.table.validate(&format!("model.features.{id}.table"))?;
        }
        Ok(())
    }

    pub fn feature_set(&self) -> FeatureSet {
        self.features.keys().cloned().collect()
    }

    pub fn posterior(&self, flow: &Flow) -> Result<Posterior> {
        let lls = self
            .features
            .values()
            .map(|ft| Ok(ft.table.log_likelihood(&compute_feature(&ft.feature, flow)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(combine(&self.priors, lls.iter()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let model: PosteriorModel = serde_json::from_str(&fs::read_to_string(path)?)?;
        model.validate()?;
        Ok(model)
    }
}

/// Bayes rule in log space. A zero prior pins its class to zero.
pub(crate) fn combine<'a>(priors: &Posterior, lls: impl Iterator<Item = &'a [f64; 2]>) -> Posterior {
    let mut log = priors.0.map(f64::ln);
    for ll in lls {
        for t in 0..2 {
            log[t] += ll[t];
        }
    }
    let m = log[0].max(log[1]);
    if m == f64::NEG_INFINITY {
        return *priors;
    }
    let w = log.map(|l| (l - m).exp());
    let z = w[0] + w[1];
    Posterior([w[0] / z, w[1] / z])
}

/// Feature values of a trace for every feature of a catalog.
#[derive(Debug, Clone)]
pub struct FeatureMatrix {
    /// Catalog features in id order.
    pub features: Vec<Feature>,
    /// `columns[j][i]` is feature `j` on flow `i`.
    pub columns: Vec<Vec<FeatureValue>>,
    pub labels: Vec<TrafficType>,
}

impl FeatureMatrix {
    pub fn compute(catalog: &FeatureCatalog, flows: &[Flow]) -> Result<Self> {
        let mut features: Vec<Feature> = catalog.features.clone();
        features.sort_by(|a, b| a.id.cmp(&b.id));
        let columns = features
            .iter()
            .map(|f| {
                flows
                    .iter()
                    .map(|flow| compute_feature(f, flow))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(FeatureMatrix {
            features,
            columns,
            labels: flows.iter().map(Flow::true_type).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Per-feature tables fitted once for a whole catalog. Any subset model is
/// the subset of these tables, identical to training that subset directly.
#[derive(Debug, Clone)]
pub struct TrainedCatalog {
    pub tables: Vec<FeatureTable>,
    pub priors: Posterior,
    pub alpha: f64,
}

impl TrainedCatalog {
    pub fn fit(train: &FeatureMatrix, bins: usize, alpha: f64) -> Result<Self> {
        if bins < 2 {
            return Err(Error::config("bins", "must be at least 2"));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::config("alpha", "must be positive"));
        }
        let n = train.len();
        let n_d = train.labels.iter().filter(|&&t| t == TrafficType::Disallowed).count();
        if n_d == 0 || n_d == n {
            return Err(Error::Training(
                "training traffic must contain both allowed and disallowed flows".into(),
            ));
        }
        let tables = train
            .features
            .iter()
            .zip(&train.columns)
            .map(|(f, col)| {
                Ok(FeatureTable {
                    feature: f.clone(),
                    table: LikelihoodTable::fit(col, &train.labels, bins, alpha)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let priors = Posterior([(n - n_d) as f64 / n as f64, n_d as f64 / n as f64]);
        Ok(TrainedCatalog { tables, priors, alpha })
    }

    pub fn model(&self, fs: &FeatureSet) -> Result<PosteriorModel> {
        let mut chosen = Vec::with_capacity(fs.len());
        for id in fs.iter() {
            let ft = self
                .tables
                .iter()
                .find(|ft| &ft.feature.id == id)
                .ok_or_else(|| Error::config(format!("catalog.features.{id}"), "feature is not in the catalog"))?;
            chosen.push(ft.clone());
        }
        PosteriorModel::new(chosen, self.priors, self.alpha)
    }

    /// Log-likelihoods of every flow of `m` under every table.
    pub fn score(&self, m: &FeatureMatrix) -> LogLikTable {
        let ids: Vec<FeatureId> = self.tables.iter().map(|ft| ft.feature.id.clone()).collect();
        let cols: Vec<&Vec<FeatureValue>> = self
            .tables
            .iter()
            .map(|ft| {
                let j = m
                    .features
                    .iter()
                    .position(|f| f.id == ft.feature.id)
                    .expect("same catalog");
                &m.columns[j]
            })
            .collect();
        let rows = (0..m.len())
            .map(|i| {
                self.tables
                    .iter()
                    .zip(&cols)
                    .map(|(ft, col)| ft.table.log_likelihood(&col[i]))
                    .collect()
            })
            .collect();
        LogLikTable {
            ids,
            rows,
            labels: m.labels.clone(),
            priors: self.priors,
        }
    }
}

/// Precomputed per-flow, per-feature log-likelihoods; classifies any
/// feature subset without recomputing features.
#[derive(Debug, Clone)]
pub struct LogLikTable {
    /// Feature ids in id order; subsets are index lists into this.
    pub ids: Vec<FeatureId>,
    rows: Vec<Vec<[f64; 2]>>,
    pub labels: Vec<TrafficType>,
    pub priors: Posterior,
}

impl LogLikTable {
    /// Indices of `fs` in id order.
    pub fn indices(&self, fs: &FeatureSet) -> Result<Vec<usize>> {
        fs.iter()
            .map(|id| {
                self.ids
                    .binary_search(id)
                    .map_err(|_| Error::config(format!("catalog.features.{id}"), "feature is not in the catalog"))
            })
            .collect()
    }

    pub fn set_of(&self, idx: &[usize]) -> FeatureSet {
        idx.iter().map(|&j| self.ids[j].clone()).collect()
    }

    pub fn posterior(&self, flow: usize, idx: &[usize]) -> Posterior {
        let row = &self.rows[flow];
        combine(&self.priors, idx.iter().map(|&j| &row[j]))
    }

    /// Classifies every flow using the features at `idx` (sorted ascending).
    pub fn classify(&self, idx: &[usize], cm: &CostMatrix) -> Classification {
        let actions: Vec<Action> = (0..self.rows.len())
            .map(|i| decide(&self.posterior(i, idx), cm))
            .collect();
        Classification::from_actions(&self.labels, actions, cm)
    }
}

/// Fits a posterior model for `fs` on labeled `training` traffic.
pub fn train_posterior(
    training: &[Flow],
    fs: &FeatureSet,
    catalog: &FeatureCatalog,
    bins: usize,
    alpha: f64,
) -> Result<PosteriorModel> {
    let sub = FeatureCatalog {
        measurements: catalog.measurements.clone(),
        features: catalog.resolve(fs)?.into_iter().cloned().collect(),
    };
    let m = FeatureMatrix::compute(&sub, training)?;
    TrainedCatalog::fit(&m, bins, alpha)?.model(fs)
}

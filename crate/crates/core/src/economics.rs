//! Censor cost accounting: per-feature surrogate costs and the four-part
//! per-cycle total (classification, operating, storage, implementation).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::traffic::{
    Feature, FeatureCatalog, FeatureId, FeatureLevel, FeatureSet, MeasurementId, MeasurementKind, ProbeLog,
};

/// Per-cycle surrogate rates. Values are dimensionless configuration, not
/// estimates of a real censor's budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EconomyConfig {
    /// Operating cost per cycle of each measurement.
    pub op_cost: BTreeMap<MeasurementId, f64>,
    /// Cost per stored byte per cycle.
    pub store_rate: f64,
    /// One-time cost per line of code.
    pub imp_rate: f64,
    /// Storage multiplier per feature level; absent levels default to 1.
    #[serde(default)]
    pub level_multipliers: BTreeMap<FeatureLevel, f64>,
}

impl EconomyConfig {
    pub fn multiplier(&self, level: FeatureLevel) -> f64 {
        self.level_multipliers.get(&level).copied().unwrap_or(1.0)
    }

    pub fn op(&self, m: &MeasurementId) -> f64 {
        self.op_cost.get(m).copied().unwrap_or(0.0)
    }

    pub fn validate(&self, prefix: &str, catalog: &FeatureCatalog) -> Result<()> {
        let nonneg = |v: f64| v >= 0.0 && v.is_finite();
        if !nonneg(self.store_rate) {
            return Err(Error::config(format!("{prefix}.store_rate"), "must be non-negative"));
        }
        if !nonneg(self.imp_rate) {
            return Err(Error::config(format!("{prefix}.imp_rate"), "must be non-negative"));
        }
        for (m, &v) in &self.op_cost {
            if !nonneg(v) {
                return Err(Error::config(format!("{prefix}.op_cost.{m}"), "must be non-negative"));
            }
        }
        for (level, &v) in &self.level_multipliers {
            if !(v >= 1.0 && v.is_finite()) {
                return Err(Error::config(
                    format!("{prefix}.level_multipliers.{level}"),
                    "must be >= 1",
                ));
            }
        }
        let packet = self.multiplier(FeatureLevel::PacketLevel);
        let dist = self.multiplier(FeatureLevel::FlowDistributional);
        let stateful = self.multiplier(FeatureLevel::Stateful);
        if dist < packet {
            return Err(Error::config(
                format!("{prefix}.level_multipliers.flow-distributional"),
                "must be >= the packet-level multiplier",
            ));
        }
        if stateful < dist {
            return Err(Error::config(
                format!("{prefix}.level_multipliers.stateful"),
                "must be >= the flow-distributional multiplier",
            ));
        }
        if let Some(m) = catalog.measurements.iter().find(|m| !self.op_cost.contains_key(&m.id)) {
            return Err(Error::config(
                format!("{prefix}.op_cost.{}", m.id),
                "missing operating cost for measurement",
            ));
        }
        Ok(())
    }
}

/// The four cost terms of one development cycle.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub classification: f64,
    pub operating: f64,
    pub storage: f64,
    pub implementation: f64,
    pub total: f64,
}

impl CostBreakdown {
    pub fn new(classification: f64, operating: f64, storage: f64, implementation: f64) -> Self {
        // Empty float sums are -0.0; adding +0.0 keeps reports free of "-0".
        let [classification, operating, storage, implementation] =
            [classification, operating, storage, implementation].map(|x| x + 0.0);
        CostBreakdown {
            classification,
            operating,
            storage,
            implementation,
            total: classification + operating + storage + implementation,
        }
    }

    /// Everything but the classification term.
    pub fn surrogate(&self) -> f64 {
        self.operating + self.storage + self.implementation
    }
}

pub fn feature_store_cost(f: &Feature, econ: &EconomyConfig) -> f64 {
    econ.store_rate * f.store_bytes as f64 * econ.multiplier(f.level)
}

/// Features already deployed are not reimplemented.
pub fn feature_imp_cost(f: &Feature, prior: &FeatureSet, econ: &EconomyConfig) -> f64 {
    if prior.contains(&f.id) {
        0.0
    } else {
        econ.imp_rate * f.impl_loc as f64
    }
}

/// Cost of a cycle in which the classifier uses `fs_new` after the censor
/// has already implemented `fs_prior`. Shared measurements are charged once.
pub fn cycle_cost(
    fs_new: &FeatureSet,
    fs_prior: &FeatureSet,
    classification_total: f64,
    econ: &EconomyConfig,
    catalog: &FeatureCatalog,
) -> Result<CostBreakdown> {
    let features = catalog.resolve(fs_new)?;
    catalog.resolve(fs_prior)?;
    let operating = catalog.measurements_of(fs_new)?.iter().map(|m| econ.op(m)).sum();
    let storage = features.iter().map(|f| feature_store_cost(f, econ)).sum();
    let implementation = features.iter().map(|f| feature_imp_cost(f, fs_prior, econ)).sum();
    Ok(CostBreakdown::new(
        classification_total,
        operating,
        storage,
        implementation,
    ))
}

/// Operating + storage + implementation of `fs` given `prior`.
pub fn surrogate_cost(
    fs: &FeatureSet,
    prior: &FeatureSet,
    econ: &EconomyConfig,
    catalog: &FeatureCatalog,
) -> Result<f64> {
    Ok(cycle_cost(fs, prior, 0.0, econ, catalog)?.surrogate())
}

/// Per-feature surrogate terms precomputed for fast subset search. Sums
/// run in the same order as [`cycle_cost`], so results match it exactly.
#[derive(Debug, Clone)]
pub struct SurrogateTable {
    /// Catalog feature ids in id order.
    pub ids: Vec<FeatureId>,
    store: Vec<f64>,
    imp: Vec<f64>,
    meas: Vec<u64>,
    /// Operating cost per measurement, measurements in id order.
    op: Vec<f64>,
}

impl SurrogateTable {
    pub fn new(catalog: &FeatureCatalog, prior: &FeatureSet, econ: &EconomyConfig) -> Result<Self> {
        let mids: Vec<&MeasurementId> = catalog
            .measurements
            .iter()
            .map(|m| &m.id)
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .collect();
        if mids.len() > 64 {
            return Err(Error::config(
                "catalog.measurements",
                "at most 64 measurements are supported",
            ));
        }
        let features = catalog.resolve(&catalog.all())?;
        let mut meas = Vec::with_capacity(features.len());
        for f in &features {
            let mut mask = 0u64;
            for m in &f.measurements {
                let j = mids.binary_search(&m).map_err(|_| {
                    Error::config(
                        format!("catalog.features.{}.measurements", f.id),
                        format!("unknown measurement `{m}`"),
                    )
                })?;
                mask |= 1 << j;
            }
            meas.push(mask);
        }
        Ok(SurrogateTable {
            ids: features.iter().map(|f| f.id.clone()).collect(),
            store: features.iter().map(|f| feature_store_cost(f, econ)).collect(),
            imp: features.iter().map(|f| feature_imp_cost(f, prior, econ)).collect(),
            meas,
            op: mids.iter().map(|m| econ.op(m)).collect(),
        })
    }

    /// Breakdown for the features at `idx` (ascending indices into `ids`).
    pub fn breakdown(&self, idx: &[usize], classification: f64) -> CostBreakdown {
        let mask = idx.iter().fold(0u64, |m, &j| m | self.meas[j]);
        let operating = (0..self.op.len())
            .filter(|b| mask & (1 << b) != 0)
            .map(|b| self.op[b])
            .sum();
        let storage = idx.iter().map(|&j| self.store[j]).sum();
        let implementation = idx.iter().map(|&j| self.imp[j]).sum();
        CostBreakdown::new(classification, operating, storage, implementation)
    }
}

/// Operating cost of the probes recorded in `log`.
pub fn probe_operating_cost(log: &ProbeLog, econ: &EconomyConfig, catalog: &FeatureCatalog) -> f64 {
    catalog
        .measurements
        .iter()
        .filter(|m| matches!(&m.kind, MeasurementKind::ActiveProbe(p) if log.used.contains(p)))
        .map(|m| econ.op(&m.id))
        .sum()
}

//! Fixtures shared by the integration tests.
#![allow(dead_code)]

use censor_econ::armsrace::Scenario;
use censor_econ::economics::EconomyConfig;
use censor_econ::evader::{preset_tool, Preset, Tool};
use censor_econ::scenario::ScenarioFile;
use censor_econ::traffic::{Extractor, Feature, FeatureCatalog, FeatureLevel, MeasurementKind};
use rand::seq::SliceRandom;
use rand::Rng;

pub fn stock(name: &str, overrides: &[&str]) -> ScenarioFile {
    let o: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
    ScenarioFile::load(name, &o).unwrap()
}

/// Every extractor the tool-reeval traffic supports.
pub fn extractor_pool() -> Vec<Extractor> {
    vec![
        Extractor::HandshakeMarker,
        Extractor::Probe("cover-anomaly".into()),
        Extractor::MeanLength,
        Extractor::LengthStddev,
        Extractor::LengthEntropy,
        Extractor::MeanInterarrival,
        Extractor::InterarrivalStddev,
        Extractor::Duration,
        Extractor::MeanPayloadEntropy,
        Extractor::TotalBytes,
    ]
}

fn measurement_for(e: &Extractor) -> &'static str {
    match e.required_kind() {
        MeasurementKind::HandshakeInspection => "handshake",
        MeasurementKind::ActiveProbe(_) => "cover-probe",
        MeasurementKind::PerPacketLength => "pkt-len",
        MeasurementKind::PerPacketTiming => "pkt-time",
        MeasurementKind::PerPacketEntropy => "pkt-entropy",
    }
}

/// A feature with random level and surrogate sizes. Some features also
/// read a second measurement so operating costs overlap.
pub fn random_feature<R: Rng>(rng: &mut R, id: &str, e: Extractor) -> Feature {
    let level = FeatureLevel::ALL[rng.random_range(0..4)];
    let mut measurements: std::collections::BTreeSet<_> = [measurement_for(&e).into()].into();
    if rng.random_bool(0.25) {
        let extra = ["handshake", "cover-probe", "pkt-len", "pkt-time", "pkt-entropy"][rng.random_range(0..5)];
        measurements.insert(extra.into());
    }
    Feature {
        id: id.into(),
        extractor: e,
        level,
        measurements,
        store_bytes: rng.random_range(0..64) * 8,
        impl_loc: rng.random_range(0..40) * 5,
        histogram: None,
    }
}

/// `k` distinct extractors from the pool with random costs; measurements
/// as in the tool-reeval catalog.
pub fn random_catalog<R: Rng>(rng: &mut R, base: &FeatureCatalog, k: usize) -> FeatureCatalog {
    let mut pool = extractor_pool();
    pool.shuffle(rng);
    FeatureCatalog {
        measurements: base.measurements.clone(),
        features: pool
            .into_iter()
            .take(k)
            .enumerate()
            .map(|(i, e)| random_feature(rng, &format!("f{i}"), e))
            .collect(),
    }
}

/// Operating costs and rates on a 1/4 grid, so sums tie exactly.
pub fn random_economy<R: Rng>(rng: &mut R) -> EconomyConfig {
    EconomyConfig {
        op_cost: ["handshake", "cover-probe", "pkt-len", "pkt-time", "pkt-entropy"]
            .into_iter()
            .map(|m| (m.into(), f64::from(rng.random_range(0..24u32)) / 4.0))
            .collect(),
        store_rate: 0.0078125,
        imp_rate: 0.0625,
        level_multipliers: [
            (FeatureLevel::PacketLevel, 1.0),
            (FeatureLevel::FlowDistributional, 2.0),
            (FeatureLevel::Stateful, 4.0),
            (FeatureLevel::Probe, 1.0),
        ]
        .into(),
    }
}

pub fn random_tool<R: Rng>(rng: &mut R) -> Tool {
    if rng.random_bool(0.2) {
        return Tool::identity("identity");
    }
    preset_tool(Preset::ALL[rng.random_range(0..Preset::ALL.len())])
}

/// The tool-reeval traffic at desk-test size.
pub fn small_reeval(n_flows: usize) -> Scenario {
    stock("tool-reeval", &[&format!("traffic.n_flows={n_flows}")])
        .scenario()
        .unwrap()
}

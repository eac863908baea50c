//! Shared fixtures for unit tests.

use crate::traffic::{ClassModel, Marker, ProbeDecl, ProbeId, ProbeResponse, RateComponent, TrafficSpec, TruncNormal};

pub(crate) fn tn(mean: f64, stddev: f64, min: f64, max: f64) -> TruncNormal {
    TruncNormal {
        weight: 1.0,
        mean,
        stddev,
        min,
        max,
    }
}

/// One-component class: lengths around `mean_len`, Poisson arrivals at `rate`.
pub(crate) fn class(mean_len: f64, rate: f64, marker: &str, probe_response: &str) -> ClassModel {
    ClassModel {
        packets_per_flow: 50,
        lengths: vec![tn(mean_len, 50.0, 1.0, 1500.0)],
        interarrival: vec![RateComponent { weight: 1.0, rate }],
        entropy: vec![tn(7.0, 0.5, 0.0, 8.0)],
        markers: [(Marker::from(marker), 1.0)].into(),
        probes: [(
            ProbeId::from("tor-handshake"),
            [(ProbeResponse::from(probe_response), 1.0)].into(),
        )]
        .into(),
    }
}

/// Allowed traffic around 600 bytes at 20 packets/s, disallowed around
/// 1200 bytes at 5 packets/s.
pub(crate) fn two_class_spec(n_flows: usize, frac: f64, seed: u64) -> TrafficSpec {
    TrafficSpec {
        n_flows,
        disallowed_fraction: frac,
        probes: vec![ProbeDecl {
            id: "tor-handshake".into(),
            silent: "no-tor-response".into(),
        }],
        allowed: class(600.0, 20.0, "tls", "no-tor-response"),
        disallowed: class(1200.0, 5.0, "tls-telltale", "responds-as-tor"),
        seed,
    }
}

use crate::economics::EconomyConfig;
use crate::traffic::{Extractor, Feature, FeatureCatalog, FeatureLevel, Measurement, MeasurementKind};

/// Measurement feeding `extractor` in [`catalog`].
fn measurement_for(extractor: &Extractor) -> &'static str {
    match extractor.required_kind() {
        MeasurementKind::PerPacketLength => "pkt-len",
        MeasurementKind::PerPacketTiming => "pkt-time",
        MeasurementKind::PerPacketEntropy => "pkt-entropy",
        MeasurementKind::HandshakeInspection => "handshake",
        MeasurementKind::ActiveProbe(_) => "tor-probe",
    }
}

pub(crate) fn feature(id: &str, extractor: Extractor, store_bytes: u64, impl_loc: u64) -> Feature {
    Feature {
        id: id.into(),
        measurements: [measurement_for(&extractor).into()].into(),
        extractor,
        level: FeatureLevel::FlowDistributional,
        store_bytes,
        impl_loc,
        histogram: None,
    }
}

pub(crate) fn catalog(features: Vec<Feature>) -> FeatureCatalog {
    FeatureCatalog {
        measurements: vec![
            Measurement {
                id: "pkt-len".into(),
                kind: MeasurementKind::PerPacketLength,
            },
            Measurement {
                id: "pkt-time".into(),
                kind: MeasurementKind::PerPacketTiming,
            },
            Measurement {
                id: "pkt-entropy".into(),
                kind: MeasurementKind::PerPacketEntropy,
            },
            Measurement {
                id: "handshake".into(),
                kind: MeasurementKind::HandshakeInspection,
            },
            Measurement {
                id: "tor-probe".into(),
                kind: MeasurementKind::ActiveProbe("tor-handshake".into()),
            },
        ],
        features,
    }
}

pub(crate) fn economy(op: [f64; 5]) -> EconomyConfig {
    EconomyConfig {
        op_cost: ["pkt-len", "pkt-time", "pkt-entropy", "handshake", "tor-probe"]
            .into_iter()
            .zip(op)
            .map(|(m, c)| (m.into(), c))
            .collect(),
        store_rate: 0.01,
        imp_rate: 0.05,
        level_multipliers: Default::default(),
    }
}

/// Every non-probe extractor plus the Tor probe.
pub(crate) fn all_extractors() -> Vec<Extractor> {
    vec![
        Extractor::MeanLength,
        Extractor::LengthStddev,
        Extractor::LengthEntropy,
        Extractor::MeanInterarrival,
        Extractor::InterarrivalStddev,
        Extractor::Duration,
        Extractor::MeanPayloadEntropy,
        Extractor::TotalBytes,
        Extractor::HandshakeMarker,
        Extractor::Probe("tor-handshake".into()),
    ]
}

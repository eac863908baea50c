//! Simulated traffic: flows, the generative traffic model, and the
//! measurements and features a censor can compute from a flow.

mod features;
pub(crate) mod generate;

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use features::{
    apply_probe, compute_feature, histogram_entropy, Extractor, Feature, FeatureCatalog, FeatureId, FeatureLevel,
    FeatureSet, FeatureValue, Histogram, Measurement, MeasurementId, MeasurementKind, ProbeLog,
};
pub use generate::generate_traffic;

/// Hidden ground-truth label of a flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrafficType {
    Allowed,
    Disallowed,
}

impl TrafficType {
    pub const ALL: [TrafficType; 2] = [TrafficType::Allowed, TrafficType::Disallowed];

    pub fn index(self) -> usize {
        match self {
            TrafficType::Allowed => 0,
            TrafficType::Disallowed => 1,
        }
    }
}

impl fmt::Display for TrafficType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrafficType::Allowed => f.write_str("allowed"),
            TrafficType::Disallowed => f.write_str("disallowed"),
        }
    }
}

macro_rules! tag_type {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                $name(s.to_owned())
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }
    };
}

tag_type!(
    /// Handshake tag visible to handshake inspection, e.g. `tls-telltale`.
    Marker
);
tag_type!(
    /// Name of an active probe the censor can send.
    ProbeId
);
tag_type!(
    /// Observable reaction of a flow's endpoint to a probe.
    ProbeResponse
);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Packet {
    /// Bytes, at least 1.
    pub length: u32,
    /// Seconds since the first packet of the flow.
    pub arrival_offset: f64,
    /// Bits per byte, within [0, 8].
    pub payload_entropy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Flow {
    pub id: u64,
    pub packets: Vec<Packet>,
    pub handshake_marker: Marker,
    /// Pre-generated responses to every probe in the scenario.
    pub probe_responses: BTreeMap<ProbeId, ProbeResponse>,
    true_type: TrafficType,
}

impl Flow {
    pub fn new(id: u64, packets: Vec<Packet>, handshake_marker: Marker, true_type: TrafficType) -> Self {
        Flow {
            id,
            packets,
            handshake_marker,
            probe_responses: BTreeMap::new(),
            true_type,
        }
    }

    pub fn with_probe_response(mut self, probe: impl Into<ProbeId>, response: impl Into<ProbeResponse>) -> Self {
        self.probe_responses.insert(probe.into(), response.into());
        self
    }

    /// Ground truth. Used for training labels and for charging incurred
    /// cost; never an input to a decision.
    pub fn true_type(&self) -> TrafficType {
        self.true_type
    }

    pub fn is_disallowed(&self) -> bool {
        self.true_type == TrafficType::Disallowed
    }

    pub fn duration(&self) -> f64 {
        self.packets.last().map_or(0.0, |p| p.arrival_offset)
    }
}

/// An ordered sequence of flows (the instances a censor sees in a cycle).
pub type TrafficTrace = Vec<Flow>;

/// A truncated-normal mixture component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruncNormal {
    #[serde(default = "one")]
    pub weight: f64,
    pub mean: f64,
    pub stddev: f64,
    pub min: f64,
    pub max: f64,
}

/// Exponential interarrival component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateComponent {
    #[serde(default = "one")]
    pub weight: f64,
    /// Packets per second.
    pub rate: f64,
}

fn one() -> f64 {
    1.0
}

fn default_packets() -> u32 {
    50
}

/// Generative model of one traffic class. Each flow picks one component
/// per attribute, then draws every packet from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassModel {
    #[serde(default = "default_packets")]
    pub packets_per_flow: u32,
    pub lengths: Vec<TruncNormal>,
    pub interarrival: Vec<RateComponent>,
    pub entropy: Vec<TruncNormal>,
    pub markers: BTreeMap<Marker, f64>,
    #[serde(default)]
    pub probes: BTreeMap<ProbeId, BTreeMap<ProbeResponse, f64>>,
}

/// An active probe available in a scenario. `silent` is what the censor
/// observes when the endpoint does not answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeDecl {
    pub id: ProbeId,
    pub silent: ProbeResponse,
}

/// The traffic distribution of a cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrafficSpec {
    pub n_flows: usize,
    pub disallowed_fraction: f64,
    #[serde(default)]
    pub probes: Vec<ProbeDecl>,
    pub allowed: ClassModel,
    pub disallowed: ClassModel,
    /// Set from the scenario seed; not part of the file format.
    #[serde(skip)]
    pub seed: u64,
}

impl TrafficSpec {
    pub fn class(&self, t: TrafficType) -> &ClassModel {
        match t {
            TrafficType::Allowed => &self.allowed,
            TrafficType::Disallowed => &self.disallowed,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn probe(&self, id: &ProbeId) -> Option<&ProbeDecl> {
        self.probes.iter().find(|p| &p.id == id)
    }

    /// Number of disallowed flows a generated trace contains.
    pub fn disallowed_count(&self) -> usize {
        (self.n_flows as f64 * self.disallowed_fraction).round() as usize
    }

    /// Checks every invariant; `prefix` is the dotted path of this section.
    pub fn validate(&self, prefix: &str) -> Result<()> {
        if self.n_flows == 0 {
            return Err(Error::config(format!("{prefix}.n_flows"), "must be positive"));
        }
        if !(self.disallowed_fraction > 0.0 && self.disallowed_fraction < 1.0) {
            return Err(Error::config(
                format!("{prefix}.disallowed_fraction"),
                format!("{} is outside (0, 1)", self.disallowed_fraction),
            ));
        }
        let mut seen = std::collections::BTreeSet::new();
        for (i, p) in self.probes.iter().enumerate() {
            if !seen.insert(&p.id) {
                return Err(Error::config(
                    format!("{prefix}.probes[{i}]"),
                    format!("duplicate probe `{}`", p.id),
                ));
            }
        }
        for t in TrafficType::ALL {
            self.class(t).validate(&format!("{prefix}.{t}"), &self.probes)?;
        }
        Ok(())
    }
}

fn check_probabilities<K: fmt::Display>(field: &str, probs: &BTreeMap<K, f64>) -> Result<()> {
    if probs.is_empty() {
        return Err(Error::config(field, "distribution is empty"));
    }
    for (k, &p) in probs {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::config(
                format!("{field}.{k}"),
                format!("probability {p} outside [0, 1]"),
            ));
        }
    }
    let total: f64 = probs.values().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::config(field, format!("probabilities sum to {total}, not 1")));
    }
    Ok(())
}

fn check_components(field: &str, comps: &[TruncNormal], lo: f64, hi: f64) -> Result<()> {
    if comps.is_empty() {
        return Err(Error::config(field, "needs at least one component"));
    }
    for (i, c) in comps.iter().enumerate() {
        let f = format!("{field}[{i}]");
        if !(c.weight > 0.0 && c.weight.is_finite()) {
            return Err(Error::config(format!("{f}.weight"), "must be positive"));
        }
        if !(c.stddev >= 0.0 && c.stddev.is_finite()) {
            return Err(Error::config(format!("{f}.stddev"), "must be non-negative"));
        }
        if !(c.min >= lo && c.max <= hi && c.min <= c.max) {
            return Err(Error::config(
                f,
                format!("support [{}, {}] must lie within [{lo}, {hi}]", c.min, c.max),
            ));
        }
        if !(c.min..=c.max).contains(&c.mean) {
            return Err(Error::config(format!("{f}.mean"), "must lie within [min, max]"));
        }
    }
    Ok(())
}

impl ClassModel {
    fn validate(&self, prefix: &str, probes: &[ProbeDecl]) -> Result<()> {
        if self.packets_per_flow == 0 {
            return Err(Error::config(
                format!("{prefix}.packets_per_flow"),
                "must be at least 1",
            ));
        }
        check_components(&format!("{prefix}.lengths"), &self.lengths, 1.0, f64::from(u32::MAX))?;
        check_components(&format!("{prefix}.entropy"), &self.entropy, 0.0, 8.0)?;
        if self.interarrival.is_empty() {
            return Err(Error::config(
                format!("{prefix}.interarrival"),
                "needs at least one component",
            ));
        }
        for (i, c) in self.interarrival.iter().enumerate() {
            if !(c.rate > 0.0 && c.rate.is_finite()) {
                return Err(Error::config(
                    format!("{prefix}.interarrival[{i}].rate"),
                    "must be positive",
                ));
            }
            if !(c.weight > 0.0 && c.weight.is_finite()) {
                return Err(Error::config(
                    format!("{prefix}.interarrival[{i}].weight"),
                    "must be positive",
                ));
            }
        }
        check_probabilities(&format!("{prefix}.markers"), &self.markers)?;
        for p in probes {
            let field = format!("{prefix}.probes.{}", p.id);
            let dist = self
                .probes
                .get(&p.id)
                .ok_or_else(|| Error::config(&field, "no response distribution for declared probe"))?;
            check_probabilities(&field, dist)?;
        }
        if let Some(extra) = self.probes.keys().find(|k| !probes.iter().any(|p| &p.id == *k)) {
            return Err(Error::config(
                format!("{prefix}.probes.{extra}"),
                "probe is not declared in traffic.probes",
            ));
        }
        Ok(())
    }

    /// Mean interarrival time of each component, in seconds.
    pub fn mean_interarrivals(&self) -> impl Iterator<Item = f64> + '_ {
        self.interarrival.iter().map(|c| 1.0 / c.rate)
    }
}

/// Writes one JSON record per flow.
pub fn write_trace_jsonl(path: &Path, trace: &[Flow]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for flow in trace {
        serde_json::to_writer(&mut out, flow)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_trace_jsonl(path: &Path) -> Result<TrafficTrace> {
    let reader = BufReader::new(File::open(path)?);
    let mut trace = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        trace.push(serde_json::from_str(&line)?);
    }
    Ok(trace)
}

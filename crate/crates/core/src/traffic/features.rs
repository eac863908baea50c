use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{Flow, ProbeDecl, ProbeId, ProbeResponse};
use crate::error::{Error, Result};

macro_rules! id_type {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

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

id_type!(MeasurementId);
id_type!(FeatureId);

/// What a measurement observes.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeasurementKind {
    PerPacketLength,
    PerPacketTiming,
    PerPacketEntropy,
    HandshakeInspection,
    ActiveProbe(ProbeId),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Measurement {
    pub id: MeasurementId,
    pub kind: MeasurementKind,
}

/// Structural class of a feature; drives the storage multiplier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureLevel {
    PacketLevel,
    FlowDistributional,
    Stateful,
    Probe,
}

impl FeatureLevel {
    pub const ALL: [FeatureLevel; 4] = [
        FeatureLevel::PacketLevel,
        FeatureLevel::FlowDistributional,
        FeatureLevel::Stateful,
        FeatureLevel::Probe,
    ];
}

impl fmt::Display for FeatureLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeatureLevel::PacketLevel => "packet-level",
            FeatureLevel::FlowDistributional => "flow-distributional",
            FeatureLevel::Stateful => "stateful",
            FeatureLevel::Probe => "probe",
        })
    }
}

/// Named pure functions from a flow to a feature value.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Extractor {
    MeanLength,
    LengthStddev,
    /// Shannon entropy of the flow's packet-length histogram.
    LengthEntropy,
    MeanInterarrival,
    InterarrivalStddev,
    /// Seconds from first to last packet.
    Duration,
    /// Mean per-packet payload entropy.
    MeanPayloadEntropy,
    TotalBytes,
    HandshakeMarker,
    Probe(ProbeId),
}

impl Extractor {
    /// The measurement kind the extractor reads.
    pub fn required_kind(&self) -> MeasurementKind {
        use Extractor::*;
        match self {
            MeanLength | LengthStddev | LengthEntropy | TotalBytes => MeasurementKind::PerPacketLength,
            MeanInterarrival | InterarrivalStddev | Duration => MeasurementKind::PerPacketTiming,
            MeanPayloadEntropy => MeasurementKind::PerPacketEntropy,
            HandshakeMarker => MeasurementKind::HandshakeInspection,
            Probe(p) => MeasurementKind::ActiveProbe(p.clone()),
        }
    }

    pub fn is_categorical(&self) -> bool {
        matches!(self, Extractor::HandshakeMarker | Extractor::Probe(_))
    }
}

/// Fixed-bin histogram used by the entropy estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Histogram {
    pub bins: usize,
    pub min: f64,
    pub max: f64,
}

impl Default for Histogram {
    fn default() -> Self {
        Histogram {
            bins: 16,
            min: 0.0,
            max: 1600.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Feature {
    pub id: FeatureId,
    pub extractor: Extractor,
    pub level: FeatureLevel,
    pub measurements: BTreeSet<MeasurementId>,
    /// Storage surrogate.
    pub store_bytes: u64,
    /// Implementation surrogate (lines of code).
    pub impl_loc: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub histogram: Option<Histogram>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FeatureValue {
    Scalar(f64),
    Category(String),
}

impl FeatureValue {
    pub fn as_scalar(&self) -> Option<f64> {
        match self {
            FeatureValue::Scalar(x) => Some(*x),
            FeatureValue::Category(_) => None,
        }
    }
}

/// A set of features from one catalog. Iterates in id order.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureSet(BTreeSet<FeatureId>);

impl FeatureSet {
    pub fn new() -> Self {
        FeatureSet::default()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, id: &FeatureId) -> bool {
        self.0.contains(id)
    }

    pub fn insert(&mut self, id: FeatureId) -> bool {
        self.0.insert(id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &FeatureId> + Clone {
        self.0.iter()
    }

    pub fn union(&self, other: &FeatureSet) -> FeatureSet {
        FeatureSet(self.0.union(&other.0).cloned().collect())
    }

    pub fn is_subset(&self, other: &FeatureSet) -> bool {
        self.0.is_subset(&other.0)
    }

    /// Tie-break order: smaller sets first, then lexicographic on sorted ids.
    pub fn tie_cmp(&self, other: &FeatureSet) -> std::cmp::Ordering {
        self.len()
            .cmp(&other.len())
            .then_with(|| self.0.iter().cmp(other.0.iter()))
    }

    /// `a+b+c`, or `{}` for the empty set.
    pub fn label(&self) -> String {
        if self.0.is_empty() {
            "{}".to_owned()
        } else {
            self.0.iter().map(|f| f.0.as_str()).collect::<Vec<_>>().join("+")
        }
    }
}

impl fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromIterator<FeatureId> for FeatureSet {
    fn from_iter<I: IntoIterator<Item = FeatureId>>(iter: I) -> Self {
        FeatureSet(iter.into_iter().collect())
    }
}

impl<'a> FromIterator<&'a str> for FeatureSet {
    fn from_iter<I: IntoIterator<Item = &'a str>>(iter: I) -> Self {
        FeatureSet(iter.into_iter().map(FeatureId::from).collect())
    }
}

/// The universe of features a censor may use, with their measurements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureCatalog {
    pub measurements: Vec<Measurement>,
    pub features: Vec<Feature>,
}

impl FeatureCatalog {
    pub fn feature(&self, id: &FeatureId) -> Option<&Feature> {
        self.features.iter().find(|f| &f.id == id)
    }

    pub fn measurement(&self, id: &MeasurementId) -> Option<&Measurement> {
        self.measurements.iter().find(|m| &m.id == id)
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    /// All feature ids in id order.
    pub fn all(&self) -> FeatureSet {
        self.features.iter().map(|f| f.id.clone()).collect()
    }

    /// Looks up every member of `set`, in id order.
    pub fn resolve(&self, set: &FeatureSet) -> Result<Vec<&Feature>> {
        set.iter()
            .map(|id| {
                self.feature(id)
                    .ok_or_else(|| Error::config(format!("catalog.features.{id}"), "feature is not in the catalog"))
            })
            .collect()
    }

    /// Distinct measurements needed by `set`.
    pub fn measurements_of(&self, set: &FeatureSet) -> Result<BTreeSet<MeasurementId>> {
        Ok(self
            .resolve(set)?
            .into_iter()
            .flat_map(|f| f.measurements.iter().cloned())
            .collect())
    }

    /// A catalog with `feature` appended.
    pub fn with_feature(&self, feature: Feature) -> FeatureCatalog {
        let mut c = self.clone();
        c.features.push(feature);
        c
    }

    pub fn validate(&self, prefix: &str) -> Result<()> {
        let mut mids = BTreeSet::new();
        for (i, m) in self.measurements.iter().enumerate() {
            if !mids.insert(&m.id) {
                return Err(Error::config(
                    format!("{prefix}.measurements[{i}].id"),
                    format!("duplicate measurement `{}`", m.id),
                ));
            }
        }
        let mut fids = BTreeSet::new();
        for (i, f) in self.features.iter().enumerate() {
            let field = format!("{prefix}.features[{i}]");
            if !fids.insert(&f.id) {
                return Err(Error::config(
                    format!("{field}.id"),
                    format!("duplicate feature `{}`", f.id),
                ));
            }
            if f.measurements.is_empty() {
                return Err(Error::config(format!("{field}.measurements"), "must not be empty"));
            }
            let mut kinds = Vec::new();
            for m in &f.measurements {
                let decl = self.measurement(m).ok_or_else(|| {
                    Error::config(format!("{field}.measurements"), format!("unknown measurement `{m}`"))
                })?;
                kinds.push(&decl.kind);
            }
            let need = f.extractor.required_kind();
            if !kinds.contains(&&need) {
                return Err(Error::config(
                    format!("{field}.measurements"),
                    format!("extractor needs a measurement of kind {need:?}"),
                ));
            }
            if let Some(h) = &f.histogram {
                if h.bins < 2 || h.min.partial_cmp(&h.max) != Some(std::cmp::Ordering::Less) {
                    return Err(Error::config(
                        format!("{field}.histogram"),
                        "needs >= 2 bins over a non-empty range",
                    ));
                }
            }
        }
        Ok(())
    }

    /// Stable identity of the catalog contents (FNV-1a over its JSON form).
    pub fn fingerprint(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("catalog serializes");
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in bytes {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        format!("{h:016x}")
    }
}

/// Records which probes were actually sent, for operating-cost accounting.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ProbeLog {
    pub used: BTreeSet<ProbeId>,
}

/// Sends `probe` to the flow's endpoint and returns its (pre-generated)
/// response, recording the probe in `log`.
pub fn apply_probe(flow: &Flow, probe: &ProbeId, declared: &[ProbeDecl], log: &mut ProbeLog) -> Result<ProbeResponse> {
    if !declared.iter().any(|p| &p.id == probe) {
        return Err(Error::config("probe", format!("unknown probe `{probe}`")));
    }
    let response = flow
        .probe_responses
        .get(probe)
        .cloned()
        .ok_or_else(|| Error::MeasurementUnavailable {
            feature: probe.to_string(),
            message: format!("flow {} has no response recorded", flow.id),
        })?;
    log.used.insert(probe.clone());
    Ok(response)
}

/// Shannon entropy (bits) of the histogram of `values` over `hist`.
/// Values outside the range fall in the edge bins.
pub fn histogram_entropy(values: impl Iterator<Item = f64>, hist: &Histogram) -> f64 {
    let mut counts = vec![0usize; hist.bins];
    let width = (hist.max - hist.min) / hist.bins as f64;
    let mut n = 0usize;
    for v in values {
        let b = ((v - hist.min) / width).floor();
        let b = if b.is_nan() {
            0.0
        } else {
            b.clamp(0.0, (hist.bins - 1) as f64)
        } as usize;
        counts[b] += 1;
        n += 1;
    }
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    let h: f64 = counts
        .into_iter()
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum();
    // -0.0 for a single occupied bin
    h.max(0.0)
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

fn stddev(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let m = mean(xs.iter().copied());
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64).sqrt()
}

/// Evaluates `feature` on `flow`.
pub fn compute_feature(feature: &Feature, flow: &Flow) -> Result<FeatureValue> {
    use Extractor::*;
    let lengths = || flow.packets.iter().map(|p| f64::from(p.length));
    let gaps = || super::generate::gaps_from_offsets(&flow.packets);
    let value = match &feature.extractor {
        MeanLength => FeatureValue::Scalar(mean(lengths())),
        LengthStddev => FeatureValue::Scalar(stddev(&lengths().collect::<Vec<_>>())),
        LengthEntropy => FeatureValue::Scalar(histogram_entropy(lengths(), &feature.histogram.unwrap_or_default())),
        MeanInterarrival => FeatureValue::Scalar(mean(gaps().into_iter())),
        InterarrivalStddev => FeatureValue::Scalar(stddev(&gaps())),
        Duration => FeatureValue::Scalar(flow.duration()),
        MeanPayloadEntropy => FeatureValue::Scalar(mean(flow.packets.iter().map(|p| p.payload_entropy))),
        TotalBytes => FeatureValue::Scalar(lengths().sum()),
        HandshakeMarker => FeatureValue::Category(flow.handshake_marker.0.clone()),
        Probe(p) => {
            let r = flow
                .probe_responses
                .get(p)
                .ok_or_else(|| Error::MeasurementUnavailable {
                    feature: feature.id.to_string(),
                    message: format!("flow {} has no response to probe `{p}`", flow.id),
                })?;
            FeatureValue::Category(r.0.clone())
        }
    };
    Ok(value)
}

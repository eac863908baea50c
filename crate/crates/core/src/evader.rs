//! Evasion tools as transformations of disallowed flows.
//!
//! A tool rewrites generator-level attributes of each disallowed flow
//! (packet count, lengths, timings, payload entropy, handshake marker) and
//! decides how the flow answers the censor's probes. Allowed flows are
//! never touched.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dist;
use crate::error::{Error, Result};
use crate::seed::{self, Stream};
use crate::traffic::generate::{
    gaps_from_offsets, offsets_from_gaps, round_length, sample_entropies, sample_interarrivals, sample_lengths,
    sample_marker,
};
use crate::traffic::{ClassModel, Flow, Marker, Packet, ProbeId, TrafficSpec, TrafficTrace};

/// Generator-level attribute a transform rewrites.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Attribute {
    /// Packets per flow (and with it, connection length and payload volume).
    Packets,
    Lengths,
    Timings,
    Entropy,
    Marker,
}

impl fmt::Display for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Attribute::Packets => "packets",
            Attribute::Lengths => "lengths",
            Attribute::Timings => "timings",
            Attribute::Entropy => "entropy",
            Attribute::Marker => "marker",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum TransformMode {
    /// Redraws a per-flow centre uniformly over `[min, max]`, then draws the
    /// flow's values around it. Without a range the span of the allowed
    /// class's component centres is used. For timings the centre is a mean
    /// interarrival time in seconds; for packets it is the count itself.
    Polymorphic {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        min: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max: Option<f64>,
        /// Within-flow standard deviation; defaults to that of a randomly
        /// chosen allowed component.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        spread: Option<f64>,
    },
    /// Like `polymorphic`, with the centre picked uniformly from a list.
    PolymorphicMixture {
        centers: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        spread: Option<f64>,
    },
    /// Resamples the attribute from the allowed class's generative model.
    Steganographic,
    SetMarker(Marker),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureTransform {
    pub target: Attribute,
    pub mode: TransformMode,
}

impl FeatureTransform {
    pub fn new(target: Attribute, mode: TransformMode) -> Self {
        FeatureTransform { target, mode }
    }

    pub fn polymorphic_allowed_span(target: Attribute) -> Self {
        FeatureTransform::new(
            target,
            TransformMode::Polymorphic {
                min: None,
                max: None,
                spread: None,
            },
        )
    }

    pub fn steganographic(target: Attribute) -> Self {
        FeatureTransform::new(target, TransformMode::Steganographic)
    }

    pub fn set_marker(marker: &str) -> Self {
        FeatureTransform::new(Attribute::Marker, TransformMode::SetMarker(marker.into()))
    }

    fn validate(&self, field: &str) -> Result<()> {
        use TransformMode::*;
        match (&self.mode, self.target) {
            (SetMarker(_), Attribute::Marker) | (Steganographic, _) => Ok(()),
            (SetMarker(_), t) => Err(Error::config(field, format!("set-marker cannot target `{t}`"))),
            (Polymorphic { .. } | PolymorphicMixture { .. }, Attribute::Marker) => {
                Err(Error::config(field, "polymorphic modes need a numeric attribute"))
            }
            (Polymorphic { min, max, spread }, t) => {
                match (min, max) {
                    (None, None) => {}
                    (Some(lo), Some(hi)) => {
                        if lo.partial_cmp(hi) != Some(Ordering::Less) {
                            return Err(Error::config(
                                field,
                                format!("polymorphic range [{lo}, {hi}] is degenerate"),
                            ));
                        }
                        let (blo, bhi) = attribute_bounds(t);
                        if *lo < blo || *hi > bhi {
                            return Err(Error::config(
                                field,
                                format!("range must lie within [{blo}, {bhi}] for `{t}`"),
                            ));
                        }
                    }
                    _ => return Err(Error::config(field, "polymorphic range needs both min and max")),
                }
                check_spread(field, *spread)
            }
            (PolymorphicMixture { centers, spread }, t) => {
                if centers.len() < 2 {
                    return Err(Error::config(format!("{field}.centers"), "needs at least two centres"));
                }
                let (blo, bhi) = attribute_bounds(t);
                if centers.iter().any(|c| !(blo..=bhi).contains(c)) {
                    return Err(Error::config(
                        format!("{field}.centers"),
                        format!("centres must lie within [{blo}, {bhi}]"),
                    ));
                }
                check_spread(field, *spread)
            }
        }
    }
}

fn check_spread(field: &str, spread: Option<f64>) -> Result<()> {
    match spread {
        Some(s) if !(s >= 0.0 && s.is_finite()) => {
            Err(Error::config(format!("{field}.spread"), "must be non-negative"))
        }
        _ => Ok(()),
    }
}

fn attribute_bounds(t: Attribute) -> (f64, f64) {
    match t {
        Attribute::Packets => (1.0, 1e6),
        Attribute::Lengths => (1.0, 65_535.0),
        Attribute::Timings => (f64::MIN_POSITIVE, 3600.0),
        Attribute::Entropy => (0.0, 8.0),
        Attribute::Marker => (0.0, 0.0),
    }
}

/// How a tool's endpoint reacts to a probe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProbeBehavior {
    /// Keeps the untransformed (telltale) response.
    RespondAsTool,
    /// Answers like allowed traffic does.
    RespondAsCover,
    /// Does not answer.
    Silent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tool {
    pub id: String,
    pub transforms: Vec<FeatureTransform>,
    #[serde(default)]
    pub probe_policy: BTreeMap<ProbeId, ProbeBehavior>,
    /// Behaviour for probes missing from `probe_policy`.
    pub default_probe_behavior: ProbeBehavior,
}

impl Tool {
    /// The untransformed tool.
    pub fn identity(id: &str) -> Self {
        Tool {
            id: id.to_owned(),
            transforms: Vec::new(),
            probe_policy: BTreeMap::new(),
            default_probe_behavior: ProbeBehavior::RespondAsTool,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.transforms.is_empty()
            && self.default_probe_behavior == ProbeBehavior::RespondAsTool
            && self.probe_policy.values().all(|&b| b == ProbeBehavior::RespondAsTool)
    }

    pub fn behavior(&self, probe: &ProbeId) -> ProbeBehavior {
        self.probe_policy
            .get(probe)
            .copied()
            .unwrap_or(self.default_probe_behavior)
    }

    pub fn validate(&self, prefix: &str) -> Result<()> {
        for (i, t) in self.transforms.iter().enumerate() {
            t.validate(&format!("{prefix}.transforms[{i}]"))?;
        }
        Ok(())
    }
}

/// Built-in tool profiles, limited to the capabilities each tool's own
/// evaluation claims.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// Untransformed Tor: telltale TLS handshake, answers Tor probes.
    PlainTorLike,
    /// Polymorphic lengths and timings, no telltale handshake, silent to
    /// probes without the shared secret.
    ScramblesuitLike,
    /// Lengths and timings mimic the cover protocol; probe replies do not.
    SkypemorphLike,
    /// Connection length, payload, lengths and timings mimic the cover
    /// protocol; probe replies do not.
    StegotorusLike,
}

impl Preset {
    pub const ALL: [Preset; 4] = [
        Preset::PlainTorLike,
        Preset::ScramblesuitLike,
        Preset::SkypemorphLike,
        Preset::StegotorusLike,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::PlainTorLike => "plain-tor-like",
            Preset::ScramblesuitLike => "scramblesuit-like",
            Preset::SkypemorphLike => "skypemorph-like",
            Preset::StegotorusLike => "stegotorus-like",
        }
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::config("preset", format!("unknown tool preset `{s}`")))
    }
}

/// Marker a mimicking tool presents.
pub const COVER_MARKER: &str = "cover-protocol";
pub const TELLTALE_MARKER: &str = "tls-telltale";

pub fn tool_preset(name: &str) -> Result<Tool> {
    Ok(preset_tool(name.parse()?))
}

pub fn preset_tool(preset: Preset) -> Tool {
    use Attribute::*;
    let mut tool = Tool::identity(preset.name());
    match preset {
        Preset::PlainTorLike => {
            tool.transforms = vec![FeatureTransform::set_marker(TELLTALE_MARKER)];
        }
        Preset::ScramblesuitLike => {
            tool.transforms = vec![
                FeatureTransform::polymorphic_allowed_span(Lengths),
                FeatureTransform::polymorphic_allowed_span(Timings),
                FeatureTransform::set_marker("none"),
            ];
            tool.default_probe_behavior = ProbeBehavior::Silent;
        }
        Preset::SkypemorphLike => {
            tool.transforms = vec![
                FeatureTransform::steganographic(Lengths),
                FeatureTransform::steganographic(Timings),
                FeatureTransform::set_marker(COVER_MARKER),
            ];
        }
        Preset::StegotorusLike => {
            tool.transforms = vec![
                FeatureTransform::steganographic(Packets),
                FeatureTransform::steganographic(Lengths),
                FeatureTransform::steganographic(Timings),
                FeatureTransform::steganographic(Entropy),
                FeatureTransform::set_marker(COVER_MARKER),
            ];
        }
    }
    tool
}

fn span<I: Iterator<Item = f64>>(values: I) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

/// Per-flow centre, within-flow spread and truncation bounds of a
/// polymorphic draw on a length or entropy attribute.
fn poly_params<R: Rng + ?Sized>(
    mode: &TransformMode,
    comps: &[crate::traffic::TruncNormal],
    bounds: (f64, f64),
    rng: &mut R,
) -> (f64, f64, f64, f64) {
    let default_spread = |rng: &mut R| comps[dist::pick_weighted(rng, comps.iter().map(|c| c.weight))].stddev;
    match mode {
        TransformMode::Polymorphic { min, max, spread } => {
            let (lo, hi, tlo, thi) = match (min, max) {
                (Some(lo), Some(hi)) => (*lo, *hi, *lo, *hi),
                _ => {
                    let (lo, hi) = span(comps.iter().map(|c| c.mean));
                    let (tlo, _) = span(comps.iter().map(|c| c.min));
                    let (_, thi) = span(comps.iter().map(|c| c.max));
                    (lo, hi, tlo, thi)
                }
            };
            let center = if lo < hi { rng.random_range(lo..=hi) } else { lo };
            let s = spread.unwrap_or_else(|| default_spread(rng));
            (center, s, tlo, thi)
        }
        TransformMode::PolymorphicMixture { centers, spread } => {
            let center = centers[rng.random_range(0..centers.len())];
            let s = spread.unwrap_or_else(|| default_spread(rng));
            (center, s, bounds.0, bounds.1)
        }
        _ => unreachable!("only called for polymorphic modes"),
    }
}

fn set_gaps(packets: &mut [Packet], gaps: &[f64]) {
    for (p, t) in packets.iter_mut().zip(offsets_from_gaps(gaps)) {
        p.arrival_offset = t;
    }
}

/// Changes the packet count to `n`, bootstrapping lengths, entropies and
/// gaps from the flow's own packets.
fn resize<R: Rng + ?Sized>(packets: &mut Vec<Packet>, n: usize, allowed: &ClassModel, rng: &mut R) {
    if n == packets.len() {
        return;
    }
    let old = std::mem::take(packets);
    let mut old_gaps = gaps_from_offsets(&old);
    if old_gaps.is_empty() {
        old_gaps = sample_interarrivals(allowed, 2, rng);
    }
    let mut out: Vec<Packet> = (0..n).map(|_| old[rng.random_range(0..old.len())].clone()).collect();
    let gaps: Vec<f64> = (1..n).map(|_| old_gaps[rng.random_range(0..old_gaps.len())]).collect();
    set_gaps(&mut out, &gaps);
    *packets = out;
}

fn apply_transform<R: Rng + ?Sized>(t: &FeatureTransform, flow: &mut Flow, allowed: &ClassModel, rng: &mut R) {
    use TransformMode::*;
    let n = flow.packets.len();
    match (t.target, &t.mode) {
        (Attribute::Marker, SetMarker(m)) => flow.handshake_marker = m.clone(),
        (Attribute::Marker, _) => flow.handshake_marker = sample_marker(allowed, rng),
        // Rejected by validation.
        (_, SetMarker(_)) => {}
        (Attribute::Packets, Steganographic) => {
            resize(&mut flow.packets, allowed.packets_per_flow as usize, allowed, rng)
        }
        (Attribute::Packets, Polymorphic { min, max, .. }) => {
            let (lo, hi) = match (min, max) {
                (Some(lo), Some(hi)) => (*lo, *hi),
                _ => (f64::from(allowed.packets_per_flow), f64::from(allowed.packets_per_flow)),
            };
            let count = rng.random_range(lo.round() as usize..=hi.round().max(lo.round()) as usize);
            resize(&mut flow.packets, count.max(1), allowed, rng);
        }
        (Attribute::Packets, PolymorphicMixture { centers, .. }) => {
            let count = centers[rng.random_range(0..centers.len())].round().max(1.0) as usize;
            resize(&mut flow.packets, count, allowed, rng);
        }
        (Attribute::Lengths, Steganographic) => {
            for (p, l) in flow.packets.iter_mut().zip(sample_lengths(allowed, n, rng)) {
                p.length = l;
            }
        }
        (Attribute::Lengths, mode) => {
            let (center, s, lo, hi) = poly_params(mode, &allowed.lengths, attribute_bounds(Attribute::Lengths), rng);
            for p in &mut flow.packets {
                p.length = round_length(dist::trunc_normal(rng, center, s, lo, hi), lo, hi);
            }
        }
        (Attribute::Entropy, Steganographic) => {
            for (p, e) in flow.packets.iter_mut().zip(sample_entropies(allowed, n, rng)) {
                p.payload_entropy = e;
            }
        }
        (Attribute::Entropy, mode) => {
            let (center, s, lo, hi) = poly_params(mode, &allowed.entropy, attribute_bounds(Attribute::Entropy), rng);
            for p in &mut flow.packets {
                p.payload_entropy = dist::trunc_normal(rng, center, s, lo, hi);
            }
        }
        (Attribute::Timings, Steganographic) => {
            let gaps = sample_interarrivals(allowed, n, rng);
            set_gaps(&mut flow.packets, &gaps);
        }
        (Attribute::Timings, mode) => {
            let mean_gap = match mode {
                Polymorphic {
                    min: Some(lo),
                    max: Some(hi),
                    ..
                } => rng.random_range(*lo..=*hi),
                Polymorphic { .. } => {
                    let (lo, hi) = span(allowed.mean_interarrivals());
                    if lo < hi {
                        rng.random_range(lo..=hi)
                    } else {
                        lo
                    }
                }
                PolymorphicMixture { centers, .. } => centers[rng.random_range(0..centers.len())],
                _ => unreachable!(),
            };
            let gaps: Vec<f64> = (1..n).map(|_| dist::exponential(rng, 1.0 / mean_gap)).collect();
            set_gaps(&mut flow.packets, &gaps);
        }
    }
}

/// Applies `tool` to one flow. Allowed flows come back unchanged.
pub fn transform_flow<R: Rng + ?Sized>(
    tool: &Tool,
    flow: &Flow,
    allowed_ref: &TrafficSpec,
    rng: &mut R,
) -> Result<Flow> {
    if !flow.is_disallowed() {
        return Ok(flow.clone());
    }
    for probe in tool.probe_policy.keys() {
        if !flow.probe_responses.contains_key(probe) {
            return Err(Error::config(
                format!("tools.{}.probe_policy.{probe}", tool.id),
                "flow carries no response for this probe",
            ));
        }
    }
    let allowed = &allowed_ref.allowed;
    let mut out = flow.clone();
    for t in &tool.transforms {
        apply_transform(t, &mut out, allowed, rng);
    }
    for (probe, response) in out.probe_responses.iter_mut() {
        match tool.behavior(probe) {
            ProbeBehavior::RespondAsTool => {}
            ProbeBehavior::RespondAsCover => {
                let dist = allowed.probes.get(probe).ok_or_else(|| {
                    Error::config(
                        format!("traffic.allowed.probes.{probe}"),
                        "no allowed response distribution",
                    )
                })?;
                *response = dist::categorical(rng, dist).clone();
            }
            ProbeBehavior::Silent => {
                let decl = allowed_ref
                    .probe(probe)
                    .ok_or_else(|| Error::config(format!("traffic.probes.{probe}"), "probe is not declared"))?;
                *response = decl.silent.clone();
            }
        }
    }
    Ok(out)
}

/// Applies `tool` to every disallowed flow, each with its own RNG stream.
pub fn transform_trace(tool: &Tool, trace: &[Flow], allowed_ref: &TrafficSpec, seed: u64) -> Result<TrafficTrace> {
    trace
        .iter()
        .map(|f| {
            let mut rng = seed::rng_for(seed, Stream::Transform, f.id);
            transform_flow(tool, f, allowed_ref, &mut rng)
        })
        .collect()
}

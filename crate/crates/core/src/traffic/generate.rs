use std::collections::BTreeMap;

use rand::seq::index;
use rand::Rng;

use super::{ClassModel, Flow, Marker, Packet, ProbeDecl, TrafficSpec, TrafficTrace, TrafficType, TruncNormal};
use crate::dist;
use crate::error::Result;
use crate::seed::{self, Stream};

/// Samples a labeled trace from `spec`.
///
/// Exactly `round(n_flows * disallowed_fraction)` flows are disallowed; their
/// positions are drawn from a dedicated label stream and every flow then
/// draws from its own stream, so the result depends only on the `TrafficSpec`.
pub fn generate_traffic(spec: &TrafficSpec) -> Result<TrafficTrace> {
    spec.validate("traffic")?;
    let n = spec.n_flows;
    let mut labels = vec![TrafficType::Allowed; n];
    let mut label_rng = seed::rng_for(spec.seed, Stream::Labels, 0);
    for i in index::sample(&mut label_rng, n, spec.disallowed_count()) {
        labels[i] = TrafficType::Disallowed;
    }
    Ok(labels
        .into_iter()
        .enumerate()
        .map(|(i, t)| {
            let mut rng = seed::rng_for(spec.seed, Stream::Flow, i as u64);
            sample_flow(spec.class(t), &spec.probes, i as u64, t, &mut rng)
        })
        .collect())
}

pub(crate) fn sample_flow<R: Rng + ?Sized>(
    model: &ClassModel,
    probes: &[ProbeDecl],
    id: u64,
    t: TrafficType,
    rng: &mut R,
) -> Flow {
    let n = model.packets_per_flow as usize;
    let lengths = sample_lengths(model, n, rng);
    let offsets = offsets_from_gaps(&sample_interarrivals(model, n, rng));
    let entropies = sample_entropies(model, n, rng);
    let packets = lengths
        .into_iter()
        .zip(offsets)
        .zip(entropies)
        .map(|((length, arrival_offset), payload_entropy)| Packet {
            length,
            arrival_offset,
            payload_entropy,
        })
        .collect();
    let marker = sample_marker(model, rng);
    let mut probe_responses = BTreeMap::new();
    for p in probes {
        let dist = &model.probes[&p.id];
        probe_responses.insert(p.id.clone(), dist::categorical(rng, dist).clone());
    }
    Flow {
        id,
        packets,
        handshake_marker: marker,
        probe_responses,
        true_type: t,
    }
}

fn pick<'a, R: Rng + ?Sized>(comps: &'a [TruncNormal], rng: &mut R) -> &'a TruncNormal {
    &comps[dist::pick_weighted(rng, comps.iter().map(|c| c.weight))]
}

pub(crate) fn sample_lengths<R: Rng + ?Sized>(model: &ClassModel, n: usize, rng: &mut R) -> Vec<u32> {
    let c = pick(&model.lengths, rng);
    (0..n)
        .map(|_| round_length(dist::trunc_normal(rng, c.mean, c.stddev, c.min, c.max), c.min, c.max))
        .collect()
}

/// Rounds a length sample while keeping it inside the component support.
pub(crate) fn round_length(x: f64, min: f64, max: f64) -> u32 {
    let lo = min.ceil().max(1.0);
    let hi = max.floor().max(lo);
    x.round().clamp(lo, hi) as u32
}

/// `n - 1` gaps; the first packet opens the flow at offset 0.
pub(crate) fn sample_interarrivals<R: Rng + ?Sized>(model: &ClassModel, n: usize, rng: &mut R) -> Vec<f64> {
    let c = &model.interarrival[dist::pick_weighted(rng, model.interarrival.iter().map(|c| c.weight))];
    (1..n).map(|_| dist::exponential(rng, c.rate)).collect()
}

pub(crate) fn sample_entropies<R: Rng + ?Sized>(model: &ClassModel, n: usize, rng: &mut R) -> Vec<f64> {
    let c = pick(&model.entropy, rng);
    (0..n)
        .map(|_| dist::trunc_normal(rng, c.mean, c.stddev, c.min, c.max))
        .collect()
}

pub(crate) fn sample_marker<R: Rng + ?Sized>(model: &ClassModel, rng: &mut R) -> Marker {
    dist::categorical(rng, &model.markers).clone()
}

pub(crate) fn offsets_from_gaps(gaps: &[f64]) -> Vec<f64> {
    let mut t = 0.0;
    std::iter::once(0.0)
        .chain(gaps.iter().map(|g| {
            t += g;
            t
        }))
        .collect()
}

pub(crate) fn gaps_from_offsets(packets: &[Packet]) -> Vec<f64> {
    packets
        .windows(2)
        .map(|w| w[1].arrival_offset - w[0].arrival_offset)
        .collect()
}

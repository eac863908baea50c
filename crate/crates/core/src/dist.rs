//! Small sampling helpers shared by the generator and the evader.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Exp, Normal};

const MAX_REJECTIONS: usize = 10_000;

/// Draws from a normal(mean, stddev) truncated to `[min, max]` by rejection.
///
/// Falls back to a uniform draw on the support when the acceptance region
/// is vanishingly small, so the result always lies within bounds.
pub fn trunc_normal<R: Rng + ?Sized>(rng: &mut R, mean: f64, stddev: f64, min: f64, max: f64) -> f64 {
    if stddev <= 0.0 || min >= max {
        return mean.clamp(min, max);
    }
    let normal = Normal::new(mean, stddev).expect("stddev checked positive");
    for _ in 0..MAX_REJECTIONS {
        let x = normal.sample(rng);
        if (min..=max).contains(&x) {
            return x;
        }
    }
    rng.random_range(min..=max)
}

pub fn exponential<R: Rng + ?Sized>(rng: &mut R, rate: f64) -> f64 {
    Exp::new(rate).expect("rate checked positive").sample(rng)
}

/// Index drawn proportionally to `weights` (all non-negative, sum > 0).
pub fn pick_weighted<R: Rng + ?Sized>(rng: &mut R, weights: impl Iterator<Item = f64> + Clone) -> usize {
    let total: f64 = weights.clone().sum();
    let mut u = rng.random::<f64>() * total;
    let mut last = 0;
    for (i, w) in weights.enumerate() {
        if w <= 0.0 {
            continue;
        }
        last = i;
        if u < w {
            return i;
        }
        u -= w;
    }
    last
}

/// Draws a key of `probs` with probability equal to its value.
pub fn categorical<'a, K, R: Rng + ?Sized>(rng: &mut R, probs: &'a BTreeMap<K, f64>) -> &'a K {
    let idx = pick_weighted(rng, probs.values().copied());
    probs.keys().nth(idx).expect("non-empty distribution")
}

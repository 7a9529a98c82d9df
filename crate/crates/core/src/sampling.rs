//! Small sampling helpers shared by the shot-based simulators.

use rand::Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};

/// Multinomial draw of `shots` trials over `probs` by sequential binomials.
///
/// `probs` need not sum to one; any shortfall is treated as an extra sink
/// outcome whose count is the difference between `shots` and the returned
/// total.
pub fn multinomial<R: Rng + ?Sized>(rng: &mut R, shots: u64, probs: &[f64]) -> Vec<u64> {
    let mut counts = vec![0u64; probs.len()];
    let mut remaining = shots;
    let mut mass_left = 1.0f64;
    for (c, &p) in counts.iter_mut().zip(probs) {
        if remaining == 0 || mass_left <= 0.0 {
            break;
        }
        let p = p.max(0.0);
        let cond = (p / mass_left).clamp(0.0, 1.0);
        let draw = if cond >= 1.0 {
            remaining
        } else if cond <= 0.0 {
            0
        } else {
            Binomial::new(remaining, cond).expect("valid binomial").sample(rng)
        };
        *c = draw;
        remaining -= draw;
        mass_left -= p;
    }
    counts
}

/// Index drawn proportionally to `weights` (which must have a positive sum).
pub fn categorical<R: Rng + ?Sized>(rng: &mut R, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        if u < w {
            return i;
        }
        u -= w;
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

pub fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

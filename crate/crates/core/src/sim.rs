//! Forward sampling and empirical correlations.
//!
//! Paths are drawn with ChaCha8 seeded from a `u64`, one uniform per site,
//! by inverse CDF over the alphabet order. The same seed, kernel, past and
//! length always give the same path.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{LisError, Result};
use crate::kernels::KernelSpec;
use crate::space::{Observable, PastConfig};

/// Batches used for the standard error of [`estimate_correlation`].
pub const BATCHES: usize = 32;

/// Symbols at sites `0..length`, drawn given `past` (at least `R` symbols,
/// the most recent last).
pub fn sample_path(f: &KernelSpec, length: usize, seed: u64, past: &PastConfig) -> Result<Vec<usize>> {
    if length == 0 {
        return Err(LisError::Precondition("path length must be at least 1".into()));
    }
    let r = f.memory_depth();
    f.eval_singleton(0, past)?;
    let base = f.alphabet().size();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut buffer: Vec<usize> = Vec::with_capacity(r + length);
    buffer.extend_from_slice(past.recent(r));
    for site in 0..length as i64 {
        let recent = &buffer[buffer.len() - r..];
        let u: f64 = rng.gen();
        let mut cumulative = 0.0;
        let mut chosen = None;
        let mut last_possible = 0;
        for x in 0..base {
            let p = f.probability(site, recent, x);
            if p > 0.0 {
                last_possible = x;
            }
            cumulative += p;
            if u < cumulative {
                chosen = Some(x);
                break;
            }
        }
        // rounding can leave the cumulative sum a hair below u
        buffer.push(chosen.unwrap_or(last_possible));
    }
    Ok(buffer.split_off(r))
}

/// Default burn-in `⌈10·R/(1 − γ)⌉`; `None` when `γ ≥ 1`.
pub fn default_burn_in(memory_depth: usize, gamma: f64) -> Option<usize> {
    (gamma < 1.0).then(|| (10.0 * memory_depth as f64 / (1.0 - gamma)).ceil() as usize)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CorrelationEstimate {
    /// Signed empirical covariance of `h1` and `h2` shifted by the lag.
    pub estimate: f64,
    pub standard_error: f64,
    pub samples: usize,
    pub batches: usize,
}

fn covariance(pairs: &[(f64, f64)]) -> f64 {
    let n = pairs.len() as f64;
    let (sa, sb, sab) = pairs
        .iter()
        .fold((0.0, 0.0, 0.0), |(sa, sb, sab), (a, b)| (sa + a, sb + b, sab + a * b));
    sab / n - (sa / n) * (sb / n)
}

/// Time average of `h1(τ^t ω)·h2(τ^{t+lag} ω)` minus the product of the
/// means, over all `t` whose windows fall in `[burn_in, len)`. The standard
/// error comes from [`BATCHES`] contiguous batch estimates.
pub fn estimate_correlation(
    path: &[usize],
    h1: &Observable,
    h2: &Observable,
    lag: i64,
    burn_in: usize,
) -> Result<CorrelationEstimate> {
    let (s1, s2) = (h1.support(), h2.support().shifted(lag));
    let lo = s1.lo().min(s2.lo());
    let hi = s1.hi().max(s2.hi());
    let first = burn_in as i64 - lo;
    let last = path.len() as i64 - 1 - hi;
    let samples = (last - first + 1).max(0) as usize;
    if samples < 2 * BATCHES {
        return Err(LisError::Precondition(format!(
            "{samples} usable samples; need at least {}",
            2 * BATCHES
        )));
    }
    let pairs: Vec<(f64, f64)> = (first..=last)
        .map(|t| (h1.eval_strip(path, -t), h2.eval_strip(path, -(t + lag))))
        .collect();
    let estimate = covariance(&pairs);
    let size = samples / BATCHES;
    let batch: Vec<f64> = pairs.chunks_exact(size).take(BATCHES).map(covariance).collect();
    let mean = batch.iter().sum::<f64>() / BATCHES as f64;
    let var = batch.iter().map(|b| (b - mean).powi(2)).sum::<f64>() / (BATCHES - 1) as f64;
    Ok(CorrelationEstimate {
        estimate,
        standard_error: (var / BATCHES as f64).sqrt(),
        samples,
        batches: BATCHES,
    })
}

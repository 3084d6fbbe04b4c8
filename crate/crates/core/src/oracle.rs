//! Brute-force ground truth for small alphabets and short memory.
//!
//! Everything here works from the kernel's probabilities by enumeration and
//! never calls into [`crate::bounds`], so agreement with the bounds is an
//! independent check.

use rayon::prelude::*;
use serde::Serialize;

use crate::analysis::SensitivityMatrix;
use crate::error::{LisError, Result};
use crate::kernels::{average_observable, compose_window, marginal_distribution, KernelSpec};
use crate::random::{random_observable, trial_rng};
use crate::space::{config_index, ConfigIter, FiniteDistribution, Observable, PastConfig, Window};

/// Residual target for power iteration.
pub const STATIONARY_RESIDUAL: f64 = 1e-14;

/// Iteration budget for power iteration.
pub const STATIONARY_BUDGET: usize = 1_000_000;

/// `δ_j(f_Λ h)` by tabulating `f_Λ h` over every relevant past. Zero for
/// `j ∈ Λ` and for sites `f_Λ h` cannot see.
pub fn exact_oscillation_of_average(f: &KernelSpec, window: Window, h: &Observable, j: i64) -> Result<f64> {
    if j >= window.lo() {
        if j > window.hi() && h.support().hi() > window.hi() {
            return Err(LisError::SupportOutOfRange {
                site: h.support().hi(),
                lo: i64::MIN,
                hi: window.hi(),
            });
        }
        return Ok(0.0);
    }
    Ok(average_observable(f, window, h)?.oscillation(j))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DustingReport {
    pub window: Window,
    pub trials: usize,
    /// Number of `(h, j)` pairs checked.
    pub checks: usize,
    pub violations: usize,
    /// `min(rhs − lhs)`; negative when violated.
    pub worst_slack: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Tolerance on `lhs ≤ rhs` in the dusting check.
pub const DUSTING_TOLERANCE: f64 = 1e-12;

/// `Σ_{l=1..|V|} (P_V α)^l` as a dense matrix over `[first, m_V]`, by plain
/// repeated multiplication.
fn block_spread(alpha: &SensitivityMatrix, window: Window, first: i64) -> Vec<Vec<f64>> {
    let size = (window.hi() - first + 1) as usize;
    let site = |x: usize| first + x as i64;
    let step: Vec<Vec<f64>> = (0..size)
        .map(|k| {
            (0..size)
                .map(|j| if window.contains(site(k)) { alpha.alpha(site(k), site(j)) } else { 0.0 })
                .collect()
        })
        .collect();
    let mut power = step.clone();
    let mut total = step.clone();
    for _ in 1..window.len() {
        let mut next = vec![vec![0.0; size]; size];
        for k in 0..size {
            for s in 0..size {
                if power[k][s] == 0.0 {
                    continue;
                }
                for j in 0..size {
                    next[k][j] += power[k][s] * step[s][j];
                }
            }
        }
        for k in 0..size {
            for j in 0..size {
                total[k][j] += next[k][j];
            }
        }
        power = next;
    }
    total
}

/// Checks `δ_j(f_V h) ≤ δ_j(h) + Σ_{k∈V} δ_k(h)·[Σ_{l=1..|V|}(P_V α)^l]_{kj}`
/// for random `h` on `V` plus a strip of `R` or `R + 1` sites before it, at
/// every strip site `j`. A single site `V` gives the plain dusting
/// inequality with `α_kj`.
pub fn verify_dusting(
    f: &KernelSpec,
    window: Window,
    alpha: &SensitivityMatrix,
    trials: usize,
    seed: u64,
) -> Result<DustingReport> {
    let r = f.memory_depth() as i64;
    let first = window.lo() - r - 1;
    let spread = block_spread(alpha, window, first);
    let results = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(seed, t as u64);
            let strip = Window::new(window.lo() - r - (t % 2) as i64, window.hi())?;
            let h = random_observable(strip, f.alphabet(), f.caps(), &mut rng)?;
            let avg = average_observable(f, window, &h)?;
            let mut slacks = Vec::new();
            for j in strip.lo()..window.lo() {
                let lhs = avg.oscillation(j);
                let col = (j - first) as usize;
                let rhs = h.oscillation(j)
                    + window
                        .sites()
                        .map(|k| h.oscillation(k) * spread[(k - first) as usize][col])
                        .sum::<f64>();
                slacks.push(rhs - lhs);
            }
            Ok(slacks)
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    let slacks: Vec<f64> = results.into_iter().flatten().collect();
    let violations = slacks.iter().filter(|s| **s < -DUSTING_TOLERANCE).count();
    let worst_slack = slacks.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(DustingReport {
        window,
        trials,
        checks: slacks.len(),
        violations,
        worst_slack,
        tolerance: DUSTING_TOLERANCE,
        passed: violations == 0,
    })
}

/// `inf f_Λ(σ|ω) / f_Λ(σ|η)` over window configurations `σ` and pasts
/// `ω, η ∈ E^R`. Zero if some configuration is possible from one past and
/// impossible from another.
pub fn min_boundary_ratio(f: &KernelSpec, window: Window) -> Result<f64> {
    let base = f.alphabet().size();
    let r = f.memory_depth();
    f.caps().check(base, r)?;
    let laws = ConfigIter::new(base, r)
        .map(|past| marginal_distribution(f, window, &PastConfig::new(past, f.alphabet())?))
        .collect::<Result<Vec<FiniteDistribution>>>()?;
    let mut ratio = f64::INFINITY;
    for c in 0..laws[0].len() {
        let lo = laws.iter().map(|l| l.weights()[c]).fold(f64::INFINITY, f64::min);
        let hi = laws.iter().map(|l| l.weights()[c]).fold(0.0, f64::max);
        if hi > 0.0 {
            ratio = ratio.min(lo / hi);
        }
    }
    Ok(ratio)
}

/// Stationary law of a finite-range chain on blocks of `k = max(R, 1)`
/// consecutive symbols, oldest first.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StationaryMeasure {
    pub block: usize,
    pub base: usize,
    pub law: FiniteDistribution,
    pub residual: f64,
    pub iterations: usize,
    #[serde(skip)]
    transitions: Vec<Vec<f64>>,
}

fn block_chain(f: &KernelSpec) -> Result<(usize, usize, Vec<Vec<f64>>)> {
    if !f.is_stationary() {
        return Err(LisError::Unsupported("stationary measure needs a shift-invariant kernel".into()));
    }
    let base = f.alphabet().size();
    let r = f.memory_depth();
    let k = r.max(1);
    let states = f.caps().check(base, k)?;
    let transitions = ConfigIter::new(base, k)
        .map(|s| (0..base).map(|x| f.probability(0, &s[k - r..], x)).collect())
        .collect::<Vec<Vec<f64>>>();
    debug_assert_eq!(transitions.len(), states);
    Ok((k, base, transitions))
}

/// Successor of block state `s` after appending symbol `x`.
#[inline]
fn successor(s: usize, x: usize, base: usize, states: usize) -> usize {
    (s * base + x) % states
}

/// BFS levels from state 0 along positive transitions; `None` if some state
/// is unreachable.
fn levels(transitions: &[Vec<f64>], base: usize, reverse: bool) -> Option<Vec<usize>> {
    let states = transitions.len();
    let mut edges: Vec<Vec<usize>> = vec![Vec::new(); states];
    for (s, row) in transitions.iter().enumerate() {
        for (x, p) in row.iter().enumerate() {
            if *p > 0.0 {
                let t = successor(s, x, base, states);
                if reverse {
                    edges[t].push(s);
                } else {
                    edges[s].push(t);
                }
            }
        }
    }
    let mut level = vec![usize::MAX; states];
    level[0] = 0;
    let mut queue = std::collections::VecDeque::from([0]);
    while let Some(s) = queue.pop_front() {
        for &t in &edges[s] {
            if level[t] == usize::MAX {
                level[t] = level[s] + 1;
                queue.push_back(t);
            }
        }
    }
    level.iter().all(|l| *l != usize::MAX).then_some(level)
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Unique stationary law, by power iteration to [`STATIONARY_RESIDUAL`]
/// after checking irreducibility and aperiodicity.
pub fn stationary_measure(f: &KernelSpec) -> Result<StationaryMeasure> {
    let (block, base, transitions) = block_chain(f)?;
    let states = transitions.len();
    let level = levels(&transitions, base, false).ok_or(LisError::Reducible)?;
    levels(&transitions, base, true).ok_or(LisError::Reducible)?;
    let mut period = 0u64;
    for (s, row) in transitions.iter().enumerate() {
        for (x, p) in row.iter().enumerate() {
            if *p > 0.0 {
                let t = successor(s, x, base, states);
                let d = (level[s] as i64 + 1 - level[t] as i64).unsigned_abs();
                period = gcd(period, d);
            }
        }
    }
    if period > 1 {
        return Err(LisError::Periodic(period));
    }
    let mut mu = vec![1.0 / states as f64; states];
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < STATIONARY_BUDGET {
        let next = step(&mu, &transitions, base);
        residual = next
            .iter()
            .zip(&mu)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        mu = next;
        iterations += 1;
        if residual <= STATIONARY_RESIDUAL {
            break;
        }
    }
    if residual > STATIONARY_RESIDUAL {
        return Err(LisError::NoConvergence { residual, iterations });
    }
    let total: f64 = mu.iter().sum();
    mu.iter_mut().for_each(|m| *m /= total);
    Ok(StationaryMeasure {
        block,
        base,
        law: FiniteDistribution::unchecked(mu),
        residual,
        iterations,
        transitions,
    })
}

/// `μ ↦ μP` on block states.
fn step(mu: &[f64], transitions: &[Vec<f64>], base: usize) -> Vec<f64> {
    let states = mu.len();
    let mut next = vec![0.0; states];
    for (s, row) in transitions.iter().enumerate() {
        if mu[s] == 0.0 {
            continue;
        }
        for (x, p) in row.iter().enumerate() {
            next[successor(s, x, base, states)] += mu[s] * p;
        }
    }
    next
}

impl StationaryMeasure {
    /// `sup |μP − μ|`.
    pub fn balance_residual(&self) -> f64 {
        let mu = self.law.weights();
        step(mu, &self.transitions, self.base)
            .iter()
            .zip(mu)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Block-state weights carried forward through `window`: the returned
    /// vector gives, for each ending block state, `Σ μ(s)·f_W(σ|s)·h(σ)`.
    fn push_through(&self, f: &KernelSpec, h: &Observable, weights: &[f64]) -> Result<Vec<f64>> {
        let k = self.block;
        let window = h.support();
        let states = weights.len();
        let mut out = vec![0.0; states];
        for (s, start) in ConfigIter::new(self.base, k).enumerate() {
            if weights[s] == 0.0 {
                continue;
            }
            let origin = window.lo() - k as i64;
            f.for_each_extension(window, &start, &mut |strip, w| {
                let end = config_index(&strip[strip.len() - k..], self.base);
                out[end] += weights[s] * w * h.eval_strip(strip, origin);
            })?;
        }
        Ok(out)
    }

    /// `μ(h)`.
    pub fn expectation(&self, f: &KernelSpec, h: &Observable) -> Result<f64> {
        let window = h.support();
        let mut total = 0.0;
        for (s, past) in ConfigIter::new(self.base, self.block).enumerate() {
            let w = self.law.weights()[s];
            if w > 0.0 {
                total += w * compose_window(f, window, &PastConfig::new(past, f.alphabet())?, h)?;
            }
        }
        Ok(total)
    }

    /// `μ(h1 h2) − μ(h1)μ(h2)`. Supports within reach of the caps are
    /// enumerated jointly; far-apart supports are joined through powers of
    /// the block transition matrix.
    pub fn covariance(&self, f: &KernelSpec, h1: &Observable, h2: &Observable) -> Result<f64> {
        let m1 = self.expectation(f, h1)?;
        let m2 = self.expectation(f, h2)?;
        let (early, late) = if h1.support().lo() <= h2.support().lo() { (h1, h2) } else { (h2, h1) };
        let hull = early.support().hull(&late.support());
        let joint = if f.caps().check(self.base, hull.len()).is_ok() || early.support().hi() >= late.support().lo() {
            let product = Observable::from_fn(hull, f.alphabet(), f.caps(), |c| {
                let pick = |h: &Observable| {
                    let from = (h.support().lo() - hull.lo()) as usize;
                    h.value(&c[from..from + h.support().len()])
                };
                pick(early) * pick(late)
            })?;
            self.expectation(f, &product)?
        } else {
            let mut v = self.push_through(f, early, self.law.weights())?;
            let gap = late.support().lo() - 1 - early.support().hi();
            for _ in 0..gap {
                v = step(&v, &self.transitions, self.base);
            }
            let mut total = 0.0;
            for (s, past) in ConfigIter::new(self.base, self.block).enumerate() {
                if v[s] != 0.0 {
                    total += v[s] * compose_window(f, late.support(), &PastConfig::new(past, f.alphabet())?, late)?;
                }
            }
            total
        };
        Ok(joint - m1 * m2)
    }
}

/// `|Cov_μ(h1, h2 shifted by n)|` under the stationary law of `f`.
pub fn exact_correlation(f: &KernelSpec, h1: &Observable, h2: &Observable, n: i64) -> Result<f64> {
    let mu = stationary_measure(f)?;
    Ok(mu.covariance(f, h1, &h2.shifted(n))?.abs())
}

/// `(f_Λ h)(past)`.
pub fn finite_volume_expectation(f: &KernelSpec, window: Window, past: &PastConfig, h: &Observable) -> Result<f64> {
    compose_window(f, window, past, h)
}

/// `(f_{[−n, m]} h)(past)` for `n = 0..=n_max`, the past sitting just left
/// of `−n` each time.
pub fn finite_volume_sweep(
    f: &KernelSpec,
    last: i64,
    past: &PastConfig,
    h: &Observable,
    n_max: usize,
) -> Result<Vec<f64>> {
    (0..=n_max as i64)
        .map(|n| compose_window(f, Window::new(-n, last)?, past, h))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::build_sensitivity_matrix;
    use crate::kernels::PowerLawNormalization;
    use crate::space::{Alphabet, Caps};

    fn k1() -> KernelSpec {
        KernelSpec::binary_markov(0.3, 0.7).unwrap()
    }

    fn ind(site: i64) -> Observable {
        Observable::indicator(site, 1, &Alphabet::binary()).unwrap()
    }

    #[test]
    fn oscillation_of_two_step_average() {
        let d = exact_oscillation_of_average(&k1(), Window::new(0, 1).unwrap(), &ind(1), -1).unwrap();
        assert!((d - 0.16).abs() < 1e-15);
        assert_eq!(exact_oscillation_of_average(&k1(), Window::new(0, 1).unwrap(), &ind(1), 0).unwrap(), 0.0);
        let iid = KernelSpec::iid(Alphabet::binary(), vec![0.2, 0.8]).unwrap();
        assert_eq!(exact_oscillation_of_average(&iid, Window::new(0, 2).unwrap(), &ind(2), -1).unwrap(), 0.0);
    }

    #[test]
    fn dusting_single_site() {
        let alpha = build_sensitivity_matrix(&k1()).unwrap();
        let r = verify_dusting(&k1(), Window::single(0), &alpha, 500, 11).unwrap();
        assert!(r.passed, "{r:?}");
        assert!(r.worst_slack >= -DUSTING_TOLERANCE);
        let r = verify_dusting(&k1(), Window::single(0), &alpha.zeroed(), 500, 11).unwrap();
        assert!(r.violations > 0);
    }

    #[test]
    fn dusting_iid_is_tight_only_off_window() {
        let iid = KernelSpec::iid(Alphabet::binary(), vec![0.5, 0.5]).unwrap();
        let alpha = build_sensitivity_matrix(&iid).unwrap();
        let r = verify_dusting(&iid, Window::new(0, 1).unwrap(), &alpha, 50, 2).unwrap();
        assert!(r.passed);
    }

    #[test]
    fn boundary_ratio_markov() {
        let ratio = min_boundary_ratio(&k1(), Window::new(0, 2).unwrap()).unwrap();
        assert!((ratio - 3.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn stationary_laws() {
        let mu = stationary_measure(&k1()).unwrap();
        assert!(mu.law.weights().iter().all(|w| (w - 0.5).abs() < 1e-14));
        assert!(mu.balance_residual() < 1e-12);

        let iid = KernelSpec::iid(Alphabet::binary(), vec![0.8, 0.2]).unwrap();
        let mu = stationary_measure(&iid).unwrap();
        assert!((mu.law.weights()[1] - 0.2).abs() < 1e-15);

        let reducible = KernelSpec::binary_markov(0.0, 1.0).unwrap();
        assert_eq!(stationary_measure(&reducible).unwrap_err(), LisError::Reducible);
        let flip = KernelSpec::binary_markov(1.0, 0.0).unwrap();
        assert_eq!(stationary_measure(&flip).unwrap_err(), LisError::Periodic(2));
    }

    #[test]
    fn stationary_is_invariant_under_singletons() {
        let f = KernelSpec::power_law(0.5, 3, PowerLawNormalization::Truncated, 0.1).unwrap();
        let mu = stationary_measure(&f).unwrap();
        let h = Observable::from_fn(Window::new(0, 2).unwrap(), f.alphabet(), &Caps::default(), |c| {
            (c[0] + 2 * c[1] * c[2]) as f64
        })
        .unwrap();
        let averaged = average_observable(&f, Window::single(2), &h).unwrap();
        let lhs = mu.expectation(&f, &averaged).unwrap();
        let rhs = mu.expectation(&f, &h).unwrap();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn markov_correlations() {
        let c = exact_correlation(&k1(), &ind(0), &ind(0), 3).unwrap();
        assert!((c - 0.016).abs() < 1e-12);
        let v = exact_correlation(&k1(), &ind(0), &ind(0), 0).unwrap();
        assert!((v - 0.25).abs() < 1e-12);
        let iid = KernelSpec::iid(Alphabet::binary(), vec![0.3, 0.7]).unwrap();
        assert!(exact_correlation(&iid, &ind(0), &ind(0), 2).unwrap() < 1e-15);
    }

    #[test]
    fn far_correlation_uses_transfer() {
        let c = exact_correlation(&k1(), &ind(0), &ind(0), 30).unwrap();
        assert!((c - 0.25 * 0.4_f64.powi(30)).abs() < 1e-15);
    }

    #[test]
    fn finite_volume_gap() {
        let zeros = finite_volume_sweep(&k1(), 0, &PastConfig::constant(0, 1), &ind(0), 10).unwrap();
        let ones = finite_volume_sweep(&k1(), 0, &PastConfig::constant(1, 1), &ind(0), 10).unwrap();
        for n in 0..=10 {
            assert!(((ones[n] - zeros[n]) - 0.4_f64.powi(n as i32 + 1)).abs() < 1e-14);
        }
        // finite memory: once the window covers the observable, older past is irrelevant
        let f = KernelSpec::power_law(0.5, 4, PowerLawNormalization::Truncated, 0.0).unwrap();
        let h = Observable::from_fn(Window::new(0, 1).unwrap(), f.alphabet(), &Caps::default(), |c| {
            (c[0] + c[1]) as f64
        })
        .unwrap();
        let mut past = vec![1; 6];
        past.extend([0; 4]);
        let a = finite_volume_sweep(&f, 1, &PastConfig::constant(0, 10), &h, 6).unwrap();
        let b = finite_volume_sweep(&f, 1, &PastConfig::new(past, f.alphabet()).unwrap(), &h, 6).unwrap();
        assert_eq!(a, b);
    }
}

//! Loss-of-memory, correlation and comparison bounds driven by a
//! sensitivity matrix.
//!
//! `N_Λ = Σ_{n≥1} (P_Λ α)^n` is nilpotent for a finite window because α is
//! strictly lower triangular and every intermediate site of a path must lie
//! in `Λ`. Sums over the infinite past (correlation and comparison bounds)
//! are cut once the running term is negligible; the discarded remainder is
//! bounded by a geometric certificate in the Dobrushin row sum and added to
//! the reported value.

use std::collections::{BTreeMap, HashMap};

use serde::Serialize;

use crate::analysis::{build_sensitivity_matrix, transport_cost, SensitivityMatrix};
use crate::error::{LisError, Result};
use crate::kernels::KernelSpec;
use crate::space::{ConfigIter, Observable, Window};

/// Running terms below this are dropped once the tail certificate is too.
pub const SERIES_TOLERANCE: f64 = 1e-12;

/// Hard stop for sums over the past, in sites.
pub const MAX_PAST_SITES: usize = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum DecayFamily {
    /// `F(i, j) = λ·|i − j|`.
    Exponential,
    /// `F(i, j) = c·ln(1 + |i − j|)`.
    PowerLog,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DecaySpec {
    pub family: DecayFamily,
    pub rate: f64,
}

impl DecaySpec {
    pub fn exponential(rate: f64) -> Result<Self> {
        Self::new(DecayFamily::Exponential, rate)
    }

    pub fn power_log(rate: f64) -> Result<Self> {
        Self::new(DecayFamily::PowerLog, rate)
    }

    pub fn new(family: DecayFamily, rate: f64) -> Result<Self> {
        if !(rate.is_finite() && rate >= 0.0) {
            return Err(LisError::Precondition(format!("decay rate {rate} must be finite and >= 0")));
        }
        Ok(DecaySpec { family, rate })
    }

    /// `F(i, j)`.
    pub fn exponent(&self, i: i64, j: i64) -> f64 {
        let gap = (i - j).unsigned_abs() as f64;
        match self.family {
            DecayFamily::Exponential => self.rate * gap,
            DecayFamily::PowerLog => self.rate * gap.ln_1p(),
        }
    }
}

/// `γ_i = Σ_{j<i} α_ij e^{F(i,j)}`.
pub fn decay_gamma(alpha: &SensitivityMatrix, decay: &DecaySpec, i: i64) -> f64 {
    alpha
        .row(i)
        .iter()
        .enumerate()
        .map(|(n, a)| a * decay.exponent(i, i - n as i64 - 1).exp())
        .sum()
}

/// `max_{i∈Λ} γ_i`, over the distinct rows only.
pub fn window_gamma(alpha: &SensitivityMatrix, decay: &DecaySpec, window: Window) -> f64 {
    distinct_rows(alpha, window)
        .into_iter()
        .map(|i| decay_gamma(alpha, decay, i))
        .fold(0.0, f64::max)
}

/// One site per distinct row of α inside `window`.
fn distinct_rows(alpha: &SensitivityMatrix, window: Window) -> Vec<i64> {
    if alpha.is_stationary() {
        return vec![window.lo()];
    }
    let mut sites: Vec<i64> = match alpha.repr() {
        crate::analysis::SensitivityRepr::Banded { rows, .. } => rows
            .keys()
            .copied()
            .filter(|i| window.contains(*i))
            .collect(),
        crate::analysis::SensitivityRepr::Stationary(_) => Vec::new(),
    };
    if let Some(free) = window.sites().find(|i| !sites.contains(i)) {
        sites.push(free);
    }
    sites
}

/// Partial sums of `Σ_n (P_Λ α)^n`, rows `k ∈ Λ`, columns `j ∈ [l_Λ − R, m_Λ]`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NeumannSeries {
    pub window: Window,
    pub first_column: i64,
    /// `entries[k − l_Λ][j − first_column]`.
    pub entries: Vec<Vec<f64>>,
    /// Number of powers summed.
    pub terms: usize,
    /// Sup row sum of α over the rows of Λ.
    pub row_sum_sup: f64,
    /// Bound on every omitted entry: `ρ^{n+1}/(1−ρ)`, zero when the series
    /// was summed to nilpotency.
    pub tail_bound: f64,
    /// Row sum at least 1: no geometric control of the series.
    pub diverged: bool,
}

impl NeumannSeries {
    pub fn entry(&self, k: i64, j: i64) -> f64 {
        if !self.window.contains(k) || j < self.first_column {
            return 0.0;
        }
        self.entries[(k - self.window.lo()) as usize]
            .get((j - self.first_column) as usize)
            .copied()
            .unwrap_or(0.0)
    }
}

/// Sums powers of `P_Λ α` until the sup-norm of a term drops below `tol` (and
/// the row sum allows a geometric tail), or until the series terminates
/// after `|Λ|` powers. `tol = 0` always sums exactly.
pub fn neumann_series(alpha: &SensitivityMatrix, window: Window, tol: f64) -> NeumannSeries {
    let r = alpha.depth() as i64;
    let lo = window.lo() - r;
    let cols = (window.hi() - lo + 1) as usize;
    let rows = window.len();
    let row_sum_sup = window
        .sites()
        .map(|k| alpha.row_sum(k))
        .fold(0.0, f64::max);
    let diverged = !(row_sum_sup < 1.0);

    let mut term: Vec<Vec<f64>> = window
        .sites()
        .map(|k| (0..cols).map(|c| alpha.alpha(k, lo + c as i64)).collect())
        .collect();
    let mut total = term.clone();
    let mut terms = 1;
    let mut tail_bound = 0.0;
    while terms < rows {
        let norm = term.iter().flatten().fold(0.0_f64, |m, x| m.max(*x));
        if norm == 0.0 {
            break;
        }
        if !diverged && norm < tol {
            tail_bound = row_sum_sup.powi(terms as i32 + 1) / (1.0 - row_sum_sup);
            break;
        }
        // (P_Λα)^{n+1}_{kj} = Σ_{s∈Λ} (P_Λα)^n_{ks} α_{sj}
        let mut next = vec![vec![0.0; cols]; rows];
        for (ki, row) in term.iter().enumerate() {
            for s in window.sites() {
                let w = row[(s - lo) as usize];
                if w == 0.0 {
                    continue;
                }
                for j in (s - r).max(lo)..s {
                    next[ki][(j - lo) as usize] += w * alpha.alpha(s, j);
                }
            }
        }
        for (t, n) in total.iter_mut().flatten().zip(next.iter().flatten()) {
            *t += n;
        }
        term = next;
        terms += 1;
    }
    NeumannSeries {
        window,
        first_column: lo,
        entries: total,
        terms,
        row_sum_sup,
        tail_bound,
        diverged,
    }
}

fn check_past_site(window: Window, j: i64) -> Result<()> {
    if j >= window.lo() {
        return Err(LisError::Precondition(format!(
            "site {j} must lie strictly before the window starting at {}",
            window.lo()
        )));
    }
    Ok(())
}

/// `δ_j(h) + Σ_{k∈Λ} δ_k(h)·[Σ_{l=1..|Λ|} (P_Λ α)^l]_{kj}`, an upper bound on
/// `δ_j(f_Λ h)` for `j < l_Λ` and `h` living on `(−∞, m_Λ]`. The first term
/// vanishes when `h` lives on `Λ`.
pub fn memory_bound_general(alpha: &SensitivityMatrix, window: Window, h: &Observable, j: i64) -> Result<f64> {
    check_past_site(window, j)?;
    if h.support().hi() > window.hi() {
        return Err(LisError::SupportOutOfRange {
            site: h.support().hi(),
            lo: i64::MIN,
            hi: window.hi(),
        });
    }
    let series = neumann_series(alpha, window, 0.0);
    Ok(h.oscillation(j)
        + h.oscillations()
            .filter(|(k, _)| window.contains(*k))
            .map(|(k, d)| d * series.entry(k, j))
            .sum::<f64>())
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma < 1.0) {
        return Err(LisError::CriterionNotMet(format!(
            "decay condition fails: gamma = {gamma} >= 1"
        )));
    }
    Ok(())
}

/// `(γ_Λ/(1−γ_Λ))·Σ_{k∈Λ} δ_k(h)·e^{−F(k,j)}` for `h` on `Λ` and `j < l_Λ`.
pub fn memory_bound_exponential(
    alpha: &SensitivityMatrix,
    decay: &DecaySpec,
    window: Window,
    h: &Observable,
    j: i64,
) -> Result<f64> {
    check_past_site(window, j)?;
    if !h.support().is_subset_of(&window) {
        return Err(LisError::Precondition(format!(
            "observable on {:?} does not live on {window:?}",
            h.support()
        )));
    }
    let gamma = window_gamma(alpha, decay, window);
    check_gamma(gamma)?;
    let spread: f64 = h
        .oscillations()
        .map(|(k, d)| d * (-decay.exponent(k, j)).exp())
        .sum();
    Ok(gamma / (1.0 - gamma) * spread)
}

/// Largest rate on a 40-step bisection of `[0, 50]` with
/// `sup_i γ_i ≤ 1 − 1e-6`.
pub fn fit_decay_rate(alpha: &SensitivityMatrix, family: DecayFamily) -> Result<DecaySpec> {
    const LIMIT: f64 = 1.0 - 1e-6;
    let sup_gamma = |rate: f64| -> f64 {
        let decay = DecaySpec { family, rate };
        let rows = match alpha.repr() {
            crate::analysis::SensitivityRepr::Stationary(_) => vec![0],
            crate::analysis::SensitivityRepr::Banded { rows, .. } => {
                let mut sites: Vec<i64> = rows.keys().copied().collect();
                sites.push(sites.last().map_or(0, |s| s + 1));
                sites
            }
        };
        rows.into_iter()
            .map(|i| decay_gamma(alpha, &decay, i))
            .fold(0.0, f64::max)
    };
    if sup_gamma(0.0) > LIMIT {
        return Err(LisError::CriterionNotMet(format!(
            "row sum {} leaves no room for any decay rate",
            sup_gamma(0.0)
        )));
    }
    let (mut lo, mut hi) = (0.0_f64, 50.0_f64);
    if sup_gamma(hi) <= LIMIT {
        return DecaySpec::new(family, hi);
    }
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if sup_gamma(mid) <= LIMIT {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    DecaySpec::new(family, lo)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecayComparison {
    pub k: i64,
    pub j: i64,
    pub series: f64,
    pub bound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeriesDecayReport {
    pub gamma: f64,
    pub entries: Vec<DecayComparison>,
    pub violations: usize,
    /// `min(bound − series)` over all entries.
    pub worst_slack: f64,
}

/// Compares every entry of `N_Λ` against `(γ_Λ/(1−γ_Λ))·e^{−F(k,j)}`.
pub fn series_decay_bound(alpha: &SensitivityMatrix, decay: &DecaySpec, window: Window) -> Result<SeriesDecayReport> {
    let gamma = window_gamma(alpha, decay, window);
    check_gamma(gamma)?;
    let factor = gamma / (1.0 - gamma);
    let series = neumann_series(alpha, window, 0.0);
    let mut entries = Vec::new();
    for k in window.sites() {
        for j in series.first_column..k {
            let lhs = series.entry(k, j);
            entries.push(DecayComparison {
                k,
                j,
                series: lhs,
                bound: factor * (-decay.exponent(k, j)).exp(),
            });
        }
    }
    // relative slack absorbs rounding in the summed powers
    let violations = entries
        .iter()
        .filter(|e| e.series > e.bound * (1.0 + 1e-12))
        .count();
    let worst_slack = entries
        .iter()
        .map(|e| e.bound - e.series)
        .fold(f64::INFINITY, f64::min);
    Ok(SeriesDecayReport {
        gamma,
        entries,
        violations,
        worst_slack,
    })
}

/// Sums over all strictly descending paths `m = s_0 > s_1 > … > s_n = k`,
/// `n ≥ 1`, of `Π α_{s_t s_{t+1}}`, for a fixed set of start sites. Filled
/// in one site at a time as `k` moves down.
struct DescendingPaths<'a> {
    alpha: &'a SensitivityMatrix,
    top: i64,
    starts: Vec<i64>,
    /// `reach[s][top − k]` is the path sum from `starts[s]` to `k`, with the
    /// empty path counted at `k = starts[s]`.
    reach: Vec<Vec<f64>>,
}

impl<'a> DescendingPaths<'a> {
    fn new(alpha: &'a SensitivityMatrix, starts: Vec<i64>) -> Self {
        let top = starts.iter().copied().max().unwrap_or(0);
        let reach = starts.iter().map(|_| Vec::new()).collect();
        DescendingPaths { alpha, top, starts, reach }
    }

    /// Path sums from every start to `k`; sites must be visited from the top
    /// down without gaps.
    fn step_to(&mut self, k: i64) -> Vec<f64> {
        let r = self.alpha.depth() as i64;
        let offset = (self.top - k) as usize;
        let mut out = Vec::with_capacity(self.starts.len());
        for (s, &m) in self.starts.iter().enumerate() {
            while self.reach[s].len() <= offset {
                let site = self.top - self.reach[s].len() as i64;
                let v = if site > m {
                    0.0
                } else if site == m {
                    1.0
                } else {
                    (1..=r)
                        .filter(|n| site + n <= m)
                        .map(|n| {
                            let from = site + n;
                            self.reach[s][(self.top - from) as usize] * self.alpha.alpha(from, site)
                        })
                        .sum()
                };
                self.reach[s].push(v);
            }
            out.push(if k == m { 0.0 } else { self.reach[s][offset] });
        }
        out
    }
}

/// `Σ_{k'<k} G(m,k') ≤ ρ^{n0}/(1−ρ)` with `n0 = ⌈(m − k + 1)/R⌉` the fewest
/// steps needed to get below `k`.
fn remainder_below(m: i64, k: i64, rho: f64, depth: usize) -> f64 {
    if depth == 0 || rho == 0.0 {
        return 0.0;
    }
    let steps = (m - k + 1).max(1) as f64 / depth as f64;
    rho.powf(steps.ceil()) / (1.0 - rho)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeriesBound {
    /// Truncated sum plus tail certificate.
    pub value: f64,
    pub truncated_sum: f64,
    pub tail_certificate: f64,
    /// Lowest past site included in the truncated sum.
    pub last_site: i64,
}

fn dobrushin_rho(alpha: &SensitivityMatrix) -> Result<f64> {
    let rho = alpha.sup_row_sum();
    if !(rho < 1.0) {
        return Err(LisError::CriterionNotMet(format!(
            "Dobrushin row sum {rho} is not below 1"
        )));
    }
    Ok(rho)
}

/// `Σ_{k≤top} X_k·Y_k` where `X_k = Σ_m c_m G(m,k)` over `starts`, with
/// `Y_k` supplied by the caller. Stops below `quiet_below` once the term and
/// the certificate `cert(k)` both drop under tolerance.
fn past_series(
    alpha: &SensitivityMatrix,
    starts: &[(i64, f64)],
    top: i64,
    quiet_below: i64,
    mut y: impl FnMut(i64, &mut DescendingPaths) -> f64,
    cert: impl Fn(i64) -> f64,
) -> SeriesBound {
    let mut paths = DescendingPaths::new(alpha, starts.iter().map(|s| s.0).collect());
    let mut sum = 0.0;
    let mut k = top;
    loop {
        let g = paths.step_to(k);
        let x: f64 = starts.iter().zip(&g).map(|((_, c), g)| c * g).sum();
        let term = x * y(k, &mut paths);
        sum += term;
        let remainder = cert(k);
        let visited = (top - k) as usize + 1;
        if (k < quiet_below && term.abs() < SERIES_TOLERANCE && remainder < SERIES_TOLERANCE)
            || visited >= MAX_PAST_SITES
        {
            return SeriesBound {
                value: sum + remainder,
                truncated_sum: sum,
                tail_certificate: remainder,
                last_site: k,
            };
        }
        k -= 1;
    }
}

/// Bound on `|μ(h1 h2) − μ(h1)μ(h2)|` for `h1` on `Λ`, `h2` on `Δ`, `m_Δ < l_Λ`:
///
/// `(D²/4)·Σ_{k≤m_Δ} X_k·Y_k` with `X_k = Σ_{m∈Λ} δ_m(h1) G(m,k)` and
/// `Y_k = δ_k(h2) + Σ_{l∈Δ, l>k} δ_l(h2) G(l,k)`, where `G(m,k)` is the
/// sum of α-products over descending paths from `m` to `k`. Expanding the
/// product gives the double sum `Σ_l Σ_m δ_m(h1)δ_l(h2)A_{ml}` with
/// `A_{ml} = G(m,l) + Σ_{k<l} G(m,k)G(l,k)`.
pub fn correlation_bound(
    alpha: &SensitivityMatrix,
    lambda: Window,
    delta: Window,
    h1: &Observable,
    h2: &Observable,
    diameter: f64,
) -> Result<SeriesBound> {
    if delta.hi() >= lambda.lo() {
        return Err(LisError::Precondition(format!(
            "window {delta:?} must end before {lambda:?} starts"
        )));
    }
    for (h, w) in [(h1, lambda), (h2, delta)] {
        if !h.support().is_subset_of(&w) {
            return Err(LisError::Precondition(format!(
                "observable on {:?} does not live on {w:?}",
                h.support()
            )));
        }
    }
    let rho = dobrushin_rho(alpha)?;
    let scale = diameter * diameter / 4.0;
    let depth = alpha.depth();
    let first: Vec<(i64, f64)> = h1.oscillations().filter(|o| o.1 > 0.0).collect();
    let second: Vec<(i64, f64)> = h2.oscillations().filter(|o| o.1 > 0.0).collect();
    let mut inner = DescendingPaths::new(alpha, second.iter().map(|s| s.0).collect());
    let y_top = delta.hi();
    let mut next_inner = y_top;
    let y = |k: i64, _: &mut DescendingPaths| -> f64 {
        while next_inner >= k {
            let g = inner.step_to(next_inner);
            if next_inner == k {
                next_inner -= 1;
                return h2.oscillation(k) + second.iter().zip(&g).map(|((_, c), g)| c * g).sum::<f64>();
            }
            next_inner -= 1;
        }
        unreachable!("sites are visited in order")
    };
    let second_mass: f64 = second.iter().map(|s| s.1).sum();
    let cert = |k: i64| -> f64 {
        let y_sup = second_mass * rho / (1.0 - rho);
        let x_tail: f64 = first
            .iter()
            .map(|&(m, c)| c * remainder_below(m, k, rho, depth))
            .sum();
        scale * y_sup * x_tail
    };
    let raw = past_series(alpha, &first, y_top, delta.lo(), y, cert);
    Ok(SeriesBound {
        value: scale * raw.truncated_sum + raw.tail_certificate,
        truncated_sum: scale * raw.truncated_sum,
        ..raw
    })
}

/// Same bound with caller-supplied oscillations `Y_k = δ_k(f_{[k+1,m_Δ]} h2)`
/// (for instance exact values from the oracle). Sites missing from
/// `oscillations` use `cap`, which must bound every `Y_k`;
/// `range(h2)/min d` always does.
pub fn correlation_bound_with_oscillations(
    alpha: &SensitivityMatrix,
    lambda: Window,
    h1: &Observable,
    last_delta_site: i64,
    diameter: f64,
    oscillations: &BTreeMap<i64, f64>,
    cap: f64,
) -> Result<SeriesBound> {
    if last_delta_site >= lambda.lo() {
        return Err(LisError::Precondition(format!(
            "site {last_delta_site} must lie before {lambda:?}"
        )));
    }
    if !h1.support().is_subset_of(&lambda) {
        return Err(LisError::Precondition(format!(
            "observable on {:?} does not live on {lambda:?}",
            h1.support()
        )));
    }
    let rho = dobrushin_rho(alpha)?;
    let scale = diameter * diameter / 4.0;
    let depth = alpha.depth();
    let first: Vec<(i64, f64)> = h1.oscillations().filter(|o| o.1 > 0.0).collect();
    let quiet = oscillations
        .keys()
        .next()
        .copied()
        .unwrap_or(last_delta_site)
        .min(last_delta_site);
    let y = |k: i64, _: &mut DescendingPaths| oscillations.get(&k).copied().unwrap_or(cap);
    let cert = |k: i64| -> f64 {
        if k > quiet {
            return f64::INFINITY;
        }
        let x_tail: f64 = first
            .iter()
            .map(|&(m, c)| c * remainder_below(m, k, rho, depth))
            .sum();
        scale * cap * x_tail
    };
    let raw = past_series(alpha, &first, last_delta_site, quiet, y, cert);
    Ok(SeriesBound {
        value: scale * raw.truncated_sum + raw.tail_certificate,
        truncated_sum: scale * raw.truncated_sum,
        ..raw
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComparisonBound {
    pub value: f64,
    pub truncated_sum: f64,
    pub tail_certificate: f64,
    pub last_site: i64,
    /// Largest `sup_ω VKR(f_k(·|ω), f̃_k(·|ω))` met.
    pub max_kernel_distance: f64,
}

/// `sup_ω VKR(f_k(·|ω), g_k(·|ω))` over pasts of the longer memory depth.
pub fn kernel_distance(f: &KernelSpec, g: &KernelSpec, site: i64) -> Result<f64> {
    let alphabet = f.alphabet();
    let base = alphabet.size();
    let depth = f.memory_depth().max(g.memory_depth());
    f.caps().check(base, depth)?;
    let mut best = 0.0_f64;
    for past in ConfigIter::new(base, depth) {
        let p: Vec<f64> = (0..base)
            .map(|x| f.probability(site, &past[depth - f.memory_depth()..], x))
            .collect();
        let q: Vec<f64> = (0..base)
            .map(|x| g.probability(site, &past[depth - g.memory_depth()..], x))
            .collect();
        best = best.max(transport_cost(&p, &q, |x, y| alphabet.distance(x, y)));
    }
    Ok(best)
}

/// Bound on `|μ(h) − μ̃(h)|` for the unique `μ` consistent with `f` and any
/// `μ̃` consistent with `g`, `h` on `Λ`:
///
/// `Σ_{k≤m_Λ} b̄_k·[δ_k(h) + Σ_{l∈Λ, l>k} δ_l(h) G(l,k)]`, where the bracket
/// bounds `δ_k(f_{[k+1,m_Λ]} h)` and `b̄_k = sup_ω VKR(f_k, g_k)` replaces the
/// unknown `μ̃(b_k)`.
pub fn comparison_bound(f: &KernelSpec, g: &KernelSpec, window: Window, h: &Observable) -> Result<ComparisonBound> {
    if f.alphabet() != g.alphabet() {
        return Err(LisError::Precondition("kernels live on different alphabets".into()));
    }
    if !h.support().is_subset_of(&window) {
        return Err(LisError::Precondition(format!(
            "observable on {:?} does not live on {window:?}",
            h.support()
        )));
    }
    let alpha = build_sensitivity_matrix(f)?;
    let rho = dobrushin_rho(&alpha)?;
    let depth = alpha.depth();
    let special: Vec<i64> = f.override_sites().into_iter().chain(g.override_sites()).collect();
    let free_site = special.iter().copied().max().map_or(window.hi(), |s| s.max(window.hi()) + 1);
    let mut cache: HashMap<i64, f64> = HashMap::new();
    let mut b_bar = |k: i64| -> Result<f64> {
        let key = if special.contains(&k) { k } else { free_site };
        if let Some(v) = cache.get(&key) {
            return Ok(*v);
        }
        let v = kernel_distance(f, g, key)?;
        cache.insert(key, v);
        Ok(v)
    };
    let mut b_max = b_bar(free_site)?;
    for &s in &special {
        b_max = b_max.max(b_bar(s)?);
    }
    let starts: Vec<(i64, f64)> = h.oscillations().filter(|o| o.1 > 0.0).collect();
    // the weight X_k is b̄_k; the path sums live in Y_k
    let mut paths = DescendingPaths::new(&alpha, starts.iter().map(|s| s.0).collect());
    let lowest_special = special.iter().copied().min().unwrap_or(window.lo());
    let quiet = window.lo().min(lowest_special);
    let mut sum = 0.0;
    let mut k = window.hi();
    loop {
        let g_k = paths.step_to(k);
        let y = h.oscillation(k) + starts.iter().zip(&g_k).map(|((_, c), g)| c * g).sum::<f64>();
        let term = b_bar(k)? * y;
        sum += term;
        let remainder = b_max
            * starts
                .iter()
                .map(|&(m, c)| c * remainder_below(m, k, rho, depth))
                .sum::<f64>();
        let visited = (window.hi() - k) as usize + 1;
        if (k < quiet && term < SERIES_TOLERANCE && remainder < SERIES_TOLERANCE) || visited >= MAX_PAST_SITES {
            return Ok(ComparisonBound {
                value: sum + remainder,
                truncated_sum: sum,
                tail_certificate: remainder,
                last_site: k,
                max_kernel_distance: b_max,
            });
        }
        k -= 1;
    }
}

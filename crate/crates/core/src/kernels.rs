//! Singleton kernels, their composition into interval kernels, and numerical
//! checks of the interval-kernel axioms.
//!
//! A kernel of memory depth `R` gives the law of the symbol at site `i` as a
//! function of the `R` symbols at `i − R .. i − 1`. Interval kernels are the
//! ordered products of singletons, evaluated by exhaustive enumeration of the
//! interval.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{LisError, Result};
use crate::random::{random_observable, random_past, trial_rng};
use crate::series::{power_sum, power_tail, zeta};
use crate::space::{
    config_index, Alphabet, Caps, ConfigIter, FiniteDistribution, Observable, PastConfig, Window,
    NORMALIZATION_TOLERANCE,
};

/// Range-`k` Markov table. Row `r` is the law given the last `k` symbols
/// whose lexicographic index (oldest first) is `r`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MarkovTable {
    pub range: usize,
    pub rows: Vec<Vec<f64>>,
}

/// Binary kernel `P(1 | past) = a_0 + Σ_k a_{-k}·ω_{-k}`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LinearLongMemory {
    pub intercept: f64,
    /// `a_{-1}, a_{-2}, ..., a_{-R}`.
    pub coefficients: Vec<f64>,
    /// Coefficient mass dropped beyond depth `R`, `Σ_{k>R} a_{-k}`.
    pub tail: f64,
}

/// Full table over `E × E^R`, rows indexed like [`MarkovTable`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GeneralTable {
    pub rows: Vec<Vec<f64>>,
}

/// Per-site overrides with a stationary default elsewhere.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SiteIndexed {
    pub default: Box<KernelFamily>,
    pub overrides: BTreeMap<i64, KernelFamily>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum KernelFamily {
    Markov(MarkovTable),
    Linear(LinearLongMemory),
    Table(GeneralTable),
    SiteIndexed(SiteIndexed),
}

impl KernelFamily {
    fn depth(&self, base: usize) -> usize {
        match self {
            KernelFamily::Markov(m) => m.range,
            KernelFamily::Linear(l) => l.coefficients.len(),
            KernelFamily::Table(t) => {
                let mut depth = 0;
                let mut n = 1;
                while n < t.rows.len() {
                    n *= base;
                    depth += 1;
                }
                depth
            }
            KernelFamily::SiteIndexed(s) => s
                .overrides
                .values()
                .map(|f| f.depth(base))
                .chain(std::iter::once(s.default.depth(base)))
                .max()
                .unwrap_or(0),
        }
    }

    /// Family in force at `site`.
    fn at(&self, site: i64) -> &KernelFamily {
        match self {
            KernelFamily::SiteIndexed(s) => match s.overrides.get(&site) {
                Some(f) => f.at(site),
                None => s.default.at(site),
            },
            other => other,
        }
    }

    /// `recent` holds at least this family's depth of symbols, oldest first.
    #[inline]
    fn probability(&self, site: i64, recent: &[usize], symbol: usize, base: usize) -> f64 {
        match self {
            KernelFamily::Markov(m) => {
                let tail = &recent[recent.len() - m.range..];
                m.rows[config_index(tail, base)][symbol]
            }
            KernelFamily::Table(t) => {
                let depth = self.depth(base);
                let tail = &recent[recent.len() - depth..];
                t.rows[config_index(tail, base)][symbol]
            }
            KernelFamily::Linear(l) => {
                let n = recent.len();
                let p1 = l.intercept
                    + l.coefficients
                        .iter()
                        .enumerate()
                        .map(|(k, a)| a * recent[n - 1 - k] as f64)
                        .sum::<f64>();
                if symbol == 1 {
                    p1
                } else {
                    1.0 - p1
                }
            }
            KernelFamily::SiteIndexed(_) => self.at(site).probability(site, recent, symbol, base),
        }
    }

    fn tail(&self) -> f64 {
        match self {
            KernelFamily::Linear(l) => l.tail,
            KernelFamily::SiteIndexed(s) => s
                .overrides
                .values()
                .map(KernelFamily::tail)
                .fold(s.default.tail(), f64::max),
            _ => 0.0,
        }
    }

    fn validate(&self, alphabet: &Alphabet) -> Result<()> {
        let n = alphabet.size();
        let check_rows = |rows: &[Vec<f64>], expected: usize| -> Result<()> {
            if rows.len() != expected {
                return Err(LisError::InvalidKernel(format!(
                    "{} rows, expected {expected}",
                    rows.len()
                )));
            }
            for (r, row) in rows.iter().enumerate() {
                if row.len() != n {
                    return Err(LisError::InvalidKernel(format!(
                        "row {r} has {} entries, alphabet has {n}",
                        row.len()
                    )));
                }
                if row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                    return Err(LisError::InvalidKernel(format!("row {r} has a negative entry")));
                }
                let total: f64 = row.iter().sum();
                if (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
                    return Err(LisError::InvalidKernel(format!("row {r} sums to {total}")));
                }
            }
            Ok(())
        };
        match self {
            KernelFamily::Markov(m) => {
                let expected = checked_rows(n, m.range)?;
                check_rows(&m.rows, expected)
            }
            KernelFamily::Table(t) => {
                let depth = self.depth(n);
                check_rows(&t.rows, checked_rows(n, depth)?)
            }
            KernelFamily::Linear(l) => {
                if n != 2 {
                    return Err(LisError::InvalidKernel(
                        "linear long-memory kernels need a binary alphabet".into(),
                    ));
                }
                if l.coefficients.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
                    return Err(LisError::InvalidKernel("negative coefficient".into()));
                }
                if !(l.intercept.is_finite() && l.intercept >= 0.0) {
                    return Err(LisError::InvalidKernel("negative intercept".into()));
                }
                if !(l.tail.is_finite() && l.tail >= 0.0) {
                    return Err(LisError::InvalidKernel("negative tail".into()));
                }
                let mass: f64 = l.coefficients.iter().sum();
                if mass >= 1.0 {
                    return Err(LisError::InvalidKernel(format!(
                        "coefficients sum to {mass}, must stay below 1"
                    )));
                }
                if l.intercept + mass > 1.0 + NORMALIZATION_TOLERANCE {
                    return Err(LisError::InvalidKernel(format!(
                        "intercept + coefficients = {} exceeds 1",
                        l.intercept + mass
                    )));
                }
                Ok(())
            }
            KernelFamily::SiteIndexed(s) => {
                if matches!(*s.default, KernelFamily::SiteIndexed(_))
                    || s.overrides
                        .values()
                        .any(|f| matches!(f, KernelFamily::SiteIndexed(_)))
                {
                    return Err(LisError::InvalidKernel("nested site-indexed kernels".into()));
                }
                s.default.validate(alphabet)?;
                s.overrides.values().try_for_each(|f| f.validate(alphabet))
            }
        }
    }
}

fn checked_rows(base: usize, depth: usize) -> Result<usize> {
    (base as u128)
        .checked_pow(depth as u32)
        .filter(|&r| r <= 1 << 24)
        .map(|r| r as usize)
        .ok_or_else(|| LisError::InvalidKernel(format!("table over {base}^{depth} pasts is too large")))
}

/// How the power-law coefficients are normalized.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum PowerLawNormalization {
    /// `M = Σ_{k≥1} k^{-(1+ε)}`; the mass beyond depth `R` is reported as tail.
    Infinite,
    /// `M = Σ_{k=1..R} k^{-(1+ε)}`, so the retained coefficients sum to `1 − ε`.
    Truncated,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KernelSpec {
    alphabet: Alphabet,
    memory_depth: usize,
    family: KernelFamily,
    label: Option<String>,
    caps: Caps,
}

impl KernelSpec {
    pub fn new(alphabet: Alphabet, memory_depth: usize, family: KernelFamily) -> Result<Self> {
        family.validate(&alphabet)?;
        Self::new_unchecked(alphabet, memory_depth, family)
    }

    /// Skips the normalization checks, keeping only the structural ones.
    /// Used to build deliberately corrupted kernels for negative controls.
    pub fn new_unchecked(alphabet: Alphabet, memory_depth: usize, family: KernelFamily) -> Result<Self> {
        let depth = family.depth(alphabet.size());
        if depth > memory_depth {
            return Err(LisError::InvalidKernel(format!(
                "family looks back {depth} sites but declared memory depth is {memory_depth}"
            )));
        }
        if let KernelFamily::Linear(_) = family {
            if alphabet.size() != 2 {
                return Err(LisError::InvalidKernel(
                    "linear long-memory kernels need a binary alphabet".into(),
                ));
            }
        }
        Ok(KernelSpec {
            alphabet,
            memory_depth,
            family,
            label: None,
            caps: Caps::default(),
        })
    }

    pub fn markov(alphabet: Alphabet, range: usize, rows: Vec<Vec<f64>>) -> Result<Self> {
        KernelSpec::new(alphabet, range, KernelFamily::Markov(MarkovTable { range, rows }))
    }

    /// Two-state chain with `P(1|0) = p01` and `P(1|1) = p11`.
    pub fn binary_markov(p01: f64, p11: f64) -> Result<Self> {
        KernelSpec::markov(
            Alphabet::binary(),
            1,
            vec![vec![1.0 - p01, p01], vec![1.0 - p11, p11]],
        )
    }

    /// I.i.d. kernel with the given single-site law.
    pub fn iid(alphabet: Alphabet, probabilities: Vec<f64>) -> Result<Self> {
        KernelSpec::markov(alphabet, 0, vec![probabilities])
    }

    pub fn table(alphabet: Alphabet, memory_depth: usize, rows: Vec<Vec<f64>>) -> Result<Self> {
        let expected = checked_rows(alphabet.size(), memory_depth)?;
        if rows.len() != expected {
            return Err(LisError::InvalidKernel(format!(
                "{} rows, expected {expected} for depth {memory_depth}",
                rows.len()
            )));
        }
        KernelSpec::new(alphabet, memory_depth, KernelFamily::Table(GeneralTable { rows }))
    }

    pub fn linear(intercept: f64, coefficients: Vec<f64>, tail: f64) -> Result<Self> {
        let depth = coefficients.len();
        KernelSpec::new(
            Alphabet::binary(),
            depth,
            KernelFamily::Linear(LinearLongMemory {
                intercept,
                coefficients,
                tail,
            }),
        )
    }

    /// The power-law family `a_{-k} = (1 − ε) / (M·k^{1+ε})`, `k = 1..R`.
    pub fn power_law(
        epsilon: f64,
        depth: usize,
        normalization: PowerLawNormalization,
        intercept: f64,
    ) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(LisError::InvalidKernel(format!("epsilon {epsilon} outside (0, 1)")));
        }
        if depth == 0 {
            return Err(LisError::InvalidKernel("power-law depth must be at least 1".into()));
        }
        let s = 1.0 + epsilon;
        let (m, tail) = match normalization {
            PowerLawNormalization::Infinite => {
                let m = zeta(s);
                (m, (1.0 - epsilon) / m * power_tail(s, depth))
            }
            PowerLawNormalization::Truncated => (power_sum(s, depth), 0.0),
        };
        let coefficients = (1..=depth)
            .map(|k| (1.0 - epsilon) / (m * (k as f64).powf(s)))
            .collect();
        Ok(KernelSpec::linear(intercept, coefficients, tail)?
            .with_label(format!("power-law eps={epsilon} R={depth}")))
    }

    pub fn site_indexed(
        alphabet: Alphabet,
        memory_depth: usize,
        default: KernelFamily,
        overrides: BTreeMap<i64, KernelFamily>,
    ) -> Result<Self> {
        KernelSpec::new(
            alphabet,
            memory_depth,
            KernelFamily::SiteIndexed(SiteIndexed {
                default: Box::new(default),
                overrides,
            }),
        )
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn with_caps(mut self, caps: Caps) -> Self {
        self.caps = caps;
        self
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn memory_depth(&self) -> usize {
        self.memory_depth
    }

    pub fn family(&self) -> &KernelFamily {
        &self.family
    }

    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
    }

    pub fn caps(&self) -> &Caps {
        &self.caps
    }

    pub fn is_stationary(&self) -> bool {
        !matches!(self.family, KernelFamily::SiteIndexed(_))
    }

    /// Family in force at `site`.
    pub fn family_at(&self, site: i64) -> &KernelFamily {
        self.family.at(site)
    }

    /// Coefficient mass dropped by depth truncation (zero for tables).
    pub fn truncation_tail(&self) -> f64 {
        self.family.tail()
    }

    /// Sites whose singleton kernels represent every distinct kernel: `[0]`
    /// for stationary specs, the override sites plus one default site
    /// otherwise.
    pub fn representative_sites(&self) -> Vec<i64> {
        match &self.family {
            KernelFamily::SiteIndexed(s) => {
                let mut sites: Vec<i64> = s.overrides.keys().copied().collect();
                let free = sites.last().map_or(0, |last| last + 1);
                sites.push(free);
                sites
            }
            _ => vec![0],
        }
    }

    /// Sites carrying an override, empty for stationary specs.
    pub fn override_sites(&self) -> Vec<i64> {
        match &self.family {
            KernelFamily::SiteIndexed(s) => s.overrides.keys().copied().collect(),
            _ => Vec::new(),
        }
    }

    /// `f_i(symbol | recent)` with `recent` the last `R` symbols, oldest
    /// first. No bounds checks; see [`KernelSpec::eval_singleton`].
    #[inline]
    pub fn probability(&self, site: i64, recent: &[usize], symbol: usize) -> f64 {
        self.family
            .probability(site, recent, symbol, self.alphabet.size())
    }

    /// Law of the symbol at `site` given the preceding symbols. The most
    /// recent `R` entries of `past` are used.
    pub fn eval_singleton(&self, site: i64, past: &PastConfig) -> Result<FiniteDistribution> {
        if past.len() < self.memory_depth {
            return Err(LisError::PastLength {
                got: past.len(),
                needed: self.memory_depth,
            });
        }
        for &s in past.symbols() {
            self.alphabet.check_symbol(s)?;
        }
        let recent = past.recent(self.memory_depth);
        let weights = (0..self.alphabet.size())
            .map(|x| self.probability(site, recent, x))
            .collect();
        Ok(FiniteDistribution::unchecked(weights))
    }

    /// Same kernel written as a full table over `E^R` (site-indexed specs
    /// expand each family). Requires `|E|^R` within caps.
    pub fn to_table(&self) -> Result<KernelSpec> {
        let base = self.alphabet.size();
        let r = self.memory_depth;
        self.caps.check(base, r)?;
        let expand = |site: i64| -> KernelFamily {
            let rows = ConfigIter::new(base, r)
                .map(|past| (0..base).map(|x| self.probability(site, &past, x)).collect())
                .collect();
            KernelFamily::Table(GeneralTable { rows })
        };
        let family = match &self.family {
            KernelFamily::SiteIndexed(s) => {
                let free = self.representative_sites().pop().unwrap_or(0);
                KernelFamily::SiteIndexed(SiteIndexed {
                    default: Box::new(expand(free)),
                    overrides: s.overrides.keys().map(|&i| (i, expand(i))).collect(),
                })
            }
            _ => expand(0),
        };
        let mut out = KernelSpec::new_unchecked(self.alphabet.clone(), r, family)?;
        out.label = self.label.clone();
        out.caps = self.caps;
        Ok(out)
    }

    fn check_past(&self, past: &PastConfig) -> Result<()> {
        if past.len() < self.memory_depth {
            return Err(LisError::PastLength {
                got: past.len(),
                needed: self.memory_depth,
            });
        }
        past.symbols()
            .iter()
            .try_for_each(|&s| self.alphabet.check_symbol(s))
    }

    /// Calls `visit(strip, weight)` for every configuration of `window`, in
    /// lexicographic order. `strip` holds `prefix` followed by the window
    /// symbols; `weight` is the product of singleton probabilities.
    pub(crate) fn for_each_extension(
        &self,
        window: Window,
        prefix: &[usize],
        visit: &mut impl FnMut(&[usize], f64),
    ) -> Result<()> {
        self.caps.check(self.alphabet.size(), window.len())?;
        let mut strip = Vec::with_capacity(prefix.len() + window.len());
        strip.extend_from_slice(prefix);
        self.extend(window.lo(), window.hi(), &mut strip, 1.0, visit);
        Ok(())
    }

    fn extend(
        &self,
        site: i64,
        hi: i64,
        strip: &mut Vec<usize>,
        weight: f64,
        visit: &mut impl FnMut(&[usize], f64),
    ) {
        if site > hi {
            visit(strip, weight);
            return;
        }
        let r = self.memory_depth;
        for x in 0..self.alphabet.size() {
            let p = self.probability(site, &strip[strip.len() - r..], x);
            strip.push(x);
            self.extend(site + 1, hi, strip, weight * p, visit);
            strip.pop();
        }
    }
}

/// `(f_Λ h)(past)`: the sum over `σ ∈ E^Λ` of `h(past·σ)` weighted by the
/// product of singleton probabilities.
///
/// `h` must live on `(−∞, m_Λ]`; any part left of `Λ` is read from `past`.
pub fn compose_window(f: &KernelSpec, window: Window, past: &PastConfig, h: &Observable) -> Result<f64> {
    f.check_past(past)?;
    let start = window.lo() - past.len() as i64;
    if h.range() == 0.0 && h.support().hi() <= window.hi() {
        // a constant may sit anywhere left of the window, even beyond the past
        let mass = marginal_distribution(f, window, past)?.weights().iter().sum::<f64>();
        return Ok(h.table()[0] * mass);
    }
    check_support(h, start, window.hi())?;
    let mut total = 0.0;
    f.for_each_extension(window, past.symbols(), &mut |strip, w| {
        total += w * h.eval_strip(strip, start);
    })?;
    Ok(total)
}

fn check_support(h: &Observable, lo: i64, hi: i64) -> Result<()> {
    let s = h.support();
    if s.hi() > hi {
        return Err(LisError::SupportOutOfRange { site: s.hi(), lo, hi });
    }
    if s.lo() < lo {
        return Err(LisError::SupportOutOfRange { site: s.lo(), lo, hi });
    }
    Ok(())
}

/// Law of the window configuration given `past`, in lexicographic order.
pub fn marginal_distribution(f: &KernelSpec, window: Window, past: &PastConfig) -> Result<FiniteDistribution> {
    f.check_past(past)?;
    let mut weights = Vec::new();
    let from = past.len();
    f.for_each_extension(window, past.symbols(), &mut |strip, w| {
        debug_assert_eq!(strip.len(), from + window.len());
        weights.push(w);
    })?;
    Ok(FiniteDistribution::unchecked(weights))
}

/// `f_Λ h` as an observable on the sites it can depend on,
/// `[min(l_h, l_Λ − R), l_Λ − 1]`. Constant results live on `{l_Λ − 1}`.
pub fn average_observable(f: &KernelSpec, window: Window, h: &Observable) -> Result<Observable> {
    let support = h.support();
    if support.hi() > window.hi() {
        return Err(LisError::SupportOutOfRange {
            site: support.hi(),
            lo: i64::MIN,
            hi: window.hi(),
        });
    }
    let last = window.lo() - 1;
    let first = support
        .lo()
        .min(window.lo() - f.memory_depth() as i64)
        .min(last);
    let strip = Window::new(first, last)?;
    let base = f.alphabet().size();
    f.caps().check(base, strip.len())?;
    let table = ConfigIter::new(base, strip.len())
        .map(|past| {
            let mut total = 0.0;
            f.for_each_extension(window, &past, &mut |s, w| total += w * h.eval_strip(s, first))
                .map(|_| total)
        })
        .collect::<Result<Vec<f64>>>()?;
    Observable::new(strip, f.alphabet(), table)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConsistencyReport {
    pub outer: Window,
    pub inner: Window,
    pub trials: usize,
    pub max_residual: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Checks `f_Δ(f_Λ h) = f_Δ h` on `trials` random pasts and random
/// observables on `[l_Δ − e, m_Λ]` with `e ∈ {0, 1}`.
pub fn verify_consistency(
    f: &KernelSpec,
    outer: Window,
    inner: Window,
    trials: usize,
    tol: f64,
    seed: u64,
) -> Result<ConsistencyReport> {
    if !inner.is_subset_of(&outer) {
        return Err(LisError::Precondition(format!(
            "inner window {inner:?} is not inside {outer:?}"
        )));
    }
    let residuals = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(seed, t as u64);
            let extra = t % 2;
            let past = random_past(f.memory_depth() + extra, f.alphabet(), &mut rng);
            let support = Window::new(outer.lo() - extra as i64, inner.hi())?;
            let h = random_observable(support, f.alphabet(), f.caps(), &mut rng)?;
            let inner_avg = average_observable(f, inner, &h)?;
            let lhs = compose_window(f, outer, &past, &inner_avg)?;
            let rhs = compose_window(f, outer, &past, &h)?;
            Ok((lhs - rhs).abs())
        })
        .collect::<Result<Vec<f64>>>()?;
    let max_residual = residuals.into_iter().fold(0.0, f64::max);
    Ok(ConsistencyReport {
        outer,
        inner,
        trials,
        max_residual,
        tolerance: tol,
        passed: max_residual <= tol,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FactorizationReport {
    pub window: Window,
    pub splits: usize,
    pub trials: usize,
    pub max_residual: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Checks `f_[l,m] = f_[l,n] f_[n+1,m]` for every split `l ≤ n < m`, on
/// random pasts and random observables on `window`.
pub fn verify_factorization(
    f: &KernelSpec,
    window: Window,
    trials: usize,
    tol: f64,
    seed: u64,
) -> Result<FactorizationReport> {
    let splits: Vec<i64> = (window.lo()..window.hi()).collect();
    let residuals = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(seed, t as u64);
            let past = random_past(f.memory_depth(), f.alphabet(), &mut rng);
            let h = random_observable(window, f.alphabet(), f.caps(), &mut rng)?;
            let whole = compose_window(f, window, &past, &h)?;
            let mut worst = 0.0_f64;
            for &n in &splits {
                let right = average_observable(f, Window::new(n + 1, window.hi())?, &h)?;
                let left = compose_window(f, Window::new(window.lo(), n)?, &past, &right)?;
                worst = worst.max((left - whole).abs());
            }
            Ok(worst)
        })
        .collect::<Result<Vec<f64>>>()?;
    let max_residual = residuals.into_iter().fold(0.0, f64::max);
    Ok(FactorizationReport {
        window,
        splits: splits.len(),
        trials,
        max_residual,
        tolerance: tol,
        passed: max_residual <= tol,
    })
}

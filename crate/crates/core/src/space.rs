//! Shared vocabulary: alphabets with a metric, site windows, pasts,
//! finite distributions and local observables.
//!
//! Symbols are stored as indices into the alphabet. A configuration on a
//! window is a `Vec<usize>` whose first entry sits at `window.lo`.
//! Configurations are enumerated in lexicographic order with the leftmost
//! site most significant, and table-valued objects use the same order.

use serde::Serialize;

use crate::error::{LisError, Result};

/// Largest alphabet the library accepts.
pub const MAX_ALPHABET: usize = 16;

/// Absolute tolerance for metric validation and verdict comparisons.
pub const TOLERANCE: f64 = 1e-9;

/// Tolerance for probability normalization.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-12;

/// Upper limit on the number of configurations any single exhaustive
/// enumeration may visit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Caps {
    pub max_configs: usize,
}

impl Default for Caps {
    /// 4096 configurations, i.e. 12 binary sites.
    fn default() -> Self {
        Caps { max_configs: 1 << 12 }
    }
}

impl Caps {
    pub fn new(max_configs: usize) -> Self {
        Caps { max_configs }
    }

    /// Number of configurations of `sites` sites over `base` symbols, or a
    /// cap error naming the offending size.
    pub fn check(&self, base: usize, sites: usize) -> Result<usize> {
        let size = (base as u128).checked_pow(sites as u32).unwrap_or(u128::MAX);
        if size > self.max_configs as u128 {
            return Err(LisError::CapExceeded {
                size,
                cap: self.max_configs,
            });
        }
        Ok(size as usize)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Alphabet {
    symbols: Vec<String>,
    metric: Vec<f64>,
    diameter: f64,
    discrete: bool,
}

impl Alphabet {
    /// Alphabet with the discrete metric (distance 1 between distinct symbols).
    pub fn discrete<S: Into<String>>(symbols: impl IntoIterator<Item = S>) -> Result<Self> {
        let symbols: Vec<String> = symbols.into_iter().map(Into::into).collect();
        check_symbols(&symbols)?;
        let n = symbols.len();
        let metric = (0..n * n)
            .map(|k| if k / n == k % n { 0.0 } else { 1.0 })
            .collect();
        Ok(Alphabet {
            symbols,
            metric,
            diameter: 1.0,
            discrete: true,
        })
    }

    /// The alphabet {0, 1} with the discrete metric.
    pub fn binary() -> Self {
        Alphabet::discrete(["0", "1"]).expect("binary alphabet is valid")
    }

    pub fn with_metric<S: Into<String>>(
        symbols: impl IntoIterator<Item = S>,
        rows: &[Vec<f64>],
    ) -> Result<Self> {
        let symbols: Vec<String> = symbols.into_iter().map(Into::into).collect();
        check_symbols(&symbols)?;
        validate_metric(rows, symbols.len())?;
        let n = symbols.len();
        let metric: Vec<f64> = rows.iter().flatten().copied().collect();
        let diameter = metric.iter().copied().fold(0.0, f64::max);
        let discrete = (0..n * n).all(|k| {
            let want = if k / n == k % n { 0.0 } else { 1.0 };
            metric[k] == want
        });
        Ok(Alphabet {
            symbols,
            metric,
            diameter,
            discrete,
        })
    }

    pub fn size(&self) -> usize {
        self.symbols.len()
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.symbols.iter().position(|s| s == label)
    }

    #[inline]
    pub fn distance(&self, a: usize, b: usize) -> f64 {
        self.metric[a * self.size() + b]
    }

    pub fn metric_rows(&self) -> Vec<Vec<f64>> {
        self.metric.chunks(self.size()).map(<[f64]>::to_vec).collect()
    }

    /// `D`, the largest distance between two symbols.
    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    /// Smallest distance between two distinct symbols.
    pub fn min_distance(&self) -> f64 {
        let n = self.size();
        (0..n)
            .flat_map(|a| (0..n).filter(move |&b| b != a).map(move |b| (a, b)))
            .map(|(a, b)| self.distance(a, b))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn is_discrete(&self) -> bool {
        self.discrete
    }

    pub fn check_symbol(&self, symbol: usize) -> Result<()> {
        if symbol >= self.size() {
            return Err(LisError::UnknownSymbol {
                symbol,
                size: self.size(),
            });
        }
        Ok(())
    }
}

fn check_symbols(symbols: &[String]) -> Result<()> {
    if symbols.len() < 2 || symbols.len() > MAX_ALPHABET {
        return Err(LisError::InvalidAlphabet(format!(
            "{} symbols, expected 2..={MAX_ALPHABET}",
            symbols.len()
        )));
    }
    for (k, s) in symbols.iter().enumerate() {
        if symbols[..k].contains(s) {
            return Err(LisError::InvalidAlphabet(format!("duplicate symbol {s:?}")));
        }
    }
    Ok(())
}

/// Checks that `rows` is an `n`×`n` metric: zero diagonal, symmetric,
/// positive and finite off the diagonal, triangle inequality on all triples.
pub fn validate_metric(rows: &[Vec<f64>], n: usize) -> Result<()> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(LisError::InvalidMetric(format!("expected a {n}x{n} table")));
    }
    for a in 0..n {
        if rows[a][a] != 0.0 {
            return Err(LisError::InvalidMetric(format!("d({a},{a}) != 0")));
        }
        for b in 0..n {
            let d = rows[a][b];
            if a != b && !(d.is_finite() && d > 0.0) {
                return Err(LisError::InvalidMetric(format!(
                    "d({a},{b}) = {d} must be positive and finite"
                )));
            }
            if (d - rows[b][a]).abs() > TOLERANCE {
                return Err(LisError::InvalidMetric(format!("d({a},{b}) != d({b},{a})")));
            }
        }
    }
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                if rows[a][c] > rows[a][b] + rows[b][c] + TOLERANCE {
                    return Err(LisError::InvalidMetric(format!(
                        "triangle inequality fails for ({a},{b},{c})"
                    )));
                }
            }
        }
    }
    Ok(())
}

/// A finite interval of sites `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct Window {
    lo: i64,
    hi: i64,
}

impl Window {
    pub fn new(lo: i64, hi: i64) -> Result<Self> {
        if lo > hi {
            return Err(LisError::InvalidWindow { lo, hi });
        }
        Ok(Window { lo, hi })
    }

    pub fn single(site: i64) -> Self {
        Window { lo: site, hi: site }
    }

    pub fn lo(&self) -> i64 {
        self.lo
    }

    pub fn hi(&self) -> i64 {
        self.hi
    }

    pub fn len(&self) -> usize {
        (self.hi - self.lo + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, site: i64) -> bool {
        self.lo <= site && site <= self.hi
    }

    pub fn is_subset_of(&self, other: &Window) -> bool {
        other.lo <= self.lo && self.hi <= other.hi
    }

    pub fn sites(&self) -> impl Iterator<Item = i64> {
        self.lo..=self.hi
    }

    /// Smallest window containing both.
    pub fn hull(&self, other: &Window) -> Window {
        Window {
            lo: self.lo.min(other.lo),
            hi: self.hi.max(other.hi),
        }
    }

    pub fn shifted(&self, by: i64) -> Window {
        Window {
            lo: self.lo + by,
            hi: self.hi + by,
        }
    }
}

/// The symbols immediately preceding a window, oldest first: the last entry
/// sits at `l − 1`, the first at `l − len`.
///
/// A kernel of memory depth `R` needs at least `R` symbols. Longer pasts are
/// accepted so observables may look further back.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct PastConfig {
    symbols: Vec<usize>,
}

impl PastConfig {
    pub fn new(symbols: Vec<usize>, alphabet: &Alphabet) -> Result<Self> {
        for &s in &symbols {
            alphabet.check_symbol(s)?;
        }
        Ok(PastConfig { symbols })
    }

    pub fn empty() -> Self {
        PastConfig {
            symbols: Vec::new(),
        }
    }

    /// `len` copies of `symbol`.
    pub fn constant(symbol: usize, len: usize) -> Self {
        PastConfig {
            symbols: vec![symbol; len],
        }
    }

    pub fn symbols(&self) -> &[usize] {
        &self.symbols
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// The most recent `n` symbols, oldest first.
    pub fn recent(&self, n: usize) -> &[usize] {
        &self.symbols[self.symbols.len() - n.min(self.symbols.len())..]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FiniteDistribution {
    weights: Vec<f64>,
}

impl FiniteDistribution {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(LisError::InvalidDistribution("no weights".into()));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(LisError::InvalidDistribution(format!("weight {w} is not a probability")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(LisError::InvalidDistribution(format!("weights sum to {total}")));
        }
        Ok(FiniteDistribution { weights })
    }

    /// Skips validation; used for kernels that are deliberately broken.
    pub(crate) fn unchecked(weights: Vec<f64>) -> Self {
        FiniteDistribution { weights }
    }

    pub fn point_mass(size: usize, at: usize) -> Self {
        let mut weights = vec![0.0; size];
        weights[at] = 1.0;
        FiniteDistribution { weights }
    }

    pub fn uniform(size: usize) -> Self {
        FiniteDistribution {
            weights: vec![1.0 / size as f64; size],
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn expectation(&self, values: &[f64]) -> f64 {
        self.weights.iter().zip(values).map(|(w, v)| w * v).sum()
    }
}

/// Lexicographic odometer over `base^len` configurations.
#[derive(Clone, Debug)]
pub struct ConfigIter {
    base: usize,
    current: Option<Vec<usize>>,
}

impl ConfigIter {
    pub fn new(base: usize, len: usize) -> Self {
        ConfigIter {
            base,
            current: Some(vec![0; len]),
        }
    }
}

impl Iterator for ConfigIter {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let out = self.current.take()?;
        let mut next = out.clone();
        let mut pos = next.len();
        loop {
            if pos == 0 {
                break;
            }
            pos -= 1;
            next[pos] += 1;
            if next[pos] < self.base {
                self.current = Some(next);
                break;
            }
            next[pos] = 0;
        }
        Some(out)
    }
}

/// Every configuration of `window`, lexicographic with the leftmost site
/// most significant.
pub fn enumerate_configs(window: Window, alphabet: &Alphabet, caps: &Caps) -> Result<ConfigIter> {
    caps.check(alphabet.size(), window.len())?;
    Ok(ConfigIter::new(alphabet.size(), window.len()))
}

/// Position of `config` in lexicographic order.
#[inline]
pub fn config_index(config: &[usize], base: usize) -> usize {
    config.iter().fold(0, |acc, &s| acc * base + s)
}

pub fn index_to_config(mut index: usize, base: usize, len: usize) -> Vec<usize> {
    let mut out = vec![0; len];
    for slot in out.iter_mut().rev() {
        *slot = index % base;
        index /= base;
    }
    out
}

/// A real function of the symbols on a finite window, stored as a table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Observable {
    support: Window,
    base: usize,
    table: Vec<f64>,
    oscillations: Vec<f64>,
}

impl Observable {
    /// `table` is indexed by [`config_index`] of the support configuration.
    /// Oscillations are computed against `alphabet`'s metric.
    pub fn new(support: Window, alphabet: &Alphabet, table: Vec<f64>) -> Result<Self> {
        let base = alphabet.size();
        let expected = (base as u128).checked_pow(support.len() as u32);
        if expected != Some(table.len() as u128) {
            return Err(LisError::InvalidObservable(format!(
                "table has {} entries, support of {} sites needs {}^{}",
                table.len(),
                support.len(),
                base,
                support.len()
            )));
        }
        if table.iter().any(|v| !v.is_finite()) {
            return Err(LisError::InvalidObservable("non-finite table entry".into()));
        }
        let mut h = Observable {
            support,
            base,
            table,
            oscillations: Vec::new(),
        };
        h.oscillations = support
            .sites()
            .map(|j| oscillation(&h, j, alphabet))
            .collect();
        Ok(h)
    }

    pub fn from_fn(
        support: Window,
        alphabet: &Alphabet,
        caps: &Caps,
        f: impl Fn(&[usize]) -> f64,
    ) -> Result<Self> {
        let table = enumerate_configs(support, alphabet, caps)?
            .map(|c| f(&c))
            .collect();
        Observable::new(support, alphabet, table)
    }

    /// `1{σ_site = symbol}`.
    pub fn indicator(site: i64, symbol: usize, alphabet: &Alphabet) -> Result<Self> {
        alphabet.check_symbol(symbol)?;
        let table = (0..alphabet.size())
            .map(|s| if s == symbol { 1.0 } else { 0.0 })
            .collect();
        Observable::new(Window::single(site), alphabet, table)
    }

    pub fn constant(site: i64, value: f64, alphabet: &Alphabet) -> Result<Self> {
        Observable::new(Window::single(site), alphabet, vec![value; alphabet.size()])
    }

    pub fn support(&self) -> Window {
        self.support
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    pub fn alphabet_size(&self) -> usize {
        self.base
    }

    /// Value on a configuration of the support.
    #[inline]
    pub fn value(&self, config: &[usize]) -> f64 {
        self.table[config_index(config, self.base)]
    }

    /// Value on a strip of symbols whose first entry sits at `strip_start`.
    /// The strip must cover the support.
    #[inline]
    pub fn eval_strip(&self, strip: &[usize], strip_start: i64) -> f64 {
        let from = (self.support.lo() - strip_start) as usize;
        self.value(&strip[from..from + self.support.len()])
    }

    pub fn is_covered_by(&self, lo: i64, hi: i64) -> bool {
        lo <= self.support.lo() && self.support.hi() <= hi
    }

    /// Cached d-oscillation at site `j`; zero off the support.
    pub fn oscillation(&self, j: i64) -> f64 {
        if self.support.contains(j) {
            self.oscillations[(j - self.support.lo()) as usize]
        } else {
            0.0
        }
    }

    /// `(site, δ_site)` over the support.
    pub fn oscillations(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        self.support.sites().zip(self.oscillations.iter().copied())
    }

    /// Same table on the support moved by `by` sites.
    pub fn shifted(&self, by: i64) -> Observable {
        Observable {
            support: self.support.shifted(by),
            ..self.clone()
        }
    }

    /// `c·h`; oscillations scale by `|c|`.
    pub fn scaled(&self, c: f64) -> Observable {
        Observable {
            support: self.support,
            base: self.base,
            table: self.table.iter().map(|v| c * v).collect(),
            oscillations: self.oscillations.iter().map(|o| c.abs() * o).collect(),
        }
    }

    /// `max h − min h`.
    pub fn range(&self) -> f64 {
        let max = self.table.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = self.table.iter().copied().fold(f64::INFINITY, f64::min);
        max - min
    }
}

/// d-oscillation of `h` at site `j`: the largest `|h(ξ) − h(η)| / d(ξ_j, η_j)`
/// over configurations equal off `j`, by exhaustive enumeration of the
/// support. Sites off the support give 0.
pub fn oscillation(h: &Observable, j: i64, alphabet: &Alphabet) -> f64 {
    if !h.support.contains(j) {
        return 0.0;
    }
    let base = h.base;
    let pos = (j - h.support.lo()) as usize;
    let len = h.support.len();
    // stride of position `pos` in the lexicographic index
    let stride = base.pow((len - 1 - pos) as u32);
    let mut best = 0.0_f64;
    for (idx, &value) in h.table.iter().enumerate() {
        let a = (idx / stride) % base;
        for b in (a + 1)..base {
            let other = h.table[idx + (b - a) * stride];
            let diff = (value - other).abs();
            if diff > 0.0 {
                best = best.max(diff / alphabet.distance(a, b));
            }
        }
    }
    best
}

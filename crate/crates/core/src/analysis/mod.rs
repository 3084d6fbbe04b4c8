//! Variations, transport-based sensitivity estimators, and the two
//! uniqueness criteria: one-sided Dobrushin and boundary uniformity.
//!
//! Variation convention: `var_j(f_i)` is defined for `j ≤ i` as the largest
//! change of `f_i(ξ_i | ·)` over pasts agreeing on `[j, i − 1]`. The case
//! `j = i` (agreement on the symbol at `i` only) is included; it is the term
//! that carries all the past dependence of a range-1 Markov kernel.
//!
//! Linear long-memory kernels are affine in each past coordinate, so their
//! variations and estimators have closed forms that hold at any depth; all
//! other families are enumerated over `E^R`.

pub mod transport;

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{LisError, Result};
use crate::kernels::{KernelFamily, KernelSpec};
use crate::space::ConfigIter;

pub use transport::{transport_cost, vkr_distance};

/// `var_j(f_i)` for `j ≤ i`.
pub fn variation(f: &KernelSpec, i: i64, j: i64) -> Result<f64> {
    if j > i {
        return Err(LisError::Precondition(format!("variation needs j <= i, got j={j}, i={i}")));
    }
    let lag = (i - j) as usize;
    let r = f.memory_depth();
    if lag >= r {
        return Ok(0.0);
    }
    if let KernelFamily::Linear(l) = f.family_at(i) {
        // flip every free coordinate: Σ_{k > lag} a_{-k}
        return Ok(l.coefficients.iter().skip(lag).sum());
    }
    let base = f.alphabet().size();
    f.caps().check(base, r)?;
    let mut best = 0.0_f64;
    let mut past = vec![0; r];
    for shared in ConfigIter::new(base, lag) {
        past[r - lag..].copy_from_slice(&shared);
        for x in 0..base {
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for free in ConfigIter::new(base, r - lag) {
                past[..r - lag].copy_from_slice(&free);
                let p = f.probability(i, &past, x);
                lo = lo.min(p);
                hi = hi.max(p);
            }
            best = best.max(hi - lo);
        }
    }
    Ok(best)
}

/// Transport estimator `C_ij`: the largest VKR distance between the laws at
/// `i` given two pasts that differ only at `j`, per unit of `d(ξ_j, η_j)`.
pub fn sensitivity_estimator(f: &KernelSpec, i: i64, j: i64) -> Result<f64> {
    if j >= i {
        return Err(LisError::Precondition(format!(
            "sensitivity estimator needs j < i, got j={j}, i={i}"
        )));
    }
    let lag = (i - j) as usize;
    let r = f.memory_depth();
    if lag > r {
        return Ok(0.0);
    }
    if let KernelFamily::Linear(l) = f.family_at(i) {
        // binary alphabet: VKR = d(0,1)·|Δp| and Δp = a_{-lag}·(ξ_j − η_j)
        return Ok(l.coefficients.get(lag - 1).copied().unwrap_or(0.0));
    }
    let alphabet = f.alphabet();
    let base = alphabet.size();
    f.caps().check(base, r)?;
    let pos = r - lag;
    let law = |past: &[usize]| -> Vec<f64> { (0..base).map(|x| f.probability(i, past, x)).collect() };
    let mut best = 0.0_f64;
    for past in ConfigIter::new(base, r) {
        let a = past[pos];
        let p = law(&past);
        let mut other = past.clone();
        for b in (a + 1)..base {
            other[pos] = b;
            let q = law(&other);
            let cost = transport_cost(&p, &q, |x, y| alphabet.distance(x, y));
            best = best.max(cost / alphabet.distance(a, b));
        }
    }
    Ok(best)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Provenance {
    VkrEstimator,
    UserSupplied,
}

/// Lag profiles `α(1..=R)`; `rows[n-1] = α_{i, i-n}`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum SensitivityRepr {
    Stationary(Vec<f64>),
    /// Per-site lag profiles with a stationary default elsewhere.
    Banded {
        default: Vec<f64>,
        rows: BTreeMap<i64, Vec<f64>>,
    },
}

/// Strictly lower-triangular non-negative matrix `α_ij`, nonzero only for
/// `1 ≤ i − j ≤ R`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SensitivityMatrix {
    repr: SensitivityRepr,
    depth: usize,
    provenance: Provenance,
    truncation_tail: f64,
}

fn check_profile(values: &[f64]) -> Result<()> {
    if values.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
        return Err(LisError::Precondition("sensitivity entries must be finite and >= 0".into()));
    }
    Ok(())
}

impl SensitivityMatrix {
    /// `α_ij = alpha[i − j − 1]` for `1 ≤ i − j ≤ alpha.len()`.
    pub fn stationary(alpha: Vec<f64>, provenance: Provenance) -> Result<Self> {
        check_profile(&alpha)?;
        Ok(SensitivityMatrix {
            depth: alpha.len(),
            repr: SensitivityRepr::Stationary(alpha),
            provenance,
            truncation_tail: 0.0,
        })
    }

    pub fn banded(default: Vec<f64>, rows: BTreeMap<i64, Vec<f64>>, provenance: Provenance) -> Result<Self> {
        check_profile(&default)?;
        rows.values().try_for_each(|r| check_profile(r))?;
        let depth = rows.values().map(Vec::len).fold(default.len(), usize::max);
        Ok(SensitivityMatrix {
            repr: SensitivityRepr::Banded { default, rows },
            depth,
            provenance,
            truncation_tail: 0.0,
        })
    }

    pub fn with_truncation_tail(mut self, tail: f64) -> Self {
        self.truncation_tail = tail;
        self
    }

    pub fn repr(&self) -> &SensitivityRepr {
        &self.repr
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn truncation_tail(&self) -> f64 {
        self.truncation_tail
    }

    pub fn is_stationary(&self) -> bool {
        matches!(self.repr, SensitivityRepr::Stationary(_))
    }

    /// Lag profile of row `i`.
    pub fn row(&self, i: i64) -> &[f64] {
        match &self.repr {
            SensitivityRepr::Stationary(a) => a,
            SensitivityRepr::Banded { default, rows } => rows.get(&i).unwrap_or(default),
        }
    }

    #[inline]
    pub fn alpha(&self, i: i64, j: i64) -> f64 {
        if j >= i {
            return 0.0;
        }
        let lag = (i - j) as usize;
        self.row(i).get(lag - 1).copied().unwrap_or(0.0)
    }

    pub fn row_sum(&self, i: i64) -> f64 {
        self.row(i).iter().sum()
    }

    /// `sup_i Σ_{j<i} α_ij`.
    pub fn sup_row_sum(&self) -> f64 {
        match &self.repr {
            SensitivityRepr::Stationary(a) => a.iter().sum(),
            SensitivityRepr::Banded { default, rows } => rows
                .values()
                .map(|r| r.iter().sum::<f64>())
                .fold(default.iter().sum(), f64::max),
        }
    }

    /// Same shape, every entry zero.
    pub fn zeroed(&self) -> Self {
        let zero = |v: &Vec<f64>| vec![0.0; v.len()];
        let repr = match &self.repr {
            SensitivityRepr::Stationary(a) => SensitivityRepr::Stationary(zero(a)),
            SensitivityRepr::Banded { default, rows } => SensitivityRepr::Banded {
                default: zero(default),
                rows: rows.iter().map(|(k, v)| (*k, zero(v))).collect(),
            },
        };
        SensitivityMatrix {
            repr,
            provenance: Provenance::UserSupplied,
            ..self.clone()
        }
    }

    /// Applies `g` to every lag profile.
    pub fn map_profiles(&self, mut g: impl FnMut(&[f64]) -> Vec<f64>) -> Result<Self> {
        let repr = match &self.repr {
            SensitivityRepr::Stationary(a) => SensitivityRepr::Stationary(g(a)),
            SensitivityRepr::Banded { default, rows } => SensitivityRepr::Banded {
                default: g(default),
                rows: rows.iter().map(|(k, v)| (*k, g(v))).collect(),
            },
        };
        match repr {
            SensitivityRepr::Stationary(a) => Self::stationary(a, Provenance::UserSupplied),
            SensitivityRepr::Banded { default, rows } => Self::banded(default, rows, Provenance::UserSupplied),
        }
        .map(|m| m.with_truncation_tail(self.truncation_tail))
    }
}

/// Transport estimators at every lag; banded over the override sites of a
/// site-indexed spec.
pub fn build_sensitivity_matrix(f: &KernelSpec) -> Result<SensitivityMatrix> {
    let r = f.memory_depth() as i64;
    let profile = |i: i64| -> Result<Vec<f64>> { (1..=r).map(|n| sensitivity_estimator(f, i, i - n)).collect() };
    let matrix = if f.is_stationary() {
        SensitivityMatrix::stationary(profile(0)?, Provenance::VkrEstimator)?
    } else {
        let free = *f.representative_sites().last().expect("at least one site");
        let rows = f
            .override_sites()
            .into_iter()
            .map(|i| profile(i).map(|p| (i, p)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        SensitivityMatrix::banded(profile(free)?, rows, Provenance::VkrEstimator)?
    };
    Ok(matrix.with_truncation_tail(f.truncation_tail()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Criterion {
    Dobrushin,
    BoundaryUniformity,
}

/// A criterion verdict with every quantity it was decided on.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CriterionVerdict {
    pub criterion: Criterion,
    pub satisfied: bool,
    /// `sup_i Σ_j α_ij`.
    pub row_sum_sup: Option<f64>,
    /// `1 − row_sum_sup`.
    pub margin: Option<f64>,
    /// Row sum plus the coefficient mass dropped by truncation.
    pub row_sum_with_tail: Option<f64>,
    /// `m(f)`, smallest conditional probability.
    pub min_probability: Option<f64>,
    /// `V(f)`, largest summed variation over the horizon.
    pub variation_sum: Option<f64>,
    /// Comparability constant `exp(−V/m)`.
    pub constant: Option<f64>,
    pub horizon: Option<usize>,
    pub memory_depth: usize,
    pub truncation_tail: f64,
    pub notes: Vec<String>,
}

/// Satisfied iff `sup_i Σ_{j<i} α_ij < 1` (strict).
pub fn dobrushin_check(alpha: &SensitivityMatrix) -> CriterionVerdict {
    let sum = alpha.sup_row_sum();
    let tail = alpha.truncation_tail();
    let mut notes = vec!["trivial partition into single sites".to_string()];
    if tail > 0.0 {
        notes.push(format!(
            "depth-{} truncation drops coefficient mass {tail:e}; row sum with tail {}",
            alpha.depth(),
            sum + tail
        ));
    }
    CriterionVerdict {
        criterion: Criterion::Dobrushin,
        satisfied: sum < 1.0,
        row_sum_sup: Some(sum),
        margin: Some(1.0 - sum),
        row_sum_with_tail: Some(sum + tail),
        min_probability: None,
        variation_sum: None,
        constant: None,
        horizon: None,
        memory_depth: alpha.depth(),
        truncation_tail: tail,
        notes,
    }
}

/// Smallest conditional probability of any symbol at site `i`.
fn min_probability_at(f: &KernelSpec, i: i64) -> Result<f64> {
    if let KernelFamily::Linear(l) = f.family_at(i) {
        let mass: f64 = l.coefficients.iter().sum();
        return Ok(l.intercept.min(1.0 - l.intercept - mass));
    }
    let base = f.alphabet().size();
    f.caps().check(base, f.memory_depth())?;
    let mut min = f64::INFINITY;
    for past in ConfigIter::new(base, f.memory_depth()) {
        for x in 0..base {
            min = min.min(f.probability(i, &past, x));
        }
    }
    Ok(min)
}

/// Uniform non-nullness plus summable variations over `horizon` sites.
///
/// `m(f)` is the smallest conditional probability; `V(f)` is
/// `sup_n Σ_{i=n..n+N} var_n(f_i)`. The reported constant `exp(−V/m)` is a
/// valid comparability constant, not necessarily the best one.
pub fn boundary_uniformity_check(f: &KernelSpec, horizon: usize) -> Result<CriterionVerdict> {
    let r = f.memory_depth();
    if horizon < r {
        return Err(LisError::Precondition(format!(
            "horizon {horizon} is shorter than the memory depth {r}"
        )));
    }
    let sites = f.representative_sites();
    let m = sites
        .iter()
        .map(|&i| min_probability_at(f, i))
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(f64::INFINITY, f64::min)
        .max(0.0);
    let span = horizon as i64;
    let starts: Vec<i64> = if f.is_stationary() {
        vec![0]
    } else {
        let first = sites[0] - span;
        let last = *sites.last().expect("non-empty");
        (first..=last).collect()
    };
    let mut v = 0.0_f64;
    for n in starts {
        let mut total = 0.0;
        for i in n..=n + span {
            total += variation(f, i, n)?;
        }
        v = v.max(total);
    }
    let tail = f.truncation_tail();
    let mut notes = Vec::new();
    if tail > 0.0 {
        notes.push(format!(
            "variations computed on the depth-{r} truncation; dropped coefficient mass {tail:e}"
        ));
    }
    let satisfied = m > 0.0 && v.is_finite();
    if m <= 0.0 {
        notes.push("some conditional probability vanishes: not uniformly non-null".into());
    }
    Ok(CriterionVerdict {
        criterion: Criterion::BoundaryUniformity,
        satisfied,
        row_sum_sup: None,
        margin: None,
        row_sum_with_tail: None,
        min_probability: Some(m),
        variation_sum: Some(v),
        constant: Some(if m > 0.0 { (-v / m).exp() } else { 0.0 }),
        horizon: Some(horizon),
        memory_depth: r,
        truncation_tail: tail,
        notes,
    })
}

/// Dobrushin ergodic coefficient `1 − min_{σ,ω} Σ_x f(x|σ) ∧ f(x|ω)` of a
/// stationary kernel with memory depth at most 1.
pub fn ergodic_coefficient(f: &KernelSpec) -> Result<f64> {
    if !f.is_stationary() || f.memory_depth() > 1 {
        return Err(LisError::Unsupported(
            "ergodic coefficient needs a stationary kernel of range at most 1".into(),
        ));
    }
    let base = f.alphabet().size();
    let r = f.memory_depth();
    let pasts: Vec<Vec<usize>> = ConfigIter::new(base, r).collect();
    let mut min_overlap = f64::INFINITY;
    for a in &pasts {
        for b in &pasts {
            let overlap: f64 = (0..base)
                .map(|x| f.probability(0, a, x).min(f.probability(0, b, x)))
                .sum();
            min_overlap = min_overlap.min(overlap);
        }
    }
    Ok((1.0 - min_overlap).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::PowerLawNormalization;
    use crate::space::Alphabet;

    fn k1() -> KernelSpec {
        KernelSpec::binary_markov(0.3, 0.7).unwrap()
    }

    fn k3() -> KernelSpec {
        KernelSpec::iid(Alphabet::binary(), vec![0.5, 0.5]).unwrap()
    }

    #[test]
    fn markov_variations() {
        assert!((variation(&k1(), 5, 5).unwrap() - 0.4).abs() < 1e-15);
        assert_eq!(variation(&k1(), 5, 4).unwrap(), 0.0);
        assert_eq!(variation(&k1(), 5, 1).unwrap(), 0.0);
        assert!(variation(&k1(), 1, 5).is_err());
    }

    #[test]
    fn markov_estimators() {
        assert!((sensitivity_estimator(&k1(), 1, 0).unwrap() - 0.4).abs() < 1e-15);
        assert_eq!(sensitivity_estimator(&k1(), 2, 0).unwrap(), 0.0);
        assert!(sensitivity_estimator(&k1(), 0, 0).is_err());
    }

    #[test]
    fn power_law_estimators_are_coefficients() {
        let f = KernelSpec::power_law(0.5, 4, PowerLawNormalization::Infinite, 0.0).unwrap();
        let KernelFamily::Linear(l) = f.family().clone() else { panic!() };
        let alpha = build_sensitivity_matrix(&f).unwrap();
        assert_eq!(alpha.row(0), &l.coefficients[..]);
        // enumeration through the equivalent table agrees
        let table = build_sensitivity_matrix(&f.to_table().unwrap()).unwrap();
        for (a, b) in alpha.row(0).iter().zip(table.row(0)) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn dobrushin_verdicts() {
        let v = dobrushin_check(&build_sensitivity_matrix(&k1()).unwrap());
        assert!(v.satisfied);
        assert!((v.row_sum_sup.unwrap() - 0.4).abs() < 1e-15);

        let boundary = SensitivityMatrix::stationary(vec![1.0], Provenance::UserSupplied).unwrap();
        assert!(!dobrushin_check(&boundary).satisfied);

        let zero = build_sensitivity_matrix(&k3()).unwrap();
        assert_eq!(zero.sup_row_sum(), 0.0);
    }

    #[test]
    fn power_law_truncated_dobrushin() {
        let f = KernelSpec::power_law(0.5, 4, PowerLawNormalization::Infinite, 0.0).unwrap();
        let v = dobrushin_check(&build_sensitivity_matrix(&f).unwrap());
        assert!(v.satisfied);
        assert!(v.row_sum_sup.unwrap() < 0.5);
        assert!(v.truncation_tail > 0.0);
        assert!((v.row_sum_with_tail.unwrap() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn boundary_uniformity_markov() {
        let v = boundary_uniformity_check(&k1(), 1).unwrap();
        assert!(v.satisfied);
        assert!((v.min_probability.unwrap() - 0.3).abs() < 1e-15);
        assert!((v.variation_sum.unwrap() - 0.4).abs() < 1e-15);
        assert!((v.constant.unwrap() - (-4.0_f64 / 3.0).exp()).abs() < 1e-12);

        let v = boundary_uniformity_check(&k3(), 0).unwrap();
        assert_eq!(v.min_probability, Some(0.5));
        assert_eq!(v.variation_sum, Some(0.0));
        assert_eq!(v.constant, Some(1.0));

        let zero = KernelSpec::binary_markov(0.0, 0.7).unwrap();
        let v = boundary_uniformity_check(&zero, 1).unwrap();
        assert!(!v.satisfied);
        assert_eq!(v.min_probability, Some(0.0));

        assert!(boundary_uniformity_check(&k1(), 0).is_err());
    }

    #[test]
    fn ergodic_coefficients() {
        assert!((ergodic_coefficient(&k1()).unwrap() - 0.4).abs() < 1e-15);
        assert_eq!(ergodic_coefficient(&k3()).unwrap(), 0.0);
        let flip = KernelSpec::binary_markov(1.0, 0.0).unwrap();
        assert_eq!(ergodic_coefficient(&flip).unwrap(), 1.0);
        let deep = KernelSpec::power_law(0.5, 2, PowerLawNormalization::Truncated, 0.0).unwrap();
        assert!(ergodic_coefficient(&deep).is_err());
    }
}

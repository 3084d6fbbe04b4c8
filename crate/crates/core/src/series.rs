//! Power sums `Σ k^{-s}` used by the power-law kernel family.

/// `Σ_{k > n} k^{-s}` for `s > 1`, by direct summation up to a cutoff and an
/// Euler–Maclaurin remainder beyond it. Relative error is below 1e-14 for
/// `s ≥ 1.01`.
pub fn power_tail(s: f64, n: usize) -> f64 {
    assert!(s > 1.0, "power_tail needs s > 1");
    let cutoff = n.max(64) + 1;
    let head: f64 = ((n + 1)..cutoff).map(|k| (k as f64).powf(-s)).sum();
    head + euler_maclaurin_from(s, cutoff as f64)
}

/// `ζ(s) = Σ_{k ≥ 1} k^{-s}`.
pub fn zeta(s: f64) -> f64 {
    power_tail(s, 0)
}

/// `Σ_{k ≥ n} k^{-s}`.
fn euler_maclaurin_from(s: f64, n: f64) -> f64 {
    // B2/2!, B4/4!, B6/6!, B8/8!, B10/10!
    const COEFFS: [f64; 5] = [
        1.0 / 12.0,
        -1.0 / 720.0,
        1.0 / 30240.0,
        -1.0 / 1209600.0,
        1.0 / 47900160.0,
    ];
    let mut total = n.powf(1.0 - s) / (s - 1.0) + 0.5 * n.powf(-s);
    // rising factorial s(s+1)...(s+2j-2)
    let mut rising = s;
    let mut power = n.powf(-s - 1.0);
    for (j, c) in COEFFS.iter().enumerate() {
        total += c * rising * power;
        let k = 2.0 * j as f64;
        rising *= (s + k + 1.0) * (s + k + 2.0);
        power /= n * n;
    }
    total
}

/// `Σ_{k=1..n} k^{-s}`.
pub fn power_sum(s: f64, n: usize) -> f64 {
    (1..=n).map(|k| (k as f64).powf(-s)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zeta_two() {
        let pi2_6 = std::f64::consts::PI.powi(2) / 6.0;
        assert!((zeta(2.0) - pi2_6).abs() < 1e-14);
    }

    #[test]
    fn zeta_three_halves() {
        // ζ(3/2) = 2.612375348685488...
        assert!((zeta(1.5) - 2.612_375_348_685_488).abs() < 1e-13);
    }

    #[test]
    fn tail_plus_head_is_zeta() {
        for &s in &[1.25, 1.5, 1.75] {
            for n in [1, 4, 64, 200] {
                let lhs = power_sum(s, n) + power_tail(s, n);
                assert!((lhs - zeta(s)).abs() < 1e-12, "s={s} n={n}");
            }
        }
    }
}

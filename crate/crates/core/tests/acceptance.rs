//! Acceptance gate: twelve criteria, one PASS/FAIL line each.
//!
//! Runs as a plain binary (`harness = false`) so the lines always reach the
//! terminal; the process exits non-zero if any criterion fails.

use std::panic::{self, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use lis_core::analysis::{
    boundary_uniformity_check, build_sensitivity_matrix, dobrushin_check, ergodic_coefficient,
    transport::transport_cost_by_vertices, vkr_distance, Provenance, SensitivityMatrix,
};
use lis_core::bounds::{
    comparison_bound, correlation_bound, fit_decay_rate, memory_bound_general, series_decay_bound,
    DecayFamily,
};
use lis_core::kernels::{verify_consistency, verify_factorization, KernelFamily};
use lis_core::oracle::{
    exact_correlation, exact_oscillation_of_average, min_boundary_ratio, stationary_measure,
    verify_dusting,
};
use lis_core::random::{random_metric, random_observable, random_probabilities, random_table_kernel};
use lis_core::sim::{estimate_correlation, sample_path};
use lis_core::{
    Alphabet, Caps, FiniteDistribution, KernelSpec, Observable, PastConfig, PowerLawNormalization,
    Window,
};

type Outcome = Result<String, String>;

fn k1() -> KernelSpec {
    KernelSpec::binary_markov(0.3, 0.7).unwrap()
}

fn k2() -> KernelSpec {
    KernelSpec::power_law(0.5, 4, PowerLawNormalization::Truncated, 0.0).unwrap()
}

fn k3() -> KernelSpec {
    KernelSpec::iid(Alphabet::binary(), vec![0.5, 0.5]).unwrap()
}

fn ind(site: i64, symbol: usize, alphabet: &Alphabet) -> Observable {
    Observable::indicator(site, symbol, alphabet).unwrap()
}

fn alphabet_of(size: usize, rng: &mut ChaCha8Rng, metric: bool) -> Alphabet {
    let symbols: Vec<String> = (0..size).map(|i| format!("s{i}")).collect();
    if metric {
        Alphabet::with_metric(symbols, &random_metric(size, rng)).unwrap()
    } else {
        Alphabet::discrete(symbols).unwrap()
    }
}

/// Random table kernels with `|E| ≤ 3`, `R ≤ 2`; every other one carries a
/// random metric.
fn random_kernels(count: usize, seed: u64) -> Vec<KernelSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let size = rng.gen_range(2..=3);
            let depth = rng.gen_range(0..=2);
            let e = alphabet_of(size, &mut rng, i % 2 == 1);
            random_table_kernel(&e, depth, 0.2, &mut rng).unwrap()
        })
        .collect()
}

fn case_matrix() -> Vec<(String, KernelSpec)> {
    let mut cases = vec![
        ("K1".to_string(), k1()),
        ("K2".to_string(), k2()),
        ("K3".to_string(), k3()),
    ];
    for (i, f) in random_kernels(20, 2024).into_iter().enumerate() {
        cases.push((format!("random#{i}"), f));
    }
    cases
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn c1_consistency() -> Outcome {
    let mut worst = 0.0_f64;
    let mut pairs = 0;
    for (name, f) in case_matrix() {
        for len in 1..=4 {
            let outer = Window::new(0, len - 1).unwrap();
            for lo in 0..len {
                for hi in lo..len {
                    let inner = Window::new(lo, hi).unwrap();
                    let r = verify_consistency(&f, outer, inner, 100, 1e-12, 17).map_err(|e| e.to_string())?;
                    ensure(r.passed, || format!("{name} {outer:?} ⊃ {inner:?}: residual {:e}", r.max_residual))?;
                    worst = worst.max(r.max_residual);
                    pairs += 1;
                }
            }
        }
    }
    Ok(format!("{pairs} nested pairs x 100 observables, max residual {worst:.2e}"))
}

fn c2_factorization() -> Outcome {
    let mut worst = 0.0_f64;
    let mut splits = 0;
    for (name, f) in case_matrix() {
        for len in 2..=4 {
            let w = Window::new(0, len - 1).unwrap();
            let r = verify_factorization(&f, w, 100, 1e-12, 23).map_err(|e| e.to_string())?;
            ensure(r.passed, || format!("{name} {w:?}: residual {:e}", r.max_residual))?;
            worst = worst.max(r.max_residual);
            splits += r.splits;
        }
    }
    Ok(format!("{splits} split points x 100 observables, max residual {worst:.2e}"))
}

fn c3_dusting() -> Outcome {
    let mut checks = 0;
    let mut worst = f64::INFINITY;
    let mut kernels = vec![k1(), k2(), k3()];
    kernels.extend(random_kernels(12, 77));
    let mut seed = 0;
    while checks < 1000 {
        for f in &kernels {
            for v in [Window::single(0), Window::new(0, 1).unwrap()] {
                seed += 1;
                let alpha = build_sensitivity_matrix(f).map_err(|e| e.to_string())?;
                let r = verify_dusting(f, v, &alpha, 12, seed).map_err(|e| e.to_string())?;
                ensure(r.passed, || format!("{:?} on {v:?}: {} violations", f.label(), r.violations))?;
                checks += r.checks;
                worst = worst.min(r.worst_slack);
            }
        }
    }
    let control = verify_dusting(&k1(), Window::single(0), &build_sensitivity_matrix(&k1()).unwrap().zeroed(), 200, 5)
        .map_err(|e| e.to_string())?;
    ensure(control.violations >= 1, || "zeroed sensitivities produced no violation".into())?;
    Ok(format!(
        "{checks} instances, 0 violations, worst slack {worst:.3e}; zeroed control: {} violations",
        control.violations
    ))
}

fn c4_loss_of_memory() -> Outcome {
    let e = Alphabet::binary();
    let alpha = build_sensitivity_matrix(&k1()).map_err(|x| x.to_string())?;
    let mut instances = 0;
    for n in 0..=8 {
        let w = Window::new(0, n).unwrap();
        for site in 0..=n {
            for symbol in 0..2 {
                let h = ind(site, symbol, &e);
                let exact = exact_oscillation_of_average(&k1(), w, &h, -1).map_err(|x| x.to_string())?;
                let bound = memory_bound_general(&alpha, w, &h, -1).map_err(|x| x.to_string())?;
                ensure(exact <= bound + 1e-12, || format!("K1 n={n} site={site}: {exact} > {bound}"))?;
                if site == n {
                    let want = 0.4_f64.powi(n as i32 + 1);
                    ensure((exact - want).abs() < 1e-12, || format!("K1 n={n}: exact {exact} vs {want}"))?;
                }
                instances += 1;
            }
        }
    }
    let mut kernels = vec![k2()];
    kernels.extend(random_kernels(10, 404));
    let mut worst = f64::INFINITY;
    for (i, f) in kernels.iter().enumerate() {
        let alpha = build_sensitivity_matrix(f).map_err(|x| x.to_string())?;
        let slacks: Vec<f64> = (0..200u64)
            .into_par_iter()
            .map(|t| {
                let mut rng = lis_core::random::trial_rng(900 + i as u64, t);
                let lo = rng.gen_range(0..=2);
                let w = Window::new(lo, lo + rng.gen_range(0..=2)).unwrap();
                let h = random_observable(w, f.alphabet(), f.caps(), &mut rng).unwrap();
                let j = w.lo() - rng.gen_range(1..=f.memory_depth().max(1) as i64 + 1);
                let exact = exact_oscillation_of_average(f, w, &h, j).unwrap();
                let bound = memory_bound_general(&alpha, w, &h, j).unwrap();
                bound - exact
            })
            .collect();
        let min = slacks.iter().copied().fold(f64::INFINITY, f64::min);
        ensure(min >= -1e-12, || format!("kernel {i}: slack {min:e}"))?;
        worst = worst.min(min);
        instances += slacks.len();
    }
    Ok(format!("{instances} instances, min slack {worst:.3e}"))
}

fn c5_markov_remark() -> Outcome {
    let f = k1();
    let gamma = ergodic_coefficient(&f).map_err(|x| x.to_string())?;
    ensure((gamma - 0.4).abs() < 1e-15, || format!("ergodic coefficient {gamma}"))?;
    let e = Alphabet::binary();
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let mut worst = f64::INFINITY;
    for n in 1..=10 {
        let w = Window::new(0, n).unwrap();
        let mut observables = vec![ind(n, 1, &e)];
        for _ in 0..5 {
            observables.push(random_observable(Window::single(n), &e, &Caps::default(), &mut rng).unwrap());
        }
        for h in observables {
            let lhs = exact_oscillation_of_average(&f, w, &h, -1).map_err(|x| x.to_string())?;
            let rhs = gamma.powi(n as i32) * h.oscillation(n);
            ensure(lhs <= rhs + 1e-12, || format!("n={n}: {lhs} > {rhs}"))?;
            worst = worst.min(rhs - lhs);
        }
    }
    Ok(format!("gamma = {gamma}, n = 1..10, min slack {worst:.3e}"))
}

/// `Σ_{k≥1} k^{-s}` by brute summation to 4·10⁶ plus the integral tail.
fn slow_zeta(s: f64) -> f64 {
    let n = 4_000_000u64;
    let head: f64 = (1..=n).rev().map(|k| (k as f64).powf(-s)).sum();
    let x = n as f64;
    head + x.powf(1.0 - s) / (s - 1.0) - 0.5 * x.powf(-s) + s / 12.0 * x.powf(-s - 1.0)
}

fn c6_power_law() -> Outcome {
    let mut lines = Vec::new();
    for eps in [0.25, 0.5, 0.75] {
        let f = KernelSpec::power_law(eps, 64, PowerLawNormalization::Infinite, 0.0).map_err(|x| x.to_string())?;
        let KernelFamily::Linear(l) = f.family() else {
            return Err("power-law kernel is not linear".into());
        };
        let alpha = build_sensitivity_matrix(&f).map_err(|x| x.to_string())?;
        ensure(alpha.row(0) == &l.coefficients[..], || format!("eps={eps}: alpha differs from coefficients"))?;
        let m = slow_zeta(1.0 + eps);
        for (k, a) in alpha.row(0).iter().enumerate() {
            let want = (1.0 - eps) / (m * ((k + 1) as f64).powf(1.0 + eps));
            ensure((a - want).abs() <= 1e-12 * want.max(1e-3), || format!("eps={eps} k={}: {a} vs {want}", k + 1))?;
        }
        let verdict = dobrushin_check(&alpha);
        let sum = verdict.row_sum_sup.unwrap();
        let partial: f64 = (1..=64).map(|k| (k as f64).powf(-1.0 - eps)).sum();
        let want_sum = (1.0 - eps) * partial / m;
        ensure(verdict.satisfied, || format!("eps={eps}: Dobrushin failed, sum {sum}"))?;
        ensure(sum < 1.0 - eps + 1e-12, || format!("eps={eps}: sum {sum} >= 1 - eps"))?;
        ensure((sum - want_sum).abs() < 1e-9, || format!("eps={eps}: sum {sum} vs {want_sum}"))?;
        let tail = (1.0 - eps) / m * (m - partial);
        ensure((verdict.truncation_tail - tail).abs() < 1e-9, || {
            format!("eps={eps}: tail {} vs {tail}", verdict.truncation_tail)
        })?;
        let uniformity = boundary_uniformity_check(&f, 64).map_err(|x| x.to_string())?;
        lines.push(format!(
            "eps={eps}: sum {sum:.12} tail {:.3e} (uniform non-null: {})",
            verdict.truncation_tail, uniformity.satisfied
        ));
    }
    Ok(lines.join("; "))
}

fn c7_boundary_uniformity() -> Outcome {
    let v = boundary_uniformity_check(&k1(), 1).map_err(|x| x.to_string())?;
    let c_want = (-4.0_f64 / 3.0).exp();
    let (m, var, c) = (v.min_probability.unwrap(), v.variation_sum.unwrap(), v.constant.unwrap());
    ensure((m - 0.3).abs() < 1e-12 && (var - 0.4).abs() < 1e-12 && (c - c_want).abs() < 1e-12, || {
        format!("m={m} V={var} c={c}")
    })?;
    let mut ratio = f64::INFINITY;
    for lo in -2..=2 {
        for len in 1..=5 {
            let w = Window::new(lo, lo + len - 1).unwrap();
            ratio = ratio.min(min_boundary_ratio(&k1(), w).map_err(|x| x.to_string())?);
        }
    }
    ensure(ratio >= c, || format!("ratio {ratio} < c {c}"))?;
    Ok(format!("m={m}, V={var}, c={c:.15}, min ratio over windows {ratio:.6}"))
}

fn c8_vkr() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst_tv = 0.0_f64;
    for _ in 0..1000 {
        let n = rng.gen_range(2..=6);
        let e = alphabet_of(n, &mut rng, false);
        let p = FiniteDistribution::new(random_probabilities(n, 0.0, &mut rng)).unwrap();
        let q = FiniteDistribution::new(random_probabilities(n, 0.0, &mut rng)).unwrap();
        let half_l1: f64 = 0.5 * p.weights().iter().zip(q.weights()).map(|(a, b)| (a - b).abs()).sum::<f64>();
        worst_tv = worst_tv.max((vkr_distance(&p, &q, &e) - half_l1).abs());
    }
    ensure(worst_tv <= 1e-12, || format!("discrete metric error {worst_tv:e}"))?;
    let mut worst_metric = 0.0_f64;
    for t in 0..500 {
        let n = 2 + t % 2;
        let e = alphabet_of(n, &mut rng, true);
        let p = random_probabilities(n, 0.0, &mut rng);
        let q = random_probabilities(n, 0.0, &mut rng);
        let exact = transport_cost_by_vertices(&p, &q, |x, y| e.distance(x, y));
        let fast = vkr_distance(&FiniteDistribution::new(p).unwrap(), &FiniteDistribution::new(q).unwrap(), &e);
        worst_metric = worst_metric.max((exact - fast).abs());
    }
    ensure(worst_metric <= 1e-9, || format!("general metric error {worst_metric:e}"))?;
    Ok(format!("half-L1 max error {worst_tv:.2e}; coupling enumeration max error {worst_metric:.2e}"))
}

fn c9_correlation() -> Outcome {
    let mut kernels = vec![k1()];
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    while kernels.len() < 11 {
        let n = rng.gen_range(2..=3);
        let e = alphabet_of(n, &mut rng, kernels.len() % 2 == 0);
        let f = random_table_kernel(&e, 1, 0.3, &mut rng).unwrap();
        if build_sensitivity_matrix(&f).unwrap().sup_row_sum() < 1.0 {
            kernels.push(f);
        }
    }
    let e = Alphabet::binary();
    let k1_lag3 = exact_correlation(&k1(), &ind(0, 1, &e), &ind(0, 1, &e), 3).map_err(|x| x.to_string())?;
    ensure((k1_lag3 - 0.016).abs() < 1e-12, || format!("K1 lag 3 exact {k1_lag3}"))?;
    let mut worst = f64::INFINITY;
    let mut count = 0;
    for (i, f) in kernels.iter().enumerate() {
        let alpha = build_sensitivity_matrix(f).map_err(|x| x.to_string())?;
        let mut observables: Vec<Observable> = (0..f.alphabet().size()).map(|s| ind(0, s, f.alphabet())).collect();
        observables.push(random_observable(Window::single(0), f.alphabet(), f.caps(), &mut rng).unwrap());
        for lag in 1..=8 {
            for h2 in &observables {
                for h1 in &observables {
                    let exact = exact_correlation(f, h1, h2, lag).map_err(|x| x.to_string())?;
                    let bound = correlation_bound(
                        &alpha,
                        Window::single(lag),
                        Window::single(0),
                        &h1.shifted(lag),
                        h2,
                        f.alphabet().diameter(),
                    )
                    .map_err(|x| x.to_string())?
                    .value;
                    ensure(exact <= bound + 1e-12, || format!("kernel {i} lag {lag}: exact {exact} > bound {bound}"))?;
                    worst = worst.min(bound - exact);
                    count += 1;
                }
            }
        }
    }
    Ok(format!("K1 lag-3 exact {k1_lag3:.15}; {count} (kernel, lag, h1, h2) cases, min slack {worst:.3e}"))
}

fn c10_comparison() -> Outcome {
    let e = Alphabet::binary();
    let f = k1();
    let mu = stationary_measure(&f).map_err(|x| x.to_string())?;
    let shifts = [(0.01, 0.0), (0.0, -0.03), (0.05, 0.05), (-0.05, 0.02), (0.02, -0.04)];
    let mut worst = f64::INFINITY;
    for (d01, d11) in shifts {
        let g = KernelSpec::binary_markov(0.3 + d01, 0.7 + d11).map_err(|x| x.to_string())?;
        let nu = stationary_measure(&g).map_err(|x| x.to_string())?;
        for symbol in 0..2 {
            let h = ind(0, symbol, &e);
            let gap = (mu.expectation(&f, &h).unwrap() - nu.expectation(&g, &h).unwrap()).abs();
            let bound = comparison_bound(&f, &g, Window::single(0), &h).map_err(|x| x.to_string())?.value;
            ensure(gap <= bound + 1e-12, || format!("shift ({d01},{d11}) symbol {symbol}: gap {gap} > {bound}"))?;
            worst = worst.min(bound - gap);
        }
    }
    Ok(format!("5 perturbations x 2 indicators, min slack {worst:.3e}"))
}

fn c11_simulation() -> Outcome {
    let f = k1();
    let e = Alphabet::binary();
    let mu = stationary_measure(&f).map_err(|x| x.to_string())?;
    let h = ind(0, 1, &e);
    let exact: Vec<f64> = (1..=5).map(|n| mu.covariance(&f, &h, &h.shifted(n)).unwrap()).collect();
    let runs: Vec<bool> = (1..=20u64)
        .into_par_iter()
        .map(|seed| {
            let path = sample_path(&f, 1_000_000, seed, &PastConfig::constant(0, 1)).unwrap();
            (1..=5).all(|n| {
                let c = estimate_correlation(&path, &h, &h, n, 100).unwrap();
                (c.estimate - exact[n as usize - 1]).abs() <= 3.0 * c.standard_error
            })
        })
        .collect();
    let good = runs.iter().filter(|r| **r).count();
    ensure(good >= 19, || format!("only {good}/20 runs within 3 SE"))?;
    Ok(format!("{good}/20 runs with all lags 1..5 within 3 SE"))
}

/// `Σ_{l=1..|Λ|} (P_Λ α)^l` by dense matrix powers over `[l_Λ − R, m_Λ]`.
fn dense_neumann(alpha: &SensitivityMatrix, window: Window) -> (i64, Vec<Vec<f64>>) {
    let first = window.lo() - alpha.depth() as i64;
    let size = (window.hi() - first + 1) as usize;
    let step: Vec<Vec<f64>> = (0..size)
        .map(|k| {
            let site = first + k as i64;
            (0..size)
                .map(|j| if window.contains(site) { alpha.alpha(site, first + j as i64) } else { 0.0 })
                .collect()
        })
        .collect();
    let mut power = step.clone();
    let mut total = step.clone();
    for _ in 1..window.len() {
        power = (0..size)
            .map(|k| (0..size).map(|j| (0..size).map(|s| power[k][s] * step[s][j]).sum()).collect())
            .collect();
        for k in 0..size {
            for j in 0..size {
                total[k][j] += power[k][j];
            }
        }
    }
    (first, total)
}

fn c12_series_decay() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut violations = 0;
    let mut entries = 0;
    for _ in 0..100 {
        let depth = rng.gen_range(1..=4);
        let mass = rng.gen_range(0.05..0.95);
        let raw: Vec<f64> = (0..depth).map(|_| rng.gen::<f64>()).collect();
        let total: f64 = raw.iter().sum();
        let alpha = SensitivityMatrix::stationary(raw.iter().map(|r| mass * r / total).collect(), Provenance::UserSupplied)
            .unwrap();
        let fitted = fit_decay_rate(&alpha, DecayFamily::Exponential).map_err(|x| x.to_string())?;
        let window = Window::new(0, 7).unwrap();
        let (first, dense) = dense_neumann(&alpha, window);
        for decay in [fitted, lis_core::bounds::DecaySpec::exponential(fitted.rate / 2.0).unwrap()] {
            let report = series_decay_bound(&alpha, &decay, window).map_err(|x| x.to_string())?;
            violations += report.violations;
            let factor = report.gamma / (1.0 - report.gamma);
            for k in window.sites() {
                for j in first..k {
                    let lhs = dense[(k - first) as usize][(j - first) as usize];
                    if lhs > factor * (-decay.exponent(k, j)).exp() * (1.0 + 1e-12) {
                        violations += 1;
                    }
                    entries += 1;
                }
            }
        }
    }
    ensure(violations == 0, || format!("{violations} violations"))?;
    Ok(format!("100 matrices, {entries} entries at fitted and half-fitted rates, 0 violations"))
}

type Criterion = (&'static str, fn() -> Outcome, Option<Duration>);

fn main() {
    let criteria: [Criterion; 12] = [
        ("1 consistency", c1_consistency, Some(Duration::from_secs(30))),
        ("2 factorization", c2_factorization, None),
        ("3 dusting inequality", c3_dusting, None),
        ("4 loss-of-memory soundness", c4_loss_of_memory, Some(Duration::from_secs(60))),
        ("5 Markov contraction", c5_markov_remark, None),
        ("6 power-law example", c6_power_law, None),
        ("7 boundary uniformity", c7_boundary_uniformity, None),
        ("8 VKR correctness", c8_vkr, None),
        ("9 correlation bound", c9_correlation, None),
        ("10 comparison bound", c10_comparison, None),
        ("11 simulation concordance", c11_simulation, Some(Duration::from_secs(60))),
        ("12 Neumann decay", c12_series_decay, None),
    ];
    let mut failed = 0;
    for (name, run, limit) in criteria {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(run))
            .unwrap_or_else(|p| Err(format!("panic: {:?}", p.downcast_ref::<String>().cloned().unwrap_or_default())));
        let elapsed = start.elapsed();
        let outcome = match (outcome, limit) {
            (Ok(_), Some(l)) if elapsed > l => Err(format!("took {elapsed:.1?}, limit {l:?}")),
            (o, _) => o,
        };
        match outcome {
            Ok(detail) => println!("criterion {name}: PASS ({elapsed:.2?}) {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {name}: FAIL ({elapsed:.2?}) {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 12 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

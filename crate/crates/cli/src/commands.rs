//! The four batch commands. Each returns a report and whether it passed.

use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use serde::Serialize;

use lis_core::analysis::{
    boundary_uniformity_check, build_sensitivity_matrix, dobrushin_check, ergodic_coefficient, CriterionVerdict,
    SensitivityMatrix,
};
use lis_core::bounds::{
    comparison_bound, correlation_bound, fit_decay_rate, memory_bound_exponential, memory_bound_general,
    DecayFamily, DecaySpec, SERIES_TOLERANCE,
};
use lis_core::kernels::{verify_consistency, verify_factorization};
use lis_core::oracle::{exact_oscillation_of_average, stationary_measure, verify_dusting, DUSTING_TOLERANCE};
use lis_core::random::{random_observable, trial_rng};
use lis_core::sim::{default_burn_in, estimate_correlation, sample_path, BATCHES};
use lis_core::{Caps, KernelSpec, Observable, PastConfig, Window};

use crate::input::{resolve, symbol_index, ExampleArgs, LoadedKernel};
use crate::report::{emit, to_json, Cell, Report, Table};

/// Residual allowed on identities and on `exact ≤ bound` comparisons.
pub const CHECK_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Debug, Args)]
pub struct CommonArgs {
    /// Kernel spec JSON file.
    pub spec: Option<PathBuf>,
    #[command(flatten)]
    pub example: ExampleArgs,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Largest number of configurations any exhaustive enumeration may visit.
    #[arg(long, default_value_t = Caps::default().max_configs)]
    pub max_configs: usize,
    /// Accept kernels whose rows do not sum to one.
    #[arg(long)]
    pub no_validate: bool,
}

impl CommonArgs {
    fn load(&self) -> Result<LoadedKernel> {
        resolve(
            self.spec.as_deref(),
            &self.example,
            !self.no_validate,
            Caps::new(self.max_configs),
        )
    }
}

pub struct Outcome {
    pub passed: bool,
}

struct Envelope<'a> {
    command: &'a str,
    loaded: &'a LoadedKernel,
    threads: usize,
    tolerances: BTreeMap<&'static str, f64>,
    seeds: BTreeMap<&'static str, u64>,
}

impl Envelope<'_> {
    fn finish<T: Serialize>(self, common: &CommonArgs, passed: bool, result: T) -> Result<Outcome> {
        let f = &self.loaded.kernel;
        let report = Report {
            command: self.command.to_string(),
            version: lis_core::VERSION,
            source: self.loaded.source.clone(),
            spec_sha256: self.loaded.sha256.clone(),
            label: f.label().map(str::to_string),
            memory_depth: f.memory_depth(),
            alphabet: f.alphabet().symbols().to_vec(),
            caps: *f.caps(),
            tolerances: self.tolerances,
            seeds: self.seeds,
            threads: self.threads,
            passed,
            result,
        };
        emit(common.out.as_deref(), &to_json(&report)?)?;
        Ok(Outcome { passed })
    }
}

fn write_csv(path: Option<&PathBuf>, table: &Table) -> Result<()> {
    if let Some(p) = path {
        crate::report::write_atomic(p, &table.to_csv())?;
    }
    Ok(())
}

// ---------------------------------------------------------------- check

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum CriterionChoice {
    Dobrushin,
    BoundaryUniformity,
    /// Pass if either criterion holds.
    Any,
}

#[derive(Clone, Debug, Args)]
pub struct CheckArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_enum, default_value_t = CriterionChoice::Any)]
    pub criterion: CriterionChoice,
    /// Number of sites summed in the variation sum; defaults to the memory depth.
    #[arg(long)]
    pub horizon: Option<usize>,
}

#[derive(Serialize)]
struct CheckResult {
    criterion: String,
    dobrushin: CriterionVerdict,
    sensitivity_profile: Option<Vec<f64>>,
    boundary_uniformity: Option<CriterionVerdict>,
    boundary_uniformity_error: Option<String>,
    ergodic_coefficient: Option<f64>,
    truncation_tail: f64,
}

pub fn check(args: &CheckArgs, threads: usize) -> Result<Outcome> {
    let loaded = args.common.load()?;
    let f = &loaded.kernel;
    let alpha = build_sensitivity_matrix(f)?;
    let dobrushin = dobrushin_check(&alpha);
    let horizon = args.horizon.unwrap_or(f.memory_depth());
    let (boundary, boundary_error) = match boundary_uniformity_check(f, horizon) {
        Ok(v) => (Some(v), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let passed = match args.criterion {
        CriterionChoice::Dobrushin => dobrushin.satisfied,
        CriterionChoice::BoundaryUniformity => match &boundary {
            Some(v) => v.satisfied,
            None => bail!("boundary-uniformity check failed: {}", boundary_error.unwrap_or_default()),
        },
        CriterionChoice::Any => dobrushin.satisfied || boundary.as_ref().is_some_and(|v| v.satisfied),
    };
    let result = CheckResult {
        criterion: format!("{:?}", args.criterion),
        sensitivity_profile: alpha.is_stationary().then(|| alpha.row(0).to_vec()),
        dobrushin,
        boundary_uniformity: boundary,
        boundary_uniformity_error: boundary_error,
        ergodic_coefficient: ergodic_coefficient(f).ok(),
        truncation_tail: f.truncation_tail(),
    };
    let envelope = Envelope {
        command: "check",
        loaded: &loaded,
        threads,
        tolerances: BTreeMap::new(),
        seeds: BTreeMap::new(),
    };
    envelope.finish(&args.common, passed, result)
}

// ---------------------------------------------------------------- bound

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum BoundKind {
    Memory,
    Correlation,
    Compare,
}

#[derive(Clone, Debug, Args)]
pub struct BoundArgs {
    #[arg(value_enum)]
    pub kind: BoundKind,
    #[command(flatten)]
    pub common: CommonArgs,
    /// Compare against the exact oracle value where enumeration fits the caps.
    #[arg(long)]
    pub verify: bool,
    /// Symbol of the indicator observables (label or index); defaults to the last symbol.
    #[arg(long)]
    pub symbol: Option<String>,
    /// Memory: largest `n` in the sweep over windows `[0, n]`.
    #[arg(long, default_value_t = 8)]
    pub sweep: usize,
    /// Memory: past site whose influence is bounded.
    #[arg(long, default_value_t = -1, allow_hyphen_values = true)]
    pub j: i64,
    /// Correlation: largest lag in the sweep.
    #[arg(long, default_value_t = 8)]
    pub lags: i64,
    /// Correlation: path length for an empirical column; 0 disables it.
    #[arg(long, default_value_t = 0)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Correlation: burn-in for the empirical column.
    #[arg(long)]
    pub burn_in: Option<usize>,
    /// Compare: spec of the second kernel.
    #[arg(long)]
    pub against: Option<PathBuf>,
    /// Also write the sweep table as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Serialize)]
struct BoundResult {
    kind: String,
    observable: String,
    table: Table,
    violations: usize,
    worst_slack: Option<f64>,
    notes: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    decay_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_kernel_distance: Option<f64>,
}

#[derive(Default)]
struct SlackTally {
    violations: usize,
    worst: Option<f64>,
}

impl SlackTally {
    fn add(&mut self, bound: f64, exact: f64) -> f64 {
        let slack = bound - exact;
        if slack < -CHECK_TOLERANCE {
            self.violations += 1;
        }
        self.worst = Some(self.worst.map_or(slack, |w: f64| w.min(slack)));
        slack
    }
}

/// Smallest exponential-form bound over rates `k/64` of the largest
/// admissible rate.
fn best_exponential(alpha: &SensitivityMatrix, max_rate: f64, window: Window, h: &Observable, j: i64) -> Option<f64> {
    (1..=64)
        .filter_map(|k| {
            let d = DecaySpec::exponential(max_rate * k as f64 / 64.0).ok()?;
            memory_bound_exponential(alpha, &d, window, h, j).ok()
        })
        .reduce(f64::min)
}

fn burn_in_for(f: &KernelSpec, alpha: &SensitivityMatrix, given: Option<usize>) -> Result<usize> {
    match given {
        Some(b) => Ok(b),
        None => default_burn_in(f.memory_depth(), alpha.sup_row_sum())
            .context("Dobrushin row sum is not below 1; pass --burn-in explicitly"),
    }
}

pub fn bound(args: &BoundArgs, threads: usize) -> Result<Outcome> {
    let loaded = args.common.load()?;
    let f = &loaded.kernel;
    let symbol = symbol_index(f.alphabet(), args.symbol.as_deref())?;
    let observable = format!("indicator of {:?}", f.alphabet().symbols()[symbol]);
    let alpha = build_sensitivity_matrix(f)?;
    let mut tally = SlackTally::default();
    let mut notes = Vec::new();
    let mut seeds = BTreeMap::new();
    let mut decay_rate = None;
    let mut max_kernel_distance = None;
    let table = match args.kind {
        BoundKind::Memory => {
            let decay = fit_decay_rate(&alpha, DecayFamily::Exponential);
            match &decay {
                Ok(d) => {
                    decay_rate = Some(d.rate);
                    notes.push("bound_exponential is the best exponential-form bound over rates up to decay_rate".into());
                }
                Err(e) => notes.push(format!("no exponential decay fit: {e}")),
            }
            let mut table = Table::new(&["n", "bound", "bound_exponential", "exact", "slack"]);
            let mut exact_failed = false;
            for n in 0..=args.sweep as i64 {
                let window = Window::new(0, n)?;
                let h = Observable::indicator(n, symbol, f.alphabet())?;
                let b = memory_bound_general(&alpha, window, &h, args.j)?;
                let be = decay
                    .as_ref()
                    .ok()
                    .and_then(|d| best_exponential(&alpha, d.rate, window, &h, args.j));
                let (mut exact, mut slack) = (None, None);
                if args.verify && !exact_failed {
                    match exact_oscillation_of_average(f, window, &h, args.j) {
                        Ok(x) => {
                            slack = Some(tally.add(b, x));
                            exact = Some(x);
                        }
                        Err(e) => {
                            notes.push(format!("exact values stop before n={n}: {e}"));
                            exact_failed = true;
                        }
                    }
                }
                table.push(vec![Cell::Int(n), Cell::Num(b), Cell::opt(be), Cell::opt(exact), Cell::opt(slack)]);
            }
            table
        }
        BoundKind::Correlation => {
            let diameter = f.alphabet().diameter();
            let mu = if args.verify {
                match stationary_measure(f) {
                    Ok(mu) => Some(mu),
                    Err(e) => {
                        notes.push(format!("no exact values: {e}"));
                        None
                    }
                }
            } else {
                None
            };
            let path = if args.samples > 0 {
                seeds.insert("simulation", args.seed);
                let burn = burn_in_for(f, &alpha, args.burn_in)?;
                notes.push(format!("empirical column: {} samples, burn-in {burn}, {BATCHES} batches", args.samples));
                let past = PastConfig::constant(0, f.memory_depth());
                Some((sample_path(f, args.samples + burn, args.seed, &past)?, burn))
            } else {
                None
            };
            let h0 = Observable::indicator(0, symbol, f.alphabet())?;
            let mut table = Table::new(&["lag", "bound", "exact", "empirical", "se"]);
            for lag in 1..=args.lags {
                let h1 = Observable::indicator(lag, symbol, f.alphabet())?;
                let b = correlation_bound(&alpha, h1.support(), h0.support(), &h1, &h0, diameter)?.value;
                let exact = match &mu {
                    Some(mu) => {
                        let c = mu.covariance(f, &h1, &h0)?;
                        tally.add(b, c.abs());
                        Some(c)
                    }
                    None => None,
                };
                let (emp, se) = match &path {
                    Some((p, burn)) => {
                        let e = estimate_correlation(p, &h0, &h0, lag, *burn)?;
                        (Some(e.estimate), Some(e.standard_error))
                    }
                    None => (None, None),
                };
                table.push(vec![Cell::Int(lag), Cell::Num(b), Cell::opt(exact), Cell::opt(emp), Cell::opt(se)]);
            }
            table
        }
        BoundKind::Compare => {
            let other_path = args.against.as_deref().context("compare needs --against <spec.json>")?;
            let g = crate::input::load_spec(other_path, !args.common.no_validate, *f.caps())?;
            notes.push(format!("against {} (sha256 {})", g.source, g.sha256));
            let g = g.kernel;
            let exact = if args.verify {
                match (stationary_measure(f), stationary_measure(&g)) {
                    (Ok(a), Ok(b)) => Some((a, b)),
                    (Err(e), _) | (_, Err(e)) => {
                        notes.push(format!("no exact values: {e}"));
                        None
                    }
                }
            } else {
                None
            };
            let mut table = Table::new(&["symbol", "bound", "exact_gap", "slack"]);
            for s in 0..f.alphabet().size() {
                let h = Observable::indicator(0, s, f.alphabet())?;
                let b = comparison_bound(f, &g, h.support(), &h)?;
                max_kernel_distance = Some(b.max_kernel_distance);
                let (mut gap, mut slack) = (None, None);
                if let Some((mf, mg)) = &exact {
                    let x = (mf.expectation(f, &h)? - mg.expectation(&g, &h)?).abs();
                    slack = Some(tally.add(b.value, x));
                    gap = Some(x);
                }
                table.push(vec![Cell::Int(s as i64), Cell::Num(b.value), Cell::opt(gap), Cell::opt(slack)]);
            }
            table
        }
    };
    write_csv(args.csv.as_ref(), &table)?;
    let passed = tally.violations == 0;
    let result = BoundResult {
        kind: format!("{:?}", args.kind).to_lowercase(),
        observable,
        table,
        violations: tally.violations,
        worst_slack: tally.worst,
        notes,
        decay_rate,
        max_kernel_distance,
    };
    let tolerances = BTreeMap::from([("check", CHECK_TOLERANCE), ("series", SERIES_TOLERANCE)]);
    let envelope = Envelope {
        command: "bound",
        loaded: &loaded,
        threads,
        tolerances,
        seeds,
    };
    envelope.finish(&args.common, passed, result)
}

// ---------------------------------------------------------------- verify

#[derive(Clone, Debug, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Random trials per check.
    #[arg(long, default_value_t = 20)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Length of the window `[0, L − 1]` whose sub-windows are checked.
    #[arg(long, default_value_t = 3)]
    pub window_len: usize,
    /// Largest lag in the correlation domination check.
    #[arg(long, default_value_t = 4)]
    pub lags: i64,
}

#[derive(Serialize)]
struct PropertyResult {
    name: &'static str,
    status: &'static str,
    checks: usize,
    violations: usize,
    worst_slack: Option<f64>,
    detail: String,
}

impl PropertyResult {
    fn skipped(name: &'static str, why: String) -> Self {
        PropertyResult {
            name,
            status: "skipped",
            checks: 0,
            violations: 0,
            worst_slack: None,
            detail: why,
        }
    }

    fn from_slacks(name: &'static str, slacks: &[f64], tol: f64, detail: String) -> Self {
        let violations = slacks.iter().filter(|s| **s < -tol).count();
        PropertyResult {
            name,
            status: if violations == 0 { "pass" } else { "fail" },
            checks: slacks.len(),
            violations,
            worst_slack: slacks.iter().copied().reduce(f64::min),
            detail,
        }
    }
}

fn run_property(name: &'static str, body: impl FnOnce() -> lis_core::Result<PropertyResult>) -> PropertyResult {
    body().unwrap_or_else(|e| PropertyResult::skipped(name, e.to_string()))
}

#[derive(Serialize)]
struct VerifyResult {
    window: Window,
    truncation_tail: f64,
    dobrushin_row_sum: f64,
    properties: Vec<PropertyResult>,
}

fn nested_pairs(outer: Window) -> Vec<(Window, Window)> {
    let mut pairs = Vec::new();
    for lo in outer.sites() {
        for hi in lo..=outer.hi() {
            for ilo in lo..=hi {
                for ihi in ilo..=hi {
                    pairs.push((Window::new(lo, hi).unwrap(), Window::new(ilo, ihi).unwrap()));
                }
            }
        }
    }
    pairs
}

pub fn verify(args: &VerifyArgs, threads: usize) -> Result<Outcome> {
    if args.window_len == 0 {
        bail!("--window-len must be at least 1");
    }
    let loaded = args.common.load()?;
    let f = &loaded.kernel;
    let window = Window::new(0, args.window_len as i64 - 1)?;
    let (trials, seed) = (args.trials, args.seed);
    let alpha = build_sensitivity_matrix(f)?;
    let rho = alpha.sup_row_sum();
    let mut properties = Vec::new();

    properties.push(run_property("consistency", || {
        let mut slacks = Vec::new();
        for (outer, inner) in nested_pairs(window) {
            let r = verify_consistency(f, outer, inner, trials, CHECK_TOLERANCE, seed)?;
            slacks.push(CHECK_TOLERANCE - r.max_residual);
        }
        Ok(PropertyResult::from_slacks(
            "consistency",
            &slacks,
            0.0,
            "f_Δ(f_Λ h) = f_Δ h over nested windows".into(),
        ))
    }));

    properties.push(run_property("factorization", || {
        let mut slacks = Vec::new();
        for hi in window.sites() {
            let r = verify_factorization(f, Window::new(0, hi)?, trials, CHECK_TOLERANCE, seed)?;
            slacks.push(CHECK_TOLERANCE - r.max_residual);
        }
        Ok(PropertyResult::from_slacks(
            "factorization",
            &slacks,
            0.0,
            "interval kernels factor at every split".into(),
        ))
    }));

    properties.push(run_property("dusting", || {
        let (mut checks, mut violations, mut worst) = (0, 0, f64::INFINITY);
        for hi in window.sites() {
            let r = verify_dusting(f, Window::new(0, hi)?, &alpha, trials, seed)?;
            checks += r.checks;
            violations += r.violations;
            worst = worst.min(r.worst_slack);
        }
        Ok(PropertyResult {
            name: "dusting",
            status: if violations == 0 { "pass" } else { "fail" },
            checks,
            violations,
            worst_slack: Some(worst),
            detail: "oscillations spread onto the past within the sensitivity bound".into(),
        })
    }));

    properties.push(run_property("memory_domination", || {
        let support = Window::new(-1, window.hi())?;
        let depth = f.memory_depth() as i64;
        let mut slacks = Vec::new();
        for t in 0..trials {
            let mut rng = trial_rng(seed, t as u64);
            let h = random_observable(support, f.alphabet(), f.caps(), &mut rng)?;
            for j in (-depth - 1).min(-2)..0 {
                let exact = exact_oscillation_of_average(f, window, &h, j)?;
                slacks.push(memory_bound_general(&alpha, window, &h, j)? - exact);
            }
        }
        Ok(PropertyResult::from_slacks(
            "memory_domination",
            &slacks,
            CHECK_TOLERANCE,
            "exact oscillation of f_Λ h at past sites is below the Neumann-series bound".into(),
        ))
    }));

    properties.push(run_property("correlation_domination", || {
        if !(rho < 1.0) {
            return Ok(PropertyResult::skipped(
                "correlation_domination",
                format!("Dobrushin row sum {rho} is not below 1"),
            ));
        }
        let mu = stationary_measure(f)?;
        let diameter = f.alphabet().diameter();
        let mut slacks = Vec::new();
        for s in 0..f.alphabet().size() {
            let h0 = Observable::indicator(0, s, f.alphabet())?;
            for lag in 1..=args.lags {
                let h1 = Observable::indicator(lag, s, f.alphabet())?;
                let exact = mu.covariance(f, &h1, &h0)?.abs();
                let b = correlation_bound(&alpha, h1.support(), h0.support(), &h1, &h0, diameter)?;
                slacks.push(b.value - exact);
            }
        }
        Ok(PropertyResult::from_slacks(
            "correlation_domination",
            &slacks,
            CHECK_TOLERANCE,
            "stationary covariances of indicators are below the correlation bound".into(),
        ))
    }));

    let passed = properties.iter().all(|p| p.status != "fail");
    let result = VerifyResult {
        window,
        truncation_tail: f.truncation_tail(),
        dobrushin_row_sum: rho,
        properties,
    };
    let tolerances = BTreeMap::from([("check", CHECK_TOLERANCE), ("dusting", DUSTING_TOLERANCE)]);
    let envelope = Envelope {
        command: "verify",
        loaded: &loaded,
        threads,
        tolerances,
        seeds: BTreeMap::from([("trials", seed)]),
    };
    envelope.finish(&args.common, passed, result)
}

// ---------------------------------------------------------------- simulate

#[derive(Clone, Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Number of sites after burn-in.
    #[arg(long, default_value_t = 100_000)]
    pub length: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Largest lag in the table.
    #[arg(long, default_value_t = 5)]
    pub lags: i64,
    #[arg(long)]
    pub burn_in: Option<usize>,
    /// Symbol of the indicator observable (label or index).
    #[arg(long)]
    pub symbol: Option<String>,
    /// Also write the table as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Serialize)]
struct SimulateResult {
    length: usize,
    burn_in: usize,
    symbol_frequency: Vec<f64>,
    observable: String,
    table: Table,
    notes: Vec<String>,
}

pub fn simulate(args: &SimulateArgs, threads: usize) -> Result<Outcome> {
    let loaded = args.common.load()?;
    let f = &loaded.kernel;
    let symbol = symbol_index(f.alphabet(), args.symbol.as_deref())?;
    let alpha = build_sensitivity_matrix(f)?;
    let burn_in = burn_in_for(f, &alpha, args.burn_in)?;
    let past = PastConfig::constant(0, f.memory_depth());
    let path = sample_path(f, args.length + burn_in, args.seed, &past)?;
    let mut counts = vec![0usize; f.alphabet().size()];
    for &x in &path[burn_in..] {
        counts[x] += 1;
    }
    let h = Observable::indicator(0, symbol, f.alphabet())?;
    let mut notes = Vec::new();
    let mut table = Table::new(&["lag", "empirical", "se", "bound"]);
    for lag in 0..=args.lags {
        let e = estimate_correlation(&path, &h, &h, lag, burn_in)?;
        let b = if lag == 0 {
            None
        } else {
            let h1 = h.shifted(lag);
            match correlation_bound(&alpha, h1.support(), h.support(), &h1, &h, f.alphabet().diameter()) {
                Ok(b) => Some(b.value),
                Err(err) => {
                    if lag == 1 {
                        notes.push(format!("no analytic bound: {err}"));
                    }
                    None
                }
            }
        };
        table.push(vec![Cell::Int(lag), Cell::Num(e.estimate), Cell::Num(e.standard_error), Cell::opt(b)]);
    }
    write_csv(args.csv.as_ref(), &table)?;
    let result = SimulateResult {
        length: args.length,
        burn_in,
        symbol_frequency: counts.iter().map(|c| *c as f64 / args.length as f64).collect(),
        observable: format!("indicator of {:?}", f.alphabet().symbols()[symbol]),
        table,
        notes,
    };
    let envelope = Envelope {
        command: "simulate",
        loaded: &loaded,
        threads,
        tolerances: BTreeMap::new(),
        seeds: BTreeMap::from([("path", args.seed)]),
    };
    envelope.finish(&args.common, true, result)
}

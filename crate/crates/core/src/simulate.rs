//! Monte Carlo study of the backward mean estimator.
//!
//! Generative design (all defaults configurable through [`SimConfig`]):
//!
//! * failure time `T ~ Gamma(shape 3, rate 1)`;
//! * truncation `W = 0` with probability 1/2, otherwise `W ~ U(0, 20)`;
//!   subjects with `T < W` are never sampled;
//! * censoring `C = W + C'` with `C' ~ U(0, 8)`;
//! * given `T`, latent `Z1, Z2 ~ Gamma(shape 3, rate T)`;
//! * recurrences form a Poisson process with rate `4 Z1`, simulated in
//!   backward time over `(0, T]`;
//! * a recurrence `u` time units before failure carries a mark
//!   `Q ~ Gamma(shape Z2 (3 + 3 I(u < 1/3)), rate 1)`.
//!
//! `n` counts retained (post-truncation) subjects. Only events inside the
//! follow-up interval `[W, min(T, C)]` are recorded.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma};

use crate::backward::{BackwardCurve, BackwardEstimator};
use crate::bands::{
    band_critical_values, bands, BandKind, BandResult, CriticalValues, MultiplierBootstrap,
};
use crate::error::{Error, Result};
use crate::model::{
    apply_prevalent_shift, validate_cohort, Cohort, EstimandWindow, ProcessEvent, SubjectRecord,
};
use crate::normal;
use crate::rate::simpson;
use crate::rng::{derive_seed, substream};

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    /// Retained subjects per data set.
    pub n: usize,
    pub replicates: usize,
    /// Multiplier draws per data set.
    pub band_reps: usize,
    pub seed: u64,
    /// `1 - alpha` is the nominal level of intervals and bands.
    pub alpha: f64,
    pub survival_shape: f64,
    pub survival_rate: f64,
    /// Probability that a drawn subject is incident (`W = 0`).
    pub incident_fraction: f64,
    /// Prevalent truncation times are `U(0, truncation_max)`.
    pub truncation_max: f64,
    /// `C' ~ U(0, censor_max)`.
    pub censor_max: f64,
    pub latent_shape: f64,
    pub recurrence_multiplier: f64,
    pub mark_base: f64,
    pub mark_jump: f64,
    /// Marks closer than this to failure get the extra `mark_jump` shape.
    pub mark_jump_until: f64,
    pub window: EstimandWindow,
    /// Backward times at which estimates are summarised.
    pub eval_grid: Vec<f64>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n: 400,
            replicates: 2000,
            band_reps: 1000,
            seed: 20_100_901,
            alpha: 0.05,
            survival_shape: 3.0,
            survival_rate: 1.0,
            incident_fraction: 0.5,
            truncation_max: 20.0,
            censor_max: 8.0,
            latent_shape: 3.0,
            recurrence_multiplier: 4.0,
            mark_base: 3.0,
            mark_jump: 3.0,
            mark_jump_until: 1.0 / 3.0,
            window: EstimandWindow {
                t1: 1.0,
                t2: 20.0,
                tau0: 1.0,
            },
            eval_grid: (1..=10).map(|k| k as f64 / 10.0).collect(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("survival_shape", self.survival_shape),
            ("survival_rate", self.survival_rate),
            ("truncation_max", self.truncation_max),
            ("censor_max", self.censor_max),
            ("latent_shape", self.latent_shape),
            ("recurrence_multiplier", self.recurrence_multiplier),
            ("mark_base", self.mark_base),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::InvalidArgument {
                    name,
                    value,
                    expected: "(0, inf)",
                });
            }
        }
        for (name, value) in [
            ("mark_jump", self.mark_jump),
            ("mark_jump_until", self.mark_jump_until),
        ] {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(Error::InvalidArgument {
                    name,
                    value,
                    expected: "[0, inf)",
                });
            }
        }
        crate::error::check_finite_range(
            "incident_fraction",
            self.incident_fraction,
            0.0,
            1.0,
            "[0, 1]",
        )?;
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidArgument {
                name: "alpha",
                value: self.alpha,
                expected: "(0, 1)",
            });
        }
        EstimandWindow::new(self.window.t1, self.window.t2, self.window.tau0)?;
        if self.n == 0 {
            return Err(Error::Empty("cohort size"));
        }
        if self.eval_grid.is_empty() {
            return Err(Error::Empty("evaluation grid"));
        }
        for &u in &self.eval_grid {
            self.window.check_backward_time(u)?;
        }
        Ok(())
    }

    fn mark_shape(&self, offset: f64) -> f64 {
        if offset < self.mark_jump_until {
            self.mark_base + self.mark_jump
        } else {
            self.mark_base
        }
    }
}

fn gamma(shape: f64, rate: f64) -> Gamma<f64> {
    Gamma::new(shape, 1.0 / rate).expect("positive gamma parameters")
}

/// Recurrence offsets in `(0, horizon]` of a Poisson process with `rate`.
fn poisson_offsets<R: Rng + ?Sized>(rng: &mut R, rate: f64, horizon: f64, out: &mut Vec<f64>) {
    out.clear();
    let mut v = 0.0;
    loop {
        let gap: f64 = Exp1.sample(rng);
        v += gap / rate;
        if v > horizon {
            break;
        }
        out.push(v);
    }
}

/// Draws `config.n` retained subjects.
pub fn generate_cohort<R: Rng + ?Sized>(config: &SimConfig, rng: &mut R) -> Result<Cohort> {
    config.validate()?;
    let survival = gamma(config.survival_shape, config.survival_rate);
    let mut subjects = Vec::with_capacity(config.n);
    let mut offsets = Vec::new();
    while subjects.len() < config.n {
        let t = survival.sample(rng);
        let incident = rng.random::<f64>() < config.incident_fraction;
        let w = if incident {
            0.0
        } else {
            config.truncation_max * rng.random::<f64>()
        };
        let c = w + config.censor_max * rng.random::<f64>();
        if t < w {
            continue;
        }
        let z1 = gamma(config.latent_shape, t).sample(rng);
        let z2 = gamma(config.latent_shape, t).sample(rng);
        poisson_offsets(rng, config.recurrence_multiplier * z1, t, &mut offsets);

        let x = t.min(c);
        let mut events = Vec::new();
        for &v in &offsets {
            let q = gamma(z2 * config.mark_shape(v), 1.0).sample(rng);
            let time = t - v;
            if w <= time && time <= x {
                events.push(ProcessEvent::new(time, q));
            }
        }
        events.reverse();
        subjects.push(SubjectRecord::new(
            format!("s{}", subjects.len()),
            w,
            x,
            t <= c,
            events,
        ));
    }
    validate_cohort(subjects)
}

/// Unweighted complete-case means of `V(u)` over uncensored in-window
/// failures, split into incident (`w = 0`) and prevalent (`w > 0`) arms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NaiveMeans {
    pub incident: Option<f64>,
    pub prevalent: Option<f64>,
}

pub fn naive_means(cohort: &Cohort, window: EstimandWindow, u: f64) -> Result<NaiveMeans> {
    window.check_backward_time(u)?;
    let (mut si, mut ni, mut sp, mut np) = (0.0, 0usize, 0.0, 0usize);
    for s in cohort.subjects() {
        if !(s.delta && window.contains(s.x)) {
            continue;
        }
        let v = s.backward_value(u)?;
        if s.w == 0.0 {
            si += v;
            ni += 1;
        } else {
            sp += v;
            np += 1;
        }
    }
    Ok(NaiveMeans {
        incident: (ni > 0).then(|| si / ni as f64),
        prevalent: (np > 0).then(|| sp / np as f64),
    })
}

/// `(incident mean, prevalent mean)`; errors when either arm is empty.
pub fn naive_estimators(cohort: &Cohort, window: EstimandWindow, u: f64) -> Result<(f64, f64)> {
    let m = naive_means(cohort, window, u)?;
    Ok((
        m.incident.ok_or(Error::EmptyArm("incident"))?,
        m.prevalent.ok_or(Error::EmptyArm("prevalent"))?,
    ))
}

/// Closed form of `E(V(u) | t1 <= T < t2)` under the generative design.
///
/// `E(V(u) | T) = multiplier · (latent_shape / T)² · ∫₀ᵘ shape(v) dv` for
/// `u <= T`, and `E(T⁻² | t1 <= T < t2)` is a ratio of two gamma-kernel
/// integrals evaluated by Simpson's rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthCurve {
    scale: f64,
    config_mark: (f64, f64, f64),
}

impl TruthCurve {
    pub fn new(config: &SimConfig) -> Self {
        let (k, rate) = (config.survival_shape, config.survival_rate);
        let (t1, t2) = (config.window.t1, config.window.t2.min(t1_upper(config)));
        let log_kernel = |t: f64, power: f64| (power) * libm::log(t) - rate * t;
        // shift the exponent to keep the integrands O(1)
        let shift =
            log_kernel(t1, k - 1.0).max(log_kernel(((k - 1.0) / rate).clamp(t1, t2), k - 1.0));
        let steps = 200_000;
        let num = simpson(|t| libm::exp(log_kernel(t, k - 3.0) - shift), t1, t2, steps);
        let den = simpson(|t| libm::exp(log_kernel(t, k - 1.0) - shift), t1, t2, steps);
        let inv_sq = num / den;
        TruthCurve {
            scale: config.recurrence_multiplier
                * config.latent_shape
                * config.latent_shape
                * inv_sq,
            config_mark: (config.mark_base, config.mark_jump, config.mark_jump_until),
        }
    }

    pub fn at(&self, u: f64) -> f64 {
        let (base, jump, until) = self.config_mark;
        self.scale * (base * u + jump * u.min(until))
    }
}

/// Effectively infinite upper bound for the quadrature when `t2 = inf`.
fn t1_upper(config: &SimConfig) -> f64 {
    let (k, rate) = (config.survival_shape, config.survival_rate);
    config.window.t1 + (k + 60.0 + 20.0 * libm::sqrt(k)) / rate
}

/// Monte Carlo estimate of `E(V(u) | t1 <= T < t2)` with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleValue {
    pub u: f64,
    pub mean: f64,
    pub se: f64,
}

/// Running sums for the truth oracle; merge chunks in index order.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleAccumulator {
    pub count: u64,
    pub sum: Vec<f64>,
    pub sum_sq: Vec<f64>,
}

impl OracleAccumulator {
    pub fn new(points: usize) -> Self {
        OracleAccumulator {
            count: 0,
            sum: vec![0.0; points],
            sum_sq: vec![0.0; points],
        }
    }

    pub fn merge(&mut self, other: &OracleAccumulator) {
        self.count += other.count;
        for (a, b) in self.sum.iter_mut().zip(&other.sum) {
            *a += b;
        }
        for (a, b) in self.sum_sq.iter_mut().zip(&other.sum_sq) {
            *a += b;
        }
    }

    pub fn finish(&self, grid: &[f64]) -> Vec<OracleValue> {
        let c = self.count as f64;
        grid.iter()
            .enumerate()
            .map(|(k, &u)| {
                let mean = self.sum[k] / c;
                let var = (self.sum_sq[k] / c - mean * mean).max(0.0) * c / (c - 1.0);
                OracleValue {
                    u,
                    mean,
                    se: libm::sqrt(var / c),
                }
            })
            .collect()
    }
}

/// Subjects per oracle chunk; chunk `j` draws from substream `j`.
pub const ORACLE_CHUNK: usize = 1 << 16;

/// Simulates `draws` untruncated, uncensored subjects and accumulates
/// `V(u)` for those with `t1 <= T < t2`.
pub fn oracle_chunk(
    config: &SimConfig,
    grid: &[f64],
    draws: usize,
    seed: u64,
    chunk: u64,
) -> OracleAccumulator {
    let mut rng = substream(seed, chunk);
    let survival = gamma(config.survival_shape, config.survival_rate);
    let horizon = grid.iter().copied().fold(0.0, f64::max);
    let mut acc = OracleAccumulator::new(grid.len());
    let mut offsets = Vec::new();
    let mut values = vec![0.0; grid.len()];
    for _ in 0..draws {
        let t = survival.sample(&mut rng);
        if !config.window.contains(t) {
            continue;
        }
        let z1 = gamma(config.latent_shape, t).sample(&mut rng);
        let z2 = gamma(config.latent_shape, t).sample(&mut rng);
        // only the last `horizon` time units matter for V(u), u <= horizon
        poisson_offsets(
            &mut rng,
            config.recurrence_multiplier * z1,
            horizon.min(t),
            &mut offsets,
        );
        values.iter_mut().for_each(|v| *v = 0.0);
        for &v in &offsets {
            let q = gamma(z2 * config.mark_shape(v), 1.0).sample(&mut rng);
            for (k, &u) in grid.iter().enumerate() {
                if v <= u {
                    values[k] += q;
                }
            }
        }
        acc.count += 1;
        for (k, &v) in values.iter().enumerate() {
            acc.sum[k] += v;
            acc.sum_sq[k] += v * v;
        }
    }
    acc
}

/// `E(V(u) | t1 <= T < t2)` from `big_n` complete draws.
pub fn true_mean_oracle(
    config: &SimConfig,
    grid: &[f64],
    big_n: usize,
    seed: u64,
) -> Vec<OracleValue> {
    let mut acc = OracleAccumulator::new(grid.len());
    let mut done = 0;
    let mut chunk = 0;
    while done < big_n {
        let draws = ORACLE_CHUNK.min(big_n - done);
        acc.merge(&oracle_chunk(config, grid, draws, seed, chunk));
        done += draws;
        chunk += 1;
    }
    acc.finish(grid)
}

/// Per-data-set results of the study.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateOutcome {
    pub estimate: Vec<f64>,
    pub se: Vec<f64>,
    pub covered: Vec<bool>,
    pub naive: Vec<NaiveMeans>,
    /// Band coverage over `[t*, tau0]`, indexed like [`BAND_KINDS`].
    pub band_covered: [bool; 3],
    pub critical: CriticalValues,
}

/// Whether a band built on a step-function curve contains a continuous
/// nondecreasing `truth` on `[t*, tau0]`, where `t*` is the first grid point
/// with `μ̂ > 0`.
///
/// On `[g_k, g_{k+1})` the band is constant, so containing the truth there
/// reduces to containing `truth(g_k)` and `truth(g_{k+1})`.
pub fn band_covers(band: &BandResult, curve: &BackwardCurve, truth: impl Fn(f64) -> f64) -> bool {
    let g = &curve.grid;
    let Some(start) = curve.mu.iter().position(|&m| m > 0.0) else {
        return false;
    };
    (start..g.len()).all(|k| {
        let Some(iv) = band.intervals[k] else {
            return false;
        };
        let end = if k + 1 < g.len() { g[k + 1] } else { g[k] };
        iv.contains(truth(g[k])) && iv.contains(truth(end))
    })
}

/// Band shapes whose coverage the study records.
pub const BAND_KINDS: [BandKind; 3] = [BandKind::EqualWidth, BandKind::Plain, BandKind::Log];

/// Runs data set `index` of the study.
pub fn run_replicate(
    config: &SimConfig,
    truth: &TruthCurve,
    index: u64,
) -> Result<ReplicateOutcome> {
    let mut rng = substream(config.seed, 2 * index);
    let cohort = generate_cohort(config, &mut rng)?;
    let shifted = apply_prevalent_shift(&cohort, config.window.tau0)?;
    let est = BackwardEstimator::new(&shifted, config.window)?;
    let grid = est.default_grid();
    let curve = est.influence(&grid)?.to_curve(config.window);

    let z = normal::quantile(1.0 - 0.5 * config.alpha);
    let root_n = libm::sqrt(shifted.n() as f64);
    let mut estimate = Vec::with_capacity(config.eval_grid.len());
    let mut se = Vec::with_capacity(config.eval_grid.len());
    let mut covered = Vec::with_capacity(config.eval_grid.len());
    let mut naive = Vec::with_capacity(config.eval_grid.len());
    for &u in &config.eval_grid {
        let (mu, sigma) = curve.at(u).expect("grid starts at 0");
        let s = sigma / root_n;
        estimate.push(mu);
        se.push(s);
        covered.push((mu - truth.at(u)).abs() <= z * s);
        naive.push(naive_means(&shifted, config.window, u)?);
    }

    let boot = MultiplierBootstrap::new(&est, &grid)?;
    let critical = band_critical_values(
        &boot,
        &curve.sigma,
        config.band_reps,
        config.alpha,
        derive_seed(config.seed, 2 * index + 1),
    )?;
    let band_covered = BAND_KINDS
        .map(|kind| band_covers(&bands(&curve, &critical, kind), &curve, |u| truth.at(u)));
    Ok(ReplicateOutcome {
        estimate,
        se,
        covered,
        naive,
        band_covered,
        critical,
    })
}

/// Table-style summary at one backward time.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyRow {
    pub u: f64,
    pub truth: f64,
    pub naive_incident: f64,
    pub naive_incident_se: f64,
    pub naive_prevalent: f64,
    pub naive_prevalent_se: f64,
    pub estimate: f64,
    pub estimate_se: f64,
    /// Sampling standard deviation of the estimates.
    pub sse: f64,
    /// Mean of the estimated standard errors.
    pub see: f64,
    pub coverage: f64,
    pub coverage_se: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandCoverage {
    pub kind: BandKind,
    pub coverage: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyReport {
    pub n: usize,
    pub replicates: usize,
    pub band_reps: usize,
    pub seed: u64,
    pub rows: Vec<StudyRow>,
    pub band_coverage: Vec<BandCoverage>,
    pub mean_b: f64,
    pub mean_b_star: f64,
    pub failed_replicates: usize,
    pub first_failure: Option<String>,
}

impl StudyReport {
    pub fn band(&self, kind: BandKind) -> Option<BandCoverage> {
        self.band_coverage.iter().copied().find(|b| b.kind == kind)
    }
}

fn mean_sd(values: impl Iterator<Item = f64>) -> (f64, f64, usize) {
    let v: Vec<f64> = values.collect();
    let n = v.len();
    if n == 0 {
        return (f64::NAN, f64::NAN, 0);
    }
    let mean = v.iter().sum::<f64>() / n as f64;
    let ss: f64 = v.iter().map(|x| (x - mean) * (x - mean)).sum();
    let sd = if n > 1 {
        libm::sqrt(ss / (n - 1) as f64)
    } else {
        0.0
    };
    (mean, sd, n)
}

fn proportion(flags: impl Iterator<Item = bool>) -> (f64, f64) {
    let (hits, total) = flags.fold((0usize, 0usize), |(h, t), f| (h + f as usize, t + 1));
    let p = hits as f64 / total as f64;
    (p, libm::sqrt(p * (1.0 - p) / total as f64))
}

/// Aggregates replicate outcomes, in index order.
///
/// Fails when more than 1% of the replicates errored.
pub fn summarize(
    config: &SimConfig,
    truth: &TruthCurve,
    outcomes: &[Result<ReplicateOutcome>],
) -> Result<StudyReport> {
    let ok: Vec<&ReplicateOutcome> = outcomes.iter().filter_map(|o| o.as_ref().ok()).collect();
    let failed = outcomes.len() - ok.len();
    let first_failure = outcomes
        .iter()
        .find_map(|o| o.as_ref().err())
        .map(|e| e.to_string());
    if ok.is_empty() || failed * 100 > outcomes.len() {
        return Err(Error::TooManyFailures {
            failed,
            total: outcomes.len(),
            first: first_failure.unwrap_or_default(),
        });
    }
    let reps = ok.len() as f64;
    let rows = config
        .eval_grid
        .iter()
        .enumerate()
        .map(|(k, &u)| {
            let (estimate, sse, _) = mean_sd(ok.iter().map(|o| o.estimate[k]));
            let see = ok.iter().map(|o| o.se[k]).sum::<f64>() / reps;
            let (coverage, coverage_se) = proportion(ok.iter().map(|o| o.covered[k]));
            let (ni, ni_sd, ni_n) = mean_sd(ok.iter().filter_map(|o| o.naive[k].incident));
            let (np, np_sd, np_n) = mean_sd(ok.iter().filter_map(|o| o.naive[k].prevalent));
            StudyRow {
                u,
                truth: truth.at(u),
                naive_incident: ni,
                naive_incident_se: ni_sd / libm::sqrt(ni_n as f64),
                naive_prevalent: np,
                naive_prevalent_se: np_sd / libm::sqrt(np_n as f64),
                estimate,
                estimate_se: sse / libm::sqrt(reps),
                sse,
                see,
                coverage,
                coverage_se,
            }
        })
        .collect();
    let band_coverage = BAND_KINDS
        .iter()
        .enumerate()
        .map(|(k, &kind)| {
            let (coverage, se) = proportion(ok.iter().map(|o| o.band_covered[k]));
            BandCoverage { kind, coverage, se }
        })
        .collect();
    Ok(StudyReport {
        n: config.n,
        replicates: outcomes.len(),
        band_reps: config.band_reps,
        seed: config.seed,
        rows,
        band_coverage,
        mean_b: ok.iter().map(|o| o.critical.b).sum::<f64>() / reps,
        mean_b_star: ok.iter().map(|o| o.critical.b_star).sum::<f64>() / reps,
        failed_replicates: failed,
        first_failure,
    })
}

/// Runs every replicate sequentially and summarises.
pub fn run_study(config: &SimConfig) -> Result<StudyReport> {
    config.validate()?;
    let truth = TruthCurve::new(config);
    let outcomes: Vec<Result<ReplicateOutcome>> = (0..config.replicates as u64)
        .map(|r| run_replicate(config, &truth, r))
        .collect();
    summarize(config, &truth, &outcomes)
}

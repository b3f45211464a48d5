//! The `backproc` command line.

use std::path::PathBuf;

use backproc_core::backward::interval;
use backproc_core::bands::{bands, BandKind, MultiplierBootstrap};
use backproc_core::dist::WeightedSample;
use backproc_core::forward::ForwardMean;
use backproc_core::rate::{rate_curve, select_bandwidth, Kernel, KernelSpec};
use backproc_core::simulate::SimConfig;
use backproc_core::{product_limit, BackwardEstimator, Cohort, EstimandWindow, IntervalKind};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use crate::io::{read_cohort_files, IngestError};
use crate::output::{write_outputs, Cell, Format, Sidecar, Table};
use crate::parallel;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Estimate(#[from] backproc_core::Error),
    #[error("cannot write output: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Usage(String),
}

#[derive(Debug, Parser)]
#[command(
    name = "backproc",
    version,
    about = "Backward mean, distribution and rate of marked processes before failure"
)]
pub struct Cli {
    /// Worker threads (default: one per core).
    #[arg(long, global = true, env = parallel::THREADS_ENV)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Product-limit survival curve.
    Survival(SurvivalArgs),
    /// Backward mean curve with pointwise intervals.
    Mean(MeanArgs),
    /// Backward mean curve with simultaneous bands.
    Bands(BandsArgs),
    /// Percentile curves of the backward process.
    Quantile(QuantileArgs),
    /// Distribution function of the backward process at one backward time.
    Dist(DistArgs),
    /// Kernel-smoothed backward rate.
    Rate(RateArgs),
    /// Forward mean function.
    ForwardMean(ForwardArgs),
    /// Monte Carlo studies.
    #[command(subcommand)]
    Simulate(SimulateCommand),
}

#[derive(Debug, Subcommand)]
pub enum SimulateCommand {
    /// Mean, SSE, SEE, coverage and naive comparators on the reference design.
    Table1(Table1Args),
}

#[derive(Debug, Args, Serialize)]
pub struct InputArgs {
    /// Subject file with columns id,w,x,delta.
    #[arg(long)]
    pub subjects: PathBuf,
    /// Event file with columns id,time,mark.
    #[arg(long)]
    pub events: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct WindowArgs {
    /// Lower end of the failure-time window.
    #[arg(long)]
    pub t1: f64,
    /// Upper end of the failure-time window (`inf` for none).
    #[arg(long, default_value_t = f64::INFINITY)]
    #[serde(serialize_with = "finite_or_null")]
    pub t2: f64,
    /// Backward horizon.
    #[arg(long)]
    pub tau0: f64,
}

fn finite_or_null<S: serde::Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_some(v)
    } else {
        s.serialize_none()
    }
}

impl WindowArgs {
    fn window(&self) -> Result<EstimandWindow, CliError> {
        Ok(EstimandWindow::new(self.t1, self.t2, self.tau0)?)
    }
}

#[derive(Debug, Args, Serialize)]
pub struct OutputArgs {
    /// Output file; provenance goes to `<out>.meta.json`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BandKindArg {
    Plain,
    Log,
    EqualWidth,
}

impl From<BandKindArg> for BandKind {
    fn from(k: BandKindArg) -> Self {
        match k {
            BandKindArg::Plain => BandKind::Plain,
            BandKindArg::Log => BandKind::Log,
            BandKindArg::EqualWidth => BandKind::EqualWidth,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CiKindArg {
    Plain,
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelArg {
    Epanechnikov,
    Uniform,
    Triangular,
}

impl From<KernelArg> for Kernel {
    fn from(k: KernelArg) -> Self {
        match k {
            KernelArg::Epanechnikov => Kernel::Epanechnikov,
            KernelArg::Uniform => Kernel::Uniform,
            KernelArg::Triangular => Kernel::Triangular,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct SurvivalArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct MeanArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub window: WindowArgs,
    /// Backward times (default: every jump of the curve).
    #[arg(long, value_delimiter = ',')]
    pub grid: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, value_enum, default_value_t = CiKindArg::Plain)]
    pub ci_kind: CiKindArg,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct BandsArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub window: WindowArgs,
    #[arg(long, value_delimiter = ',')]
    pub grid: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Multiplier replicates.
    #[arg(long, default_value_t = 1000)]
    pub band_reps: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = BandKindArg::EqualWidth)]
    pub band_kind: BandKindArg,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct QuantileArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub window: WindowArgs,
    /// Percentile levels in (0, 1).
    #[arg(long, value_delimiter = ',', default_value = "0.25,0.5,0.75")]
    pub q: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    pub grid: Option<Vec<f64>>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct DistArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub window: WindowArgs,
    /// Backward time.
    #[arg(long)]
    pub u: f64,
    /// Restrict to failures no later than this time (joint distribution).
    #[arg(long)]
    pub t: Option<f64>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct RateArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub window: WindowArgs,
    #[arg(long, value_enum, default_value_t = KernelArg::Epanechnikov)]
    pub kernel: KernelArg,
    /// Fixed bandwidth; overrides cross-validation.
    #[arg(long, conflicts_with = "bandwidth_grid")]
    pub bandwidth: Option<f64>,
    /// Candidate bandwidths for cross-validation (default: 20 values
    /// spaced geometrically over [0.02, 0.5] tau0).
    #[arg(long, value_delimiter = ',')]
    pub bandwidth_grid: Option<Vec<f64>>,
    /// Evaluation points (default: 101 equally spaced points on [0, tau0]).
    #[arg(long, value_delimiter = ',')]
    pub grid: Option<Vec<f64>>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct ForwardArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Forward times (default: 0 and every jump).
    #[arg(long, value_delimiter = ',')]
    pub grid: Option<Vec<f64>>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct Table1Args {
    /// Retained subjects per data set.
    #[arg(long, default_value_t = 400)]
    pub n: usize,
    #[arg(long, default_value_t = 2000)]
    pub reps: usize,
    #[arg(long, default_value_t = 1000)]
    pub band_reps: usize,
    #[arg(long, default_value_t = SimConfig::default().seed)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Complete-data draws for the Monte Carlo truth (0 to skip).
    #[arg(long, default_value_t = 0)]
    pub oracle_n: usize,
    #[command(flatten)]
    pub output: OutputArgs,
}

fn load(input: &InputArgs) -> Result<Cohort, CliError> {
    Ok(read_cohort_files(&input.subjects, &input.events)?)
}

fn sidecar(command: &str, args: &impl Serialize) -> Sidecar {
    Sidecar::new(command, serde_json::to_value(args).expect("serializable"))
}

fn estimator_sidecar(command: &str, args: &impl Serialize, est: &BackwardEstimator) -> Sidecar {
    let mut s = sidecar(command, args);
    s.n = Some(est.n());
    s.window = Some(est.window().into());
    s.results = json!({
        "survival_at_t1": est.s_t1(),
        "survival_at_t2": est.s_t2(),
        "contributors": est.contributor_count(),
    });
    s
}

fn check_alpha(alpha: f64) -> Result<(), CliError> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(CliError::Usage(format!(
            "alpha must be in (0, 1), got {alpha}"
        )))
    }
}

fn interval_cells(iv: Option<backproc_core::Interval>) -> [Cell; 2] {
    match iv {
        Some(iv) => [iv.lo.into(), iv.hi.into()],
        None => ["".into(), "".into()],
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let pool = parallel::pool(cli.threads);
    match cli.command {
        Command::Survival(a) => survival(&a),
        Command::Mean(a) => mean(&a),
        Command::Bands(a) => bands_cmd(&a, &pool),
        Command::Quantile(a) => quantile(&a),
        Command::Dist(a) => dist(&a),
        Command::Rate(a) => rate(&a),
        Command::ForwardMean(a) => forward(&a),
        Command::Simulate(SimulateCommand::Table1(a)) => table1(&a, &pool),
    }
}

fn survival(a: &SurvivalArgs) -> Result<(), CliError> {
    let cohort = load(&a.input)?;
    let curve = product_limit(&cohort)?;
    let mut table = Table::new(&["t", "s_hat", "risk_fraction", "cum_hazard"]);
    for (k, &t) in curve.event_times().iter().enumerate() {
        table.push(vec![
            t.into(),
            curve.s_left()[k].into(),
            curve.risk_fraction()[k].into(),
            curve.cum_hazard()[k].into(),
        ]);
    }
    let mut meta = sidecar("survival", a);
    meta.n = Some(cohort.n());
    meta.results = json!({ "survival_after_last_failure": curve.s_final() });
    Ok(write_outputs(&a.output.out, &table, a.output.format, meta)?)
}

fn mean(a: &MeanArgs) -> Result<(), CliError> {
    check_alpha(a.alpha)?;
    let cohort = load(&a.input)?;
    let est = BackwardEstimator::new(&cohort, a.window.window()?)?;
    let curve = est.curve(a.grid.as_deref())?;
    let kind = match a.ci_kind {
        CiKindArg::Plain => IntervalKind::Plain,
        CiKindArg::Log => IntervalKind::Log,
    };
    let z = backproc_core::normal::quantile(1.0 - 0.5 * a.alpha);
    let root_n = (curve.n as f64).sqrt();
    let mut table = Table::new(&["u", "mu", "se", "ci_lo", "ci_hi"]);
    for ((&u, &mu), &sigma) in curve.grid.iter().zip(&curve.mu).zip(&curve.sigma) {
        let [lo, hi] = interval_cells(interval(mu, sigma, root_n, z, kind));
        table.push(vec![u.into(), mu.into(), (sigma / root_n).into(), lo, hi]);
    }
    let meta = estimator_sidecar("mean", a, &est);
    Ok(write_outputs(&a.output.out, &table, a.output.format, meta)?)
}

fn bands_cmd(a: &BandsArgs, pool: &rayon::ThreadPool) -> Result<(), CliError> {
    check_alpha(a.alpha)?;
    let cohort = load(&a.input)?;
    let est = BackwardEstimator::new(&cohort, a.window.window()?)?;
    let grid = a.grid.clone().unwrap_or_else(|| est.default_grid());
    let curve = est.influence(&grid)?.to_curve(est.window());
    let boot = MultiplierBootstrap::new(&est, &curve.grid)?;
    let critical =
        parallel::band_critical_values(pool, &boot, &curve.sigma, a.band_reps, a.alpha, a.seed)?;
    let kind = BandKind::from(a.band_kind);
    let band = bands(&curve, &critical, kind);
    if band.below_pointwise {
        eprintln!("warning: simultaneous band is narrower than the pointwise interval somewhere");
    }

    let ci_kind = if kind == BandKind::Log {
        IntervalKind::Log
    } else {
        IntervalKind::Plain
    };
    let z = backproc_core::normal::quantile(1.0 - 0.5 * a.alpha);
    let root_n = (curve.n as f64).sqrt();
    let mut table = Table::new(&["u", "mu", "se", "ci_lo", "ci_hi", "band_lo", "band_hi"]);
    for (k, &u) in curve.grid.iter().enumerate() {
        let (mu, sigma) = (curve.mu[k], curve.sigma[k]);
        let [lo, hi] = interval_cells(interval(mu, sigma, root_n, z, ci_kind));
        let [blo, bhi] = interval_cells(band.intervals[k]);
        table.push(vec![
            u.into(),
            mu.into(),
            (sigma / root_n).into(),
            lo,
            hi,
            blo,
            bhi,
        ]);
    }
    let mut meta = estimator_sidecar("bands", a, &est);
    meta.seed = Some(a.seed);
    meta.results["b"] = json!(critical.b);
    meta.results["b_star"] = json!(critical.b_star);
    meta.results["replicates"] = json!(critical.replicates);
    meta.results["band_kind"] = json!(kind.name());
    meta.results["excluded"] = json!(band.excluded);
    meta.results["below_pointwise"] = json!(band.below_pointwise);
    Ok(write_outputs(&a.output.out, &table, a.output.format, meta)?)
}

fn quantile(a: &QuantileArgs) -> Result<(), CliError> {
    let cohort = load(&a.input)?;
    let est = BackwardEstimator::new(&cohort, a.window.window()?)?;
    let grid = a.grid.clone().unwrap_or_else(|| est.default_grid());
    let mut table = Table::new(&["u", "q", "m_hat"]);
    for &u in &grid {
        let sample = WeightedSample::new(&est, u)?;
        for &q in &a.q {
            table.push(vec![u.into(), q.into(), sample.percentile(q)?.into()]);
        }
    }
    let meta = estimator_sidecar("quantile", a, &est);
    Ok(write_outputs(&a.output.out, &table, a.output.format, meta)?)
}

fn dist(a: &DistArgs) -> Result<(), CliError> {
    let cohort = load(&a.input)?;
    let est = BackwardEstimator::new(&cohort, a.window.window()?)?;
    let sample = WeightedSample::new(&est, a.u)?;
    let mut levels: Vec<f64> = sample.points().iter().map(|p| p.value).collect();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    let mut table = Table::new(&["m", "p_hat"]);
    for m in levels {
        let p = match a.t {
            Some(t) => sample.joint_cdf(m, t)?,
            None => sample.marginal_cdf(m),
        };
        table.push(vec![m.into(), p.into()]);
    }
    let mut meta = estimator_sidecar("dist", a, &est);
    meta.results["pearson"] = match sample.pearson() {
        Ok(r) => json!(r),
        Err(e) => json!(e.to_string()),
    };
    Ok(write_outputs(&a.output.out, &table, a.output.format, meta)?)
}

fn rate(a: &RateArgs) -> Result<(), CliError> {
    let cohort = load(&a.input)?;
    let window = a.window.window()?;
    let est = BackwardEstimator::new(&cohort, window)?;
    let kernel = Kernel::from(a.kernel);
    let mut meta = estimator_sidecar("rate", a, &est);
    let bandwidth = match a.bandwidth {
        Some(h) => h,
        None => {
            let candidates = a.bandwidth_grid.clone().unwrap_or_else(|| {
                let (lo, hi) = (0.02 * window.tau0, 0.5 * window.tau0);
                (0..20)
                    .map(|k| lo * (hi / lo).powf(k as f64 / 19.0))
                    .collect()
            });
            let choice = select_bandwidth(&est, kernel, &candidates)?;
            meta.results["cv_scores"] = json!(choice.scores);
            choice.bandwidth
        }
    };
    let spec = KernelSpec::new(kernel, bandwidth)?;
    let grid = a
        .grid
        .clone()
        .unwrap_or_else(|| (0..=100).map(|k| window.tau0 * k as f64 / 100.0).collect());
    let rates = rate_curve(&est, &grid, &spec)?;
    let mut table = Table::new(&["u", "r_hat", "h_used"]);
    for (&u, r) in grid.iter().zip(rates) {
        table.push(vec![u.into(), r.into(), bandwidth.into()]);
    }
    meta.results["bandwidth"] = json!(bandwidth);
    meta.results["kernel"] = json!(kernel.name());
    Ok(write_outputs(&a.output.out, &table, a.output.format, meta)?)
}

fn forward(a: &ForwardArgs) -> Result<(), CliError> {
    let cohort = load(&a.input)?;
    let fwd = ForwardMean::new(&cohort)?;
    let grid = match &a.grid {
        Some(g) => {
            if let Some(&t) = g.iter().find(|t| !(**t >= 0.0)) {
                return Err(CliError::Usage(format!(
                    "forward times must be nonnegative, got {t}"
                )));
            }
            g.clone()
        }
        None => {
            let mut g = vec![0.0];
            g.extend(fwd.jump_times().iter().copied().filter(|&t| t > 0.0));
            g.dedup();
            g
        }
    };
    let mut table = Table::new(&["t", "mu_Y"]);
    for t in grid {
        table.push(vec![t.into(), fwd.at(t).into()]);
    }
    let mut meta = sidecar("forward-mean", a);
    meta.n = Some(cohort.n());
    Ok(write_outputs(&a.output.out, &table, a.output.format, meta)?)
}

fn table1(a: &Table1Args, pool: &rayon::ThreadPool) -> Result<(), CliError> {
    check_alpha(a.alpha)?;
    let config = SimConfig {
        n: a.n,
        replicates: a.reps,
        band_reps: a.band_reps,
        seed: a.seed,
        alpha: a.alpha,
        ..SimConfig::default()
    };
    let report = parallel::run_study(pool, &config)?;
    let mut table = Table::new(&[
        "u",
        "truth",
        "naive_incident",
        "naive_incident_se",
        "naive_prevalent",
        "naive_prevalent_se",
        "estimate",
        "estimate_se",
        "sse",
        "see",
        "coverage",
        "coverage_se",
    ]);
    for r in &report.rows {
        table.push(
            [
                r.u,
                r.truth,
                r.naive_incident,
                r.naive_incident_se,
                r.naive_prevalent,
                r.naive_prevalent_se,
                r.estimate,
                r.estimate_se,
                r.sse,
                r.see,
                r.coverage,
                r.coverage_se,
            ]
            .into_iter()
            .map(Cell::from)
            .collect(),
        );
    }

    let mut meta = sidecar("simulate table1", a);
    meta.seed = Some(a.seed);
    meta.n = Some(a.n);
    meta.window = Some(config.window.into());
    let band_coverage: Vec<_> = report
        .band_coverage
        .iter()
        .map(|b| json!({ "kind": b.kind.name(), "coverage": b.coverage, "se": b.se }))
        .collect();
    meta.results = json!({
        "band_coverage": band_coverage,
        "mean_b": report.mean_b,
        "mean_b_star": report.mean_b_star,
        "replicates": report.replicates,
        "failed_replicates": report.failed_replicates,
        "first_failure": report.first_failure,
    });
    if a.oracle_n > 0 {
        let oracle = parallel::true_mean_oracle(
            pool,
            &config,
            &config.eval_grid,
            a.oracle_n,
            a.seed ^ 0x5eed,
        );
        meta.results["oracle"] = json!(oracle
            .iter()
            .map(|o| json!({ "u": o.u, "mean": o.mean, "se": o.se }))
            .collect::<Vec<_>>());
    }
    Ok(write_outputs(&a.output.out, &table, a.output.format, meta)?)
}

//! Thread-pool drivers for the bootstrap, the Monte Carlo study and the
//! truth oracle.
//!
//! Every unit of work draws from its own indexed random stream and results
//! are reduced in index order, so output does not depend on the number of
//! threads.

use backproc_core::bands::{critical_from_maxima, CriticalValues, MultiplierBootstrap};
use backproc_core::simulate::{
    oracle_chunk, run_replicate, summarize, OracleAccumulator, OracleValue, ReplicateOutcome,
    SimConfig, StudyReport, TruthCurve, ORACLE_CHUNK,
};
use backproc_core::{Error, Result};
use rayon::prelude::*;

pub const THREADS_ENV: &str = "BACKPROC_THREADS";

/// Builds a pool with `threads` workers, falling back to `BACKPROC_THREADS`
/// and then to one worker per core.
pub fn pool(threads: Option<usize>) -> rayon::ThreadPool {
    let threads = threads
        .or_else(|| {
            std::env::var(THREADS_ENV)
                .ok()
                .and_then(|v| v.trim().parse().ok())
        })
        .unwrap_or(0);
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("thread pool")
}

/// Parallel version of [`backproc_core::bands::band_critical_values`]; same
/// draws, same result.
pub fn band_critical_values(
    pool: &rayon::ThreadPool,
    boot: &MultiplierBootstrap,
    sigma: &[f64],
    replicates: usize,
    alpha: f64,
    seed: u64,
) -> Result<CriticalValues> {
    if replicates == 0 {
        return Err(Error::Empty("bootstrap replicates"));
    }
    if sigma.iter().all(|&s| !(s > 0.0)) {
        return Err(Error::ZeroSigma);
    }
    let maxima: Vec<(f64, Option<f64>)> = pool.install(|| {
        (0..replicates as u64)
            .into_par_iter()
            .map(|k| boot.replicate_maxima(sigma, seed, k))
            .collect()
    });
    critical_from_maxima(&maxima, alpha, seed)
}

/// Runs the study with replicates spread over `pool`.
pub fn run_study(pool: &rayon::ThreadPool, config: &SimConfig) -> Result<StudyReport> {
    config.validate()?;
    let truth = TruthCurve::new(config);
    let outcomes: Vec<Result<ReplicateOutcome>> = pool.install(|| {
        (0..config.replicates as u64)
            .into_par_iter()
            .map(|r| run_replicate(config, &truth, r))
            .collect()
    });
    summarize(config, &truth, &outcomes)
}

/// Parallel [`backproc_core::simulate::true_mean_oracle`].
pub fn true_mean_oracle(
    pool: &rayon::ThreadPool,
    config: &SimConfig,
    grid: &[f64],
    big_n: usize,
    seed: u64,
) -> Vec<OracleValue> {
    let chunks = big_n.div_ceil(ORACLE_CHUNK);
    let parts: Vec<OracleAccumulator> = pool.install(|| {
        (0..chunks)
            .into_par_iter()
            .map(|c| {
                let draws = ORACLE_CHUNK.min(big_n - c * ORACLE_CHUNK);
                oracle_chunk(config, grid, draws, seed, c as u64)
            })
            .collect()
    });
    let mut acc = OracleAccumulator::new(grid.len());
    for p in &parts {
        acc.merge(p);
    }
    acc.finish(grid)
}

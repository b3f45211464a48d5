//! Simultaneous confidence bands by multiplier bootstrap.
//!
//! Each replicate draws standard normal multipliers `G_i`, one per
//! contributing subject, and forms
//! `W(u) = n^{-1/2} Σ_i G_i c_i a_i(u)` with the influence terms of
//! [`crate::backward`]. The critical value `b` is the `(1 - α)` empirical
//! quantile of `max_u |W(u)|`; `b*` is the same for `max_u |W(u)| / σ̂(u)`
//! and drives the log-transformed band.
//!
//! Three band shapes are offered. `Plain` is `μ̂ ± n^{-1/2} b σ̂`, `Log` is
//! `μ̂ exp(± n^{-1/2} b* σ̂ / μ̂)` and `EqualWidth` is `μ̂ ± n^{-1/2} b`,
//! the band whose simultaneous level `b` calibrates directly.
//!
//! Replicate `k` draws its multipliers from ChaCha stream `k` of the seed,
//! so replicates may be evaluated in any order or in parallel.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::backward::{
    interval, normalize_grid, BackwardCurve, BackwardEstimator, Interval, IntervalKind,
};
use crate::error::{Error, Result};
use crate::normal;
use crate::rng::indexed_stream;

/// Precomputed coefficients for fast bootstrap draws.
///
/// `W(u)` is linear in the multipliers and in the `V_j(u)`, so it can be
/// rewritten as `Σ_j β_j V_j(u)` with `β` depending only on the
/// multipliers. A draw then costs `O(contributors + events)` instead of
/// `O(contributors × grid)`.
#[derive(Debug, Clone)]
pub struct MultiplierBootstrap {
    grid: Vec<f64>,
    /// `1 / (√n R(x_i) D)`.
    coef: Vec<f64>,
    s_x: Vec<f64>,
    /// `Ŝ(x_j) / (n R(x_j) D)`.
    h_coef: Vec<f64>,
    /// One past the last contributor sharing `x_j`.
    tie_end: Vec<usize>,
    s_t1: f64,
    s_t2: f64,
    /// `(grid index where the event enters, contributor, mark)`, by grid index.
    events: Vec<(usize, usize, f64)>,
}

impl MultiplierBootstrap {
    pub fn new(est: &BackwardEstimator, grid: &[f64]) -> Result<Self> {
        let grid = normalize_grid(grid, est.window().tau0)?;
        let contributors = est.contributors();
        let m = contributors.len();
        let n = est.n() as f64;
        let mass = est.mass();
        let root_n = libm::sqrt(n);

        let mut tie_end = vec![m; m];
        for j in (0..m.saturating_sub(1)).rev() {
            tie_end[j] = if contributors[j].x == contributors[j + 1].x {
                tie_end[j + 1]
            } else {
                j + 1
            };
        }
        let mut events = Vec::new();
        for (j, c) in contributors.iter().enumerate() {
            for &(v, mark) in &c.offsets {
                let k = grid.partition_point(|&g| g < v);
                if k < grid.len() {
                    events.push((k, j, mark));
                }
            }
        }
        events.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)));

        Ok(MultiplierBootstrap {
            coef: contributors
                .iter()
                .map(|c| 1.0 / (root_n * c.r_x * mass))
                .collect(),
            s_x: contributors.iter().map(|c| c.s_x).collect(),
            h_coef: contributors
                .iter()
                .map(|c| c.s_x / (n * c.r_x * mass))
                .collect(),
            tie_end,
            s_t1: est.s_t1(),
            s_t2: est.s_t2(),
            events,
            grid,
        })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn contributor_count(&self) -> usize {
        self.coef.len()
    }

    /// `W(u)` on the grid for one set of multipliers, one per contributor in
    /// `x` order.
    pub fn draw(&self, multipliers: &[f64]) -> Vec<f64> {
        let mut w = vec![0.0; self.grid.len()];
        self.draw_into(multipliers, &mut Vec::new(), &mut w);
        w
    }

    fn draw_into(&self, multipliers: &[f64], scratch: &mut Vec<f64>, w: &mut [f64]) {
        let m = self.coef.len();
        assert_eq!(multipliers.len(), m, "one multiplier per contributor");
        // scratch[0..=m]: prefix sums of c_i; scratch[m+1..]: β_j
        scratch.clear();
        scratch.resize(2 * m + 1, 0.0);
        for i in 0..m {
            scratch[i + 1] = scratch[i] + multipliers[i] * self.coef[i];
        }
        let total = scratch[m];
        for j in 0..m {
            let upto = scratch[self.tie_end[j]];
            let c_j = multipliers[j] * self.coef[j];
            scratch[m + 1 + j] = c_j * self.s_x[j]
                - self.h_coef[j] * (self.s_t1 * upto + self.s_t2 * (total - upto));
        }
        w.iter_mut().for_each(|x| *x = 0.0);
        for &(k, j, mark) in &self.events {
            w[k] += scratch[m + 1 + j] * mark;
        }
        for k in 1..w.len() {
            w[k] += w[k - 1];
        }
    }

    /// Standard normal multipliers for replicate `index`.
    pub fn multipliers(&self, seed: u64, index: u64) -> Vec<f64> {
        let mut rng = indexed_stream(seed, index);
        (0..self.coef.len())
            .map(|_| rng.sample(StandardNormal))
            .collect()
    }

    /// `(max_u |W(u)|, max_{σ̂(u) > 0} |W(u)| / σ̂(u))` for replicate `index`.
    ///
    /// The second component is `None` when `σ̂` vanishes on the whole grid.
    pub fn replicate_maxima(&self, sigma: &[f64], seed: u64, index: u64) -> (f64, Option<f64>) {
        let g = self.multipliers(seed, index);
        let w = self.draw(&g);
        sup_statistics(&w, sigma)
    }
}

fn sup_statistics(w: &[f64], sigma: &[f64]) -> (f64, Option<f64>) {
    let mut plain = 0.0f64;
    let mut studentized: Option<f64> = None;
    for (wk, &sk) in w.iter().zip(sigma) {
        plain = plain.max(wk.abs());
        if sk > 0.0 {
            let t = wk.abs() / sk;
            studentized = Some(studentized.map_or(t, |s| s.max(t)));
        }
    }
    (plain, studentized)
}

/// Critical values from the multiplier bootstrap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticalValues {
    /// For the plain band.
    pub b: f64,
    /// For the log-transformed band.
    pub b_star: f64,
    pub alpha: f64,
    pub replicates: usize,
    pub seed: u64,
}

/// Order statistic at 1-based index `ceil((1 - alpha) m)`.
pub fn upper_quantile(values: &mut [f64], alpha: f64) -> f64 {
    values.sort_by(f64::total_cmp);
    let m = values.len();
    let rank = libm::ceil((1.0 - alpha) * m as f64 - 1e-9) as usize;
    values[rank.clamp(1, m) - 1]
}

/// Turns per-replicate maxima into `(b, b*)`.
pub fn critical_from_maxima(
    maxima: &[(f64, Option<f64>)],
    alpha: f64,
    seed: u64,
) -> Result<CriticalValues> {
    check_alpha(alpha)?;
    if maxima.is_empty() {
        return Err(Error::Empty("bootstrap replicates"));
    }
    let mut plain: Vec<f64> = maxima.iter().map(|m| m.0).collect();
    let mut studentized = maxima
        .iter()
        .map(|m| m.1)
        .collect::<Option<Vec<f64>>>()
        .ok_or(Error::ZeroSigma)?;
    Ok(CriticalValues {
        b: upper_quantile(&mut plain, alpha),
        b_star: upper_quantile(&mut studentized, alpha),
        alpha,
        replicates: maxima.len(),
        seed,
    })
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument {
            name: "alpha",
            value: alpha,
            expected: "(0, 1)",
        })
    }
}

/// `(b, b*)` from `replicates` multiplier draws.
///
/// Grid points where `σ̂ = 0` are left out of the `b*` maximum.
pub fn band_critical_values(
    boot: &MultiplierBootstrap,
    sigma: &[f64],
    replicates: usize,
    alpha: f64,
    seed: u64,
) -> Result<CriticalValues> {
    check_alpha(alpha)?;
    if replicates == 0 {
        return Err(Error::Empty("bootstrap replicates"));
    }
    assert_eq!(sigma.len(), boot.grid.len());
    if sigma.iter().all(|&s| !(s > 0.0)) {
        return Err(Error::ZeroSigma);
    }
    let mut g = vec![0.0; boot.contributor_count()];
    let mut w = vec![0.0; boot.grid.len()];
    let mut scratch = Vec::new();
    let maxima: Vec<(f64, Option<f64>)> = (0..replicates as u64)
        .map(|k| {
            let mut rng = indexed_stream(seed, k);
            g.iter_mut().for_each(|x| *x = rng.sample(StandardNormal));
            boot.draw_into(&g, &mut scratch, &mut w);
            sup_statistics(&w, sigma)
        })
        .collect();
    critical_from_maxima(&maxima, alpha, seed)
}

/// Shape of a simultaneous band.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BandKind {
    /// `μ̂ ± n^{-1/2} b σ̂`.
    Plain,
    /// `μ̂ exp(± n^{-1/2} b* σ̂ / μ̂)`.
    Log,
    /// `μ̂ ± n^{-1/2} b`.
    #[default]
    EqualWidth,
}

impl BandKind {
    pub fn name(self) -> &'static str {
        match self {
            BandKind::Plain => "plain",
            BandKind::Log => "log",
            BandKind::EqualWidth => "equal-width",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "plain" => Some(BandKind::Plain),
            "log" => Some(BandKind::Log),
            "equal-width" => Some(BandKind::EqualWidth),
            _ => None,
        }
    }
}

/// A simultaneous band on the curve's grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BandResult {
    pub grid: Vec<f64>,
    pub kind: BandKind,
    pub critical: CriticalValues,
    /// `None` where a log band is undefined (`μ̂ <= 0`).
    pub intervals: Vec<Option<Interval>>,
    /// Grid points left out of a log band.
    pub excluded: Vec<f64>,
    /// Set when the band is narrower than the pointwise interval somewhere.
    pub below_pointwise: bool,
}

impl BandResult {
    /// The critical value actually used.
    pub fn critical_value(&self) -> f64 {
        match self.kind {
            BandKind::Plain | BandKind::EqualWidth => self.critical.b,
            BandKind::Log => self.critical.b_star,
        }
    }
}

pub fn bands(curve: &BackwardCurve, critical: &CriticalValues, kind: BandKind) -> BandResult {
    let root_n = libm::sqrt(curve.n as f64);
    let z = normal::quantile(1.0 - 0.5 * critical.alpha);
    let mut excluded = Vec::new();
    let mut below = false;
    let intervals = curve
        .grid
        .iter()
        .zip(curve.mu.iter().zip(&curve.sigma))
        .map(|(&u, (&mu, &sigma))| {
            let iv = match kind {
                BandKind::Plain => interval(mu, sigma, root_n, critical.b, IntervalKind::Plain),
                BandKind::Log => interval(mu, sigma, root_n, critical.b_star, IntervalKind::Log),
                BandKind::EqualWidth => interval(mu, 1.0, root_n, critical.b, IntervalKind::Plain),
            };
            below |= match kind {
                BandKind::Plain => critical.b < z,
                BandKind::Log => critical.b_star < z,
                BandKind::EqualWidth => critical.b < z * sigma,
            };
            if iv.is_none() {
                excluded.push(u);
            }
            iv
        })
        .collect();
    BandResult {
        grid: curve.grid.clone(),
        kind,
        critical: *critical,
        intervals,
        excluded,
        below_pointwise: critical.replicates >= 200 && below,
    }
}

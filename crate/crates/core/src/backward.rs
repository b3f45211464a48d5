//! Backward mean estimation.
//!
//! For a window `t1 <= T < t2` the backward mean
//! `μ(u) = E(V(u) | t1 <= T < t2)` is estimated by weighting each
//! uncensored failure in the window by `Ŝ(x_i)/R(x_i)`:
//!
//! ```text
//! μ̂(u) = [n (Ŝ(t1) - Ŝ(t2))]⁻¹ Σ_i Ŝ(x_i) Δ_i V_i(u) I(t1 <= x_i < t2) / R(x_i)
//! ```
//!
//! The weights sum to `Ŝ(t1) - Ŝ(t2)` exactly (up to round-off), so with
//! complete data the estimator is the plain in-window sample mean.
//!
//! The asymptotic covariance is estimated in Gram form,
//! `Σ̂(u, v) = n⁻¹ Σ_i c_i² a_i(u) a_i(v)` with
//! `a_i(u) = Ŝ(x_i) V_i(u) - Ĥ(x_i, u) / (Ŝ(t1) - Ŝ(t2))` and
//! `c_i = 1 / (R(x_i) (Ŝ(t1) - Ŝ(t2)))`, which is positive semidefinite by
//! construction. The variance of `μ̂(u)` is `Σ̂(u, u) / n`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{check_finite_range, Error, Result};
use crate::model::{Cohort, EstimandWindow};
use crate::normal;
use crate::survival::{product_limit, SurvivalCurve};

/// `Λ̂^V(t, u) = n⁻¹ Σ_i Δ_i I(tau0 <= x_i <= t) V_i(u) / R(x_i)`, the
/// cumulative mark-specific hazard.
pub fn marked_cum_hazard(
    cohort: &Cohort,
    curve: &SurvivalCurve,
    tau0: f64,
    t: f64,
    u: f64,
) -> Result<f64> {
    check_finite_range("u", u, 0.0, tau0, "[0, tau0]")?;
    if !(t >= tau0) {
        return Err(Error::InvalidArgument {
            name: "t",
            value: t,
            expected: "[tau0, inf)",
        });
    }
    let mut total = 0.0;
    for s in cohort.subjects() {
        if s.delta && tau0 <= s.x && s.x <= t {
            let r = curve.risk_at_event(s.x)?;
            total += s.backward_value(u)? / r;
        }
    }
    Ok(total / cohort.n() as f64)
}

/// An uncensored failure inside the estimation window.
#[derive(Debug, Clone)]
pub(crate) struct Contributor {
    pub subject: usize,
    pub x: f64,
    /// Left-continuous `Ŝ(x)`.
    pub s_x: f64,
    /// `R(x)`.
    pub r_x: f64,
    /// `(offset, mark)` with offset in `[0, tau0]`, ascending.
    pub offsets: Vec<(f64, f64)>,
}

impl Contributor {
    pub fn value(&self, u: f64) -> f64 {
        self.offsets
            .iter()
            .take_while(|(v, _)| *v <= u)
            .map(|(_, m)| m)
            .sum()
    }
}

/// Precomputed state for all estimators that share a cohort and a window.
#[derive(Debug, Clone)]
pub struct BackwardEstimator {
    window: EstimandWindow,
    n: usize,
    curve: SurvivalCurve,
    s_t1: f64,
    s_t2: f64,
    /// Contributors sorted by `x` (ties by subject order).
    contributors: Vec<Contributor>,
}

impl BackwardEstimator {
    pub fn new(cohort: &Cohort, window: EstimandWindow) -> Result<Self> {
        let curve = product_limit(cohort)?;
        Self::with_curve(cohort, curve, window)
    }

    /// Reuses a product-limit curve already computed from `cohort`.
    pub fn with_curve(
        cohort: &Cohort,
        curve: SurvivalCurve,
        window: EstimandWindow,
    ) -> Result<Self> {
        let s_t1 = curve.survival_at(window.t1);
        let s_t2 = curve.survival_at(window.t2);
        if !(s_t1 > s_t2) {
            return Err(Error::DegenerateWindow {
                t1: window.t1,
                t2: window.t2,
            });
        }
        let mut contributors = Vec::new();
        for (i, s) in cohort.subjects().iter().enumerate() {
            if !(s.delta && window.contains(s.x)) {
                continue;
            }
            let offsets = s
                .backward_offsets()
                .take_while(|(v, _)| *v <= window.tau0)
                .collect();
            contributors.push(Contributor {
                subject: i,
                x: s.x,
                s_x: curve.survival_at(s.x),
                r_x: curve.risk_at_event(s.x)?,
                offsets,
            });
        }
        contributors.sort_by(|a, b| a.x.total_cmp(&b.x));
        Ok(BackwardEstimator {
            window,
            n: cohort.n(),
            curve,
            s_t1,
            s_t2,
            contributors,
        })
    }

    pub fn window(&self) -> EstimandWindow {
        self.window
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn survival(&self) -> &SurvivalCurve {
        &self.curve
    }

    /// `Ŝ(t1) - Ŝ(t2)`, the failure mass in the window.
    pub fn mass(&self) -> f64 {
        self.s_t1 - self.s_t2
    }

    pub fn s_t1(&self) -> f64 {
        self.s_t1
    }

    pub fn s_t2(&self) -> f64 {
        self.s_t2
    }

    /// Number of uncensored failures inside the window.
    pub fn contributor_count(&self) -> usize {
        self.contributors.len()
    }

    pub(crate) fn contributors(&self) -> &[Contributor] {
        &self.contributors
    }

    /// Cohort indices of the contributing subjects, in `x` order.
    pub fn contributor_subjects(&self) -> impl Iterator<Item = usize> + '_ {
        self.contributors.iter().map(|c| c.subject)
    }

    /// Unnormalised weights `Ŝ(x_i) / (n R(x_i))`, in `x` order.
    pub fn weights(&self) -> impl Iterator<Item = f64> + '_ {
        let n = self.n as f64;
        self.contributors.iter().map(move |c| c.s_x / (n * c.r_x))
    }

    /// `n⁻¹ Σ Ŝ(x_i) Δ_i I(t1 <= x_i < t2) / R(x_i)`; equals [`Self::mass`]
    /// up to round-off.
    pub fn weight_total(&self) -> f64 {
        self.weights().sum()
    }

    /// `μ̂_{t1,t2}(u)`.
    pub fn mean(&self, u: f64) -> Result<f64> {
        self.window.check_backward_time(u)?;
        let num: f64 = self
            .contributors
            .iter()
            .map(|c| c.s_x / c.r_x * c.value(u))
            .sum();
        Ok(num / (self.n as f64 * self.mass()))
    }

    /// `Ĥ_{t1,t2}(s, u)`.
    pub fn h_hat(&self, s: f64, u: f64) -> Result<f64> {
        self.window.check_backward_time(u)?;
        let (t1, t2) = (self.window.t1, self.window.t2);
        let mut total = 0.0;
        for c in &self.contributors {
            let factor = if t1 <= s && s <= c.x && c.x < t2 {
                self.s_t1
            } else if t1 <= c.x && c.x < s && s <= t2 {
                self.s_t2
            } else {
                continue;
            };
            total += c.value(u) * c.s_x * factor / c.r_x;
        }
        Ok(total / self.n as f64)
    }

    fn influence_term(&self, c: &Contributor, u: f64) -> Result<f64> {
        Ok(c.s_x * c.value(u) - self.h_hat(c.x, u)? / self.mass())
    }

    /// `Σ̂_{t1,t2}(u, v)`, evaluated term by term. Quadratic in the number of
    /// contributors; [`Self::influence`] is the fast path for whole grids.
    pub fn covariance(&self, u: f64, v: f64) -> Result<f64> {
        self.window.check_backward_time(v)?;
        let mass = self.mass();
        let mut total = 0.0;
        for c in &self.contributors {
            let scale = 1.0 / (c.r_x * c.r_x * mass * mass);
            total += scale * self.influence_term(c, u)? * self.influence_term(c, v)?;
        }
        Ok(total / self.n as f64)
    }

    /// `{0} ∪ {backward event offsets of contributors in [0, tau0]} ∪ {tau0}`.
    ///
    /// `μ̂` and `σ̂` are right-continuous step functions that only change at
    /// these points.
    pub fn default_grid(&self) -> Vec<f64> {
        let mut grid: Vec<f64> = self
            .contributors
            .iter()
            .flat_map(|c| c.offsets.iter().map(|(v, _)| *v))
            .collect();
        grid.push(0.0);
        grid.push(self.window.tau0);
        grid.sort_by(f64::total_cmp);
        grid.dedup();
        grid
    }

    /// Influence terms `a_i(u)` of every contributor on `grid`.
    ///
    /// `grid` is sorted and deduplicated; every point must lie in `[0, tau0]`.
    pub fn influence(&self, grid: &[f64]) -> Result<Influence> {
        let grid = normalize_grid(grid, self.window.tau0)?;
        let m = self.contributors.len();
        let g = grid.len();
        let mass = self.mass();
        let n = self.n as f64;

        // first contributor index sharing each contributor's x
        let mut tie_start = vec![0usize; m];
        for i in 1..m {
            tie_start[i] = if self.contributors[i].x == self.contributors[i - 1].x {
                tie_start[i - 1]
            } else {
                i
            };
        }
        let rho: Vec<f64> = self.contributors.iter().map(|c| c.s_x / c.r_x).collect();

        let mut events: Vec<(f64, usize, f64)> = self
            .contributors
            .iter()
            .enumerate()
            .flat_map(|(j, c)| c.offsets.iter().map(move |&(v, mark)| (v, j, mark)))
            .collect();
        events.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

        let mut values = vec![0.0; m];
        let mut suffix = vec![0.0; m + 1];
        let mut a = vec![0.0; m * g];
        let mut mu = vec![0.0; g];
        let mut next = 0;
        for (k, &u) in grid.iter().enumerate() {
            while next < events.len() && events[next].0 <= u {
                let (_, j, mark) = events[next];
                values[j] += mark;
                next += 1;
            }
            for j in (0..m).rev() {
                suffix[j] = suffix[j + 1] + rho[j] * values[j];
            }
            let total = suffix[0];
            mu[k] = total / (n * mass);
            for i in 0..m {
                let later = suffix[tie_start[i]];
                let h = (self.s_t1 * later + self.s_t2 * (total - later)) / n;
                a[i * g + k] = self.contributors[i].s_x * values[i] - h / mass;
            }
        }
        let scale = self
            .contributors
            .iter()
            .map(|c| 1.0 / (c.r_x * mass))
            .collect();
        Ok(Influence {
            grid,
            n: self.n,
            scale,
            a,
            mu,
        })
    }

    /// `μ̂` and `σ̂` on `grid`, or on [`Self::default_grid`] when `None`.
    pub fn curve(&self, grid: Option<&[f64]>) -> Result<BackwardCurve> {
        let influence = match grid {
            Some(g) => self.influence(g)?,
            None => self.influence(&self.default_grid())?,
        };
        Ok(influence.to_curve(self.window))
    }
}

pub(crate) fn normalize_grid(grid: &[f64], tau0: f64) -> Result<Vec<f64>> {
    if grid.is_empty() {
        return Err(Error::Empty("grid"));
    }
    for &u in grid {
        check_finite_range("u", u, 0.0, tau0, "[0, tau0]")?;
    }
    let mut grid = grid.to_vec();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    Ok(grid)
}

/// Per-contributor influence terms on a grid.
#[derive(Debug, Clone)]
pub struct Influence {
    grid: Vec<f64>,
    n: usize,
    /// `1 / (R(x_i) (Ŝ(t1) - Ŝ(t2)))`.
    scale: Vec<f64>,
    /// Row-major `contributors × grid`.
    a: Vec<f64>,
    mu: Vec<f64>,
}

impl Influence {
    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn contributor_count(&self) -> usize {
        self.scale.len()
    }

    /// `a_i(u_k)`.
    pub fn term(&self, i: usize, k: usize) -> f64 {
        self.a[i * self.grid.len() + k]
    }

    /// `c_i a_i(u_k)`, the summand of the bootstrap process.
    pub fn scaled_term(&self, i: usize, k: usize) -> f64 {
        self.scale[i] * self.term(i, k)
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    /// `Σ̂(u_k, u_l)`.
    pub fn covariance(&self, k: usize, l: usize) -> f64 {
        let total: f64 = (0..self.scale.len())
            .map(|i| self.scaled_term(i, k) * self.scaled_term(i, l))
            .sum();
        total / self.n as f64
    }

    pub fn covariance_matrix(&self) -> Vec<Vec<f64>> {
        let g = self.grid.len();
        (0..g)
            .map(|k| (0..g).map(|l| self.covariance(k, l)).collect())
            .collect()
    }

    pub fn sigma(&self) -> Vec<f64> {
        let g = self.grid.len();
        let mut var = vec![0.0; g];
        for i in 0..self.scale.len() {
            for (k, v) in var.iter_mut().enumerate() {
                let t = self.scaled_term(i, k);
                *v += t * t;
            }
        }
        var.into_iter()
            .map(|v| libm::sqrt(v / self.n as f64))
            .collect()
    }

    /// `W(u) = n^{-1/2} Σ_i G_i c_i a_i(u)` for one set of multipliers, one
    /// per contributor in `x` order.
    pub fn draw(&self, multipliers: &[f64]) -> Vec<f64> {
        assert_eq!(
            multipliers.len(),
            self.scale.len(),
            "one multiplier per contributor"
        );
        let g = self.grid.len();
        let root_n = libm::sqrt(self.n as f64);
        let mut w = vec![0.0; g];
        for (i, &gi) in multipliers.iter().enumerate() {
            for (k, wk) in w.iter_mut().enumerate() {
                *wk += gi * self.scaled_term(i, k);
            }
        }
        w.iter_mut().for_each(|x| *x /= root_n);
        w
    }

    pub fn to_curve(&self, window: EstimandWindow) -> BackwardCurve {
        BackwardCurve {
            window,
            grid: self.grid.clone(),
            mu: self.mu.clone(),
            sigma: self.sigma(),
            n: self.n,
        }
    }
}

/// `μ̂` and `σ̂ = Σ̂(u, u)^{1/2}` tabulated on a grid of backward times.
#[derive(Debug, Clone, PartialEq)]
pub struct BackwardCurve {
    pub window: EstimandWindow,
    pub grid: Vec<f64>,
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntervalKind {
    Plain,
    /// `μ̂ exp(± c σ̂ / μ̂)`, always nonnegative.
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn contains(&self, value: f64) -> bool {
        self.lo <= value && value <= self.hi
    }
}

impl BackwardCurve {
    /// Standard error `σ̂(u) / √n` at each grid point.
    pub fn se(&self) -> Vec<f64> {
        let root_n = libm::sqrt(self.n as f64);
        self.sigma.iter().map(|s| s / root_n).collect()
    }

    /// Index of the last grid point `<= u`.
    pub fn index_at(&self, u: f64) -> Option<usize> {
        self.grid.partition_point(|&g| g <= u).checked_sub(1)
    }

    /// `(μ̂(u), σ̂(u))` by step lookup. Exact for the default grid.
    pub fn at(&self, u: f64) -> Option<(f64, f64)> {
        self.index_at(u).map(|k| (self.mu[k], self.sigma[k]))
    }

    /// Interval `μ̂ ± n^{-1/2} c σ̂` (or its log form) at every grid point.
    pub fn intervals(&self, critical: f64, kind: IntervalKind) -> Result<Vec<Interval>> {
        let root_n = libm::sqrt(self.n as f64);
        self.grid
            .iter()
            .zip(self.mu.iter().zip(&self.sigma))
            .map(|(&u, (&mu, &sigma))| {
                interval(mu, sigma, root_n, critical, kind).ok_or(Error::NonPositiveMean { u })
            })
            .collect()
    }

    /// Pointwise `level` confidence intervals.
    pub fn pointwise_ci(&self, level: f64, kind: IntervalKind) -> Result<Vec<Interval>> {
        pointwise_ci(self, level, kind)
    }
}

/// `μ̂ ± critical σ̂ / √n`, or its log-scale analogue; `None` for a log
/// interval at `μ̂ <= 0`.
pub fn interval(
    mu: f64,
    sigma: f64,
    root_n: f64,
    critical: f64,
    kind: IntervalKind,
) -> Option<Interval> {
    let half = critical * sigma / root_n;
    match kind {
        IntervalKind::Plain => Some(Interval {
            lo: mu - half,
            hi: mu + half,
        }),
        IntervalKind::Log if mu > 0.0 => {
            let f = libm::exp(half / mu);
            Some(Interval {
                lo: mu / f,
                hi: mu * f,
            })
        }
        IntervalKind::Log => None,
    }
}

/// `μ̂(u) ± n^{-1/2} z_{1-α/2} σ̂(u)` with `α = 1 - level`.
pub fn pointwise_ci(
    curve: &BackwardCurve,
    level: f64,
    kind: IntervalKind,
) -> Result<Vec<Interval>> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument {
            name: "level",
            value: level,
            expected: "(0, 1)",
        });
    }
    curve.intervals(normal::two_sided_critical(level), kind)
}

/// One-shot `μ̂_{t1,t2}(u)`.
pub fn backward_mean(cohort: &Cohort, window: EstimandWindow, u: f64) -> Result<f64> {
    BackwardEstimator::new(cohort, window)?.mean(u)
}

/// One-shot `Ĥ_{t1,t2}(s, u)`.
pub fn h_hat(cohort: &Cohort, window: EstimandWindow, s: f64, u: f64) -> Result<f64> {
    BackwardEstimator::new(cohort, window)?.h_hat(s, u)
}

/// One-shot `Σ̂_{t1,t2}(u, v)`.
pub fn covariance(cohort: &Cohort, window: EstimandWindow, u: f64, v: f64) -> Result<f64> {
    BackwardEstimator::new(cohort, window)?.covariance(u, v)
}

//! Risk sets and the product-limit estimator under left truncation and
//! right censoring.
//!
//! **Convention.** `Ŝ(t)` estimates `P(T >= t)`: it is left-continuous, so
//! the value at an event time is the survival probability just before the
//! failures at that time. Every weight `Ŝ(x)/R(x)` elsewhere in the crate
//! uses this value; with complete data it makes the weight exactly one.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::model::Cohort;

/// Fraction of subjects at risk at `t`: `n⁻¹ Σ I(w_i <= t <= x_i)`.
pub fn risk_fraction(cohort: &Cohort, t: f64) -> f64 {
    let at_risk = cohort
        .subjects()
        .iter()
        .filter(|s| s.w <= t && t <= s.x)
        .count();
    at_risk as f64 / cohort.n() as f64
}

/// Sorted truncation and observation times for `O(log n)` risk-set queries.
#[derive(Debug, Clone)]
pub struct RiskSet {
    entries: Vec<f64>,
    exits: Vec<f64>,
}

impl RiskSet {
    pub fn new(cohort: &Cohort) -> Self {
        let mut entries: Vec<f64> = cohort.subjects().iter().map(|s| s.w).collect();
        let mut exits: Vec<f64> = cohort.subjects().iter().map(|s| s.x).collect();
        entries.sort_by(f64::total_cmp);
        exits.sort_by(f64::total_cmp);
        RiskSet { entries, exits }
    }

    /// Number of subjects with `w <= t <= x`.
    pub fn count(&self, t: f64) -> usize {
        // w <= x, so every subject with x < t also has w <= t.
        let entered = self.entries.partition_point(|&w| w <= t);
        let left = self.exits.partition_point(|&x| x < t);
        entered - left
    }

    pub fn fraction(&self, t: f64) -> f64 {
        self.count(t) as f64 / self.entries.len() as f64
    }
}

/// Product-limit estimate with its risk-set fractions and cumulative hazard,
/// tabulated at the distinct uncensored times.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalCurve {
    event_times: Vec<f64>,
    risk_fraction: Vec<f64>,
    jump: Vec<f64>,
    /// `prefix[k]` is the product of the first `k` factors; `prefix[k]` is
    /// therefore `Ŝ` at `event_times[k]` and `prefix[len]` is `Ŝ` after the
    /// last event.
    prefix: Vec<f64>,
    cum_hazard: Vec<f64>,
    n: usize,
}

/// Estimates `S(t) = P(T >= t)` from left-truncated right-censored data.
///
/// Subjects censored at an event time stay in that time's risk set.
pub fn product_limit(cohort: &Cohort) -> Result<SurvivalCurve> {
    let event_times = cohort.event_times().to_vec();
    if event_times.is_empty() {
        return Err(Error::NoFailures);
    }
    let n = cohort.n();
    let mut deaths: Vec<f64> = cohort
        .subjects()
        .iter()
        .filter(|s| s.delta)
        .map(|s| s.x)
        .collect();
    deaths.sort_by(f64::total_cmp);

    let risk = RiskSet::new(cohort);
    let mut risk_fraction = Vec::with_capacity(event_times.len());
    let mut jump = Vec::with_capacity(event_times.len());
    let mut prefix = Vec::with_capacity(event_times.len() + 1);
    let mut cum_hazard = Vec::with_capacity(event_times.len());
    let mut s = 1.0;
    let mut lambda = 0.0;
    let mut d_start = 0;
    prefix.push(s);
    for &t in &event_times {
        let d_end = d_start + deaths[d_start..].partition_point(|&x| x <= t);
        let d = (d_end - d_start) as f64;
        d_start = d_end;
        let at_risk = risk.count(t);
        if at_risk == 0 {
            return Err(Error::EmptyRiskSet { time: t });
        }
        let r = at_risk as f64;
        let h = d / r;
        risk_fraction.push(r / n as f64);
        jump.push(h);
        lambda += h;
        cum_hazard.push(lambda);
        s *= (r - d) / r;
        prefix.push(s);
    }
    Ok(SurvivalCurve {
        event_times,
        risk_fraction,
        jump,
        prefix,
        cum_hazard,
        n,
    })
}

impl SurvivalCurve {
    pub fn event_times(&self) -> &[f64] {
        &self.event_times
    }

    /// `R(s)` at each event time.
    pub fn risk_fraction(&self) -> &[f64] {
        &self.risk_fraction
    }

    /// Hazard increment `dN(s)/R(s)` at each event time.
    pub fn jump(&self) -> &[f64] {
        &self.jump
    }

    /// Left-continuous `Ŝ(s)` at each event time.
    pub fn s_left(&self) -> &[f64] {
        &self.prefix[..self.event_times.len()]
    }

    /// `Ŝ` after the last event time.
    pub fn s_final(&self) -> f64 {
        self.prefix[self.event_times.len()]
    }

    pub fn cum_hazard(&self) -> &[f64] {
        &self.cum_hazard
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `Ŝ(t) = P̂(T >= t)`.
    pub fn survival_at(&self, t: f64) -> f64 {
        self.prefix[self.event_times.partition_point(|&s| s < t)]
    }

    /// `Ŝ(t⁺) = P̂(T > t)`.
    pub fn survival_after(&self, t: f64) -> f64 {
        self.prefix[self.event_times.partition_point(|&s| s <= t)]
    }

    /// `Λ̂_T(t) = Σ_{s <= t} dN(s)/R(s)`.
    pub fn cum_hazard_at(&self, t: f64) -> f64 {
        match self.event_times.partition_point(|&s| s <= t) {
            0 => 0.0,
            k => self.cum_hazard[k - 1],
        }
    }

    /// Index of `t` among the event times, if it is one.
    pub fn event_index(&self, t: f64) -> Option<usize> {
        let k = self.event_times.partition_point(|&s| s < t);
        (k < self.event_times.len() && self.event_times[k] == t).then_some(k)
    }

    /// `R(t)` at an uncensored time `t`.
    pub(crate) fn risk_at_event(&self, t: f64) -> Result<f64> {
        self.event_index(t)
            .map(|k| self.risk_fraction[k])
            .ok_or(Error::EmptyRiskSet { time: t })
    }
}

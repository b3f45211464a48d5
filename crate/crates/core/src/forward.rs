//! Forward mean function `μ̂_Y(t)`, for contrast with backward curves.
//!
//! `μ̂_Y(t) = n⁻¹ Σ_i Σ_{(s, q) of i, w_i <= s <= t} Ŝ(s) q / R(s)`.
//! Each recorded increment is reweighted by the left-continuous `Ŝ` and
//! the risk fraction at its time; with complete data the weight is one.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::model::Cohort;
use crate::survival::{product_limit, RiskSet, SurvivalCurve};

/// Reweighted increments sorted by time, ready for repeated evaluation.
#[derive(Debug, Clone)]
pub struct ForwardMean {
    times: Vec<f64>,
    /// Running sum of `Ŝ(s) q / (n R(s))` up to and including `times[k]`.
    cumulative: Vec<f64>,
}

impl ForwardMean {
    pub fn new(cohort: &Cohort) -> Result<Self> {
        let curve = product_limit(cohort)?;
        Self::with_curve(cohort, &curve)
    }

    pub fn with_curve(cohort: &Cohort, curve: &SurvivalCurve) -> Result<Self> {
        let risk = RiskSet::new(cohort);
        let n = cohort.n() as f64;
        let mut terms: Vec<(f64, f64)> = Vec::new();
        for s in cohort.subjects() {
            // events before the truncation time in force are not part of
            // the I(W <= s <= C) observation window
            for e in s.events.iter().filter(|e| e.time >= s.w) {
                let r = risk.fraction(e.time);
                if !(r > 0.0) {
                    return Err(Error::EmptyRiskSet { time: e.time });
                }
                terms.push((e.time, curve.survival_at(e.time) * e.mark / (n * r)));
            }
        }
        terms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut total = 0.0;
        let (times, cumulative) = terms
            .into_iter()
            .map(|(t, v)| {
                total += v;
                (t, total)
            })
            .unzip();
        Ok(ForwardMean { times, cumulative })
    }

    /// `μ̂_Y(t)`.
    pub fn at(&self, t: f64) -> f64 {
        match self.times.partition_point(|&s| s <= t) {
            0 => 0.0,
            k => self.cumulative[k - 1],
        }
    }

    /// Times at which `μ̂_Y` jumps.
    pub fn jump_times(&self) -> &[f64] {
        &self.times
    }
}

/// One-shot `μ̂_Y(t)`.
pub fn forward_mean(cohort: &Cohort, t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::InvalidArgument {
            name: "t",
            value: t,
            expected: "[0, inf)",
        });
    }
    Ok(ForwardMean::new(cohort)?.at(t))
}

//! Distribution, percentiles and correlation of `V(u)` within the window.
//!
//! All three reuse the backward-mean weights `Ŝ(x_i) / (n R(x_i))`, which
//! turn the in-window uncensored failures into a weighted sample whose
//! total weight is `Ŝ(t1) - Ŝ(t2)`.

use alloc::vec::Vec;

use crate::backward::BackwardEstimator;
use crate::error::{Error, Result};
use crate::model::{Cohort, EstimandWindow};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedPoint {
    pub value: f64,
    pub x: f64,
    pub weight: f64,
}

/// In-window uncensored failures with their `V_i(u)` and weights.
#[derive(Debug, Clone)]
pub struct WeightedSample {
    window: EstimandWindow,
    u: f64,
    points: Vec<WeightedPoint>,
    normalizer: f64,
}

impl WeightedSample {
    pub fn new(est: &BackwardEstimator, u: f64) -> Result<Self> {
        let window = est.window();
        window.check_backward_time(u)?;
        let points = est
            .contributors()
            .iter()
            .zip(est.weights())
            .map(|(c, weight)| WeightedPoint {
                value: c.value(u),
                x: c.x,
                weight,
            })
            .collect();
        Ok(WeightedSample {
            window,
            u,
            points,
            normalizer: est.mass(),
        })
    }

    pub fn points(&self) -> &[WeightedPoint] {
        &self.points
    }

    pub fn u(&self) -> f64 {
        self.u
    }

    /// `Ŝ(t1) - Ŝ(t2)`.
    pub fn normalizer(&self) -> f64 {
        self.normalizer
    }

    /// `p̂(m, t, u)`: weighted fraction with `V(u) <= m` and `t1 <= x <= t`.
    pub fn joint_cdf(&self, m: f64, t: f64) -> Result<f64> {
        if !(t >= self.window.t1 && t < self.window.t2) {
            return Err(Error::InvalidArgument {
                name: "t",
                value: t,
                expected: "[t1, t2)",
            });
        }
        Ok(self.cdf_where(|p| p.value <= m && p.x <= t))
    }

    /// `p̂(m, t2⁻, u)`, the conditional CDF of `V(u)`.
    pub fn marginal_cdf(&self, m: f64) -> f64 {
        self.cdf_where(|p| p.value <= m)
    }

    fn cdf_where(&self, keep: impl Fn(&WeightedPoint) -> bool) -> f64 {
        let w: f64 = self
            .points
            .iter()
            .filter(|p| keep(p))
            .map(|p| p.weight)
            .sum();
        w / self.normalizer
    }

    /// `φ_q(m, u)`: the percentile estimating function.
    pub fn estimating_fn(&self, m: f64, q: f64) -> Result<f64> {
        check_q(q)?;
        Ok(self.marginal_cdf(m) - q)
    }

    /// Smallest observed `V_i(u)` at which `φ_q` becomes nonnegative.
    pub fn percentile(&self, q: f64) -> Result<f64> {
        check_q(q)?;
        let mut sorted: Vec<&WeightedPoint> = self.points.iter().collect();
        if sorted.is_empty() {
            return Err(Error::TooFewSubjects {
                needed: 1,
                found: 0,
            });
        }
        sorted.sort_by(|a, b| a.value.total_cmp(&b.value));
        let target = q * self.normalizer;
        let mut cum = 0.0;
        let mut i = 0;
        while i < sorted.len() {
            let value = sorted[i].value;
            while i < sorted.len() && sorted[i].value == value {
                cum += sorted[i].weight;
                i += 1;
            }
            if cum >= target {
                return Ok(value);
            }
        }
        // round-off can leave the total a hair short of the normalizer
        Ok(sorted[sorted.len() - 1].value)
    }

    /// Weighted Pearson correlation between `V_i(u)` and `x_i`.
    pub fn pearson(&self) -> Result<f64> {
        let total: f64 = self.points.iter().map(|p| p.weight).sum();
        if self.points.len() < 2 || !(total > 0.0) {
            return Err(Error::TooFewSubjects {
                needed: 2,
                found: self.points.len(),
            });
        }
        let mean_v = self.points.iter().map(|p| p.weight * p.value).sum::<f64>() / total;
        let mean_x = self.points.iter().map(|p| p.weight * p.x).sum::<f64>() / total;
        let (mut svv, mut sxx, mut svx) = (0.0, 0.0, 0.0);
        for p in &self.points {
            let dv = p.value - mean_v;
            let dx = p.x - mean_x;
            svv += p.weight * dv * dv;
            sxx += p.weight * dx * dx;
            svx += p.weight * dv * dx;
        }
        let scale_v = self.points.iter().fold(0.0f64, |m, p| m.max(p.value.abs()));
        let scale_x = self.points.iter().fold(0.0f64, |m, p| m.max(p.x.abs()));
        if !(svv / total > (1e-12 * scale_v) * (1e-12 * scale_v)) {
            return Err(Error::DegenerateCorrelation("V(u)"));
        }
        if !(sxx / total > (1e-12 * scale_x) * (1e-12 * scale_x)) {
            return Err(Error::DegenerateCorrelation("T"));
        }
        Ok((svx / libm::sqrt(svv * sxx)).clamp(-1.0, 1.0))
    }
}

fn check_q(q: f64) -> Result<()> {
    if q > 0.0 && q < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument {
            name: "q",
            value: q,
            expected: "(0, 1)",
        })
    }
}

pub fn joint_cdf(cohort: &Cohort, window: EstimandWindow, m: f64, t: f64, u: f64) -> Result<f64> {
    WeightedSample::new(&BackwardEstimator::new(cohort, window)?, u)?.joint_cdf(m, t)
}

pub fn estimating_fn(
    cohort: &Cohort,
    window: EstimandWindow,
    m: f64,
    q: f64,
    u: f64,
) -> Result<f64> {
    WeightedSample::new(&BackwardEstimator::new(cohort, window)?, u)?.estimating_fn(m, q)
}

pub fn percentile(cohort: &Cohort, window: EstimandWindow, q: f64, u: f64) -> Result<f64> {
    WeightedSample::new(&BackwardEstimator::new(cohort, window)?, u)?.percentile(q)
}

pub fn pearson_correlation(cohort: &Cohort, window: EstimandWindow, u: f64) -> Result<f64> {
    WeightedSample::new(&BackwardEstimator::new(cohort, window)?, u)?.pearson()
}

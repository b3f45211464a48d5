//! Kernel-smoothed backward rate `r̂(u)`: the mean accrual rate of the
//! process `u` time units before failure.
//!
//! Each contributor's increments `dV_i` are smoothed into a subject rate
//! `v̂_i(u) = h⁻¹ Σ_v k((u - v)/h) dV_i(v)` over backward offsets
//! `v ∈ [0, tau0]`, and `r̂` is the weighted mean of the `v̂_i` with the
//! backward-mean weights. Equivalently `r̂` is the kernel smoothing of the
//! jumps of `μ̂`.
//!
//! No boundary correction is applied: within `h` of `u = 0` and `u = tau0`
//! part of the kernel mass falls outside `[0, tau0]` and `r̂` is biased
//! downward there.

use alloc::vec::Vec;

use crate::backward::{BackwardCurve, BackwardEstimator};
use crate::error::{check_finite_range, Error, Result};
use crate::model::{Cohort, EstimandWindow, SubjectRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Kernel {
    /// `3/4 (1 - z²)` on `[-1, 1]`.
    #[default]
    Epanechnikov,
    /// `1` on `[-1/2, 1/2]`.
    Uniform,
    /// `1 - |z|` on `[-1, 1]`.
    Triangular,
}

impl Kernel {
    pub fn eval(self, z: f64) -> f64 {
        match self {
            Kernel::Epanechnikov if z.abs() <= 1.0 => 0.75 * (1.0 - z * z),
            Kernel::Uniform if z.abs() <= 0.5 => 1.0,
            Kernel::Triangular if z.abs() <= 1.0 => 1.0 - z.abs(),
            _ => 0.0,
        }
    }

    /// Half-width of the support.
    pub fn radius(self) -> f64 {
        match self {
            Kernel::Uniform => 0.5,
            Kernel::Epanechnikov | Kernel::Triangular => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Kernel::Epanechnikov => "epanechnikov",
            Kernel::Uniform => "uniform",
            Kernel::Triangular => "triangular",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "epanechnikov" => Some(Kernel::Epanechnikov),
            "uniform" | "box" => Some(Kernel::Uniform),
            "triangular" => Some(Kernel::Triangular),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    pub kernel: Kernel,
    pub bandwidth: f64,
}

impl KernelSpec {
    pub fn new(kernel: Kernel, bandwidth: f64) -> Result<Self> {
        if bandwidth > 0.0 && bandwidth.is_finite() {
            Ok(KernelSpec { kernel, bandwidth })
        } else {
            Err(Error::InvalidArgument {
                name: "bandwidth",
                value: bandwidth,
                expected: "(0, inf)",
            })
        }
    }

    /// `h⁻¹ k((u - v) / h)`.
    pub fn weight(&self, u: f64, v: f64) -> f64 {
        self.kernel.eval((u - v) / self.bandwidth) / self.bandwidth
    }
}

/// `v̂_i(u)` for one uncensored subject.
pub fn subject_rate(subject: &SubjectRecord, u: f64, spec: &KernelSpec, tau0: f64) -> Result<f64> {
    if !subject.delta {
        return Err(Error::CensoredSubject {
            id: subject.id.clone(),
        });
    }
    check_finite_range("u", u, 0.0, tau0, "[0, tau0]")?;
    Ok(subject
        .backward_offsets()
        .take_while(|(v, _)| *v <= tau0)
        .map(|(v, mark)| spec.weight(u, v) * mark)
        .sum())
}

/// Weighted increments of all contributors, sorted by offset, for fast
/// evaluation of `r̂` and of the subject rates.
#[derive(Debug, Clone)]
pub struct RateEvaluator {
    tau0: f64,
    /// `(offset, π_i · mark, contributor)` by offset.
    atoms: Vec<(f64, f64, usize)>,
    /// Normalised weights `π_i = Ŝ(x_i) / (n R(x_i) D)`.
    pi: Vec<f64>,
    /// Per contributor `(offset, mark)`.
    subjects: Vec<Vec<(f64, f64)>>,
}

impl RateEvaluator {
    pub fn new(est: &BackwardEstimator) -> Self {
        let mass = est.mass();
        let pi: Vec<f64> = est.weights().map(|w| w / mass).collect();
        let subjects: Vec<Vec<(f64, f64)>> = est
            .contributors()
            .iter()
            .map(|c| c.offsets.clone())
            .collect();
        let mut atoms: Vec<(f64, f64, usize)> = subjects
            .iter()
            .enumerate()
            .flat_map(|(i, ev)| ev.iter().map(move |&(v, m)| (v, m, i)))
            .map(|(v, m, i)| (v, pi[i] * m, i))
            .collect();
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.2.cmp(&b.2)));
        RateEvaluator {
            tau0: est.window().tau0,
            atoms,
            pi,
            subjects,
        }
    }

    /// `r̂(u)`.
    pub fn rate(&self, u: f64, spec: &KernelSpec) -> f64 {
        let reach = spec.kernel.radius() * spec.bandwidth * (1.0 + 1e-9);
        let lo = self.atoms.partition_point(|a| a.0 < u - reach);
        self.atoms[lo..]
            .iter()
            .take_while(|a| a.0 <= u + reach)
            .map(|a| spec.weight(u, a.0) * a.1)
            .sum()
    }

    fn subject_rate(&self, i: usize, u: f64, spec: &KernelSpec) -> f64 {
        self.subjects[i]
            .iter()
            .map(|&(v, m)| spec.weight(u, v) * m)
            .sum()
    }

    /// Least-squares cross-validation score
    /// `∫₀^{tau0} r̂(u)² du - 2 Σ_i π_i Σ_{v ∈ i} dV_i(v) r̂₋ᵢ(v)`,
    /// where `r̂₋ᵢ` drops subject `i` and renormalises the weights.
    pub fn cv_score(&self, spec: &KernelSpec) -> f64 {
        let integral = simpson(
            |u| {
                let r = self.rate(u, spec);
                r * r
            },
            0.0,
            self.tau0,
            quadrature_intervals(self.tau0, spec),
        );
        let total: f64 = self.pi.iter().sum();
        let mut cross = 0.0;
        for (i, events) in self.subjects.iter().enumerate() {
            let rest = total - self.pi[i];
            if events.is_empty() || !(rest > 0.0) {
                continue;
            }
            let mut s = 0.0;
            for &(v, mark) in events {
                let loo = (self.rate(v, spec) - self.pi[i] * self.subject_rate(i, v, spec)) / rest;
                s += mark * loo;
            }
            cross += self.pi[i] * s;
        }
        integral - 2.0 * cross
    }
}

fn quadrature_intervals(tau0: f64, spec: &KernelSpec) -> usize {
    let per_bandwidth = libm::ceil(40.0 * tau0 / (spec.kernel.radius() * spec.bandwidth)) as usize;
    let m = per_bandwidth.clamp(1000, 200_000);
    m + m % 2
}

/// Composite Simpson rule with `intervals` (even) subintervals.
pub(crate) fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, intervals: usize) -> f64 {
    let m = intervals + intervals % 2;
    let h = (b - a) / m as f64;
    let mut s = f(a) + f(b);
    for j in 1..m {
        let c = if j % 2 == 1 { 4.0 } else { 2.0 };
        s += c * f(a + j as f64 * h);
    }
    s * h / 3.0
}

/// `r̂_{t1,t2}(u)`.
pub fn backward_rate(
    cohort: &Cohort,
    window: EstimandWindow,
    u: f64,
    spec: &KernelSpec,
) -> Result<f64> {
    let est = BackwardEstimator::new(cohort, window)?;
    window.check_backward_time(u)?;
    Ok(RateEvaluator::new(&est).rate(u, spec))
}

/// `r̂` at each `u`, sharing one estimator.
pub fn rate_curve(est: &BackwardEstimator, grid: &[f64], spec: &KernelSpec) -> Result<Vec<f64>> {
    let eval = RateEvaluator::new(est);
    grid.iter()
        .map(|&u| {
            est.window().check_backward_time(u)?;
            Ok(eval.rate(u, spec))
        })
        .collect()
}

/// `h⁻¹ Σ_g k((u - g)/h) Δμ̂(g)`: kernel smoothing of the jumps of a mean
/// curve. Only meaningful when the curve's grid holds every jump of `μ̂`,
/// as [`BackwardEstimator::default_grid`] does.
pub fn convolution_rate(curve: &BackwardCurve, u: f64, spec: &KernelSpec) -> f64 {
    let mut prev = 0.0;
    let mut total = 0.0;
    for (&g, &mu) in curve.grid.iter().zip(&curve.mu) {
        let jump = mu - prev;
        prev = mu;
        total += spec.weight(u, g) * jump;
    }
    total
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandwidthChoice {
    pub bandwidth: f64,
    /// `(h, CV(h))` for every candidate, in input order.
    pub scores: Vec<(f64, f64)>,
}

/// Index of the smallest score; ties go to the smaller bandwidth.
pub fn pick_min(scores: &[(f64, f64)]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &(h, s)) in scores.iter().enumerate() {
        best = match best {
            None => Some(i),
            Some(b) => {
                let (bh, bs) = scores[b];
                if s < bs || (s == bs && h < bh) {
                    Some(i)
                } else {
                    Some(b)
                }
            }
        };
    }
    best
}

/// Bandwidth minimising the leave-one-subject-out CV score over `candidates`.
pub fn select_bandwidth(
    est: &BackwardEstimator,
    kernel: Kernel,
    candidates: &[f64],
) -> Result<BandwidthChoice> {
    if candidates.is_empty() {
        return Err(Error::Empty("bandwidth candidates"));
    }
    if est.contributor_count() < 2 {
        return Err(Error::TooFewSubjects {
            needed: 2,
            found: est.contributor_count(),
        });
    }
    let eval = RateEvaluator::new(est);
    let scores = candidates
        .iter()
        .map(|&h| {
            let spec = KernelSpec::new(kernel, h)?;
            Ok((h, eval.cv_score(&spec)))
        })
        .collect::<Result<Vec<_>>>()?;
    let best = pick_min(&scores).expect("nonempty");
    Ok(BandwidthChoice {
        bandwidth: scores[best].0,
        scores,
    })
}

//! Random cohorts and exact-identity checks shared by the property tests
//! and the acceptance suite.

#![allow(dead_code)]

use backproc_core::dist::WeightedSample;
use backproc_core::forward::ForwardMean;
use backproc_core::rate::{convolution_rate, rate_curve, subject_rate, Kernel, KernelSpec};
use backproc_core::{
    product_limit, validate_cohort, BackwardEstimator, Cohort, EstimandWindow, ProcessEvent,
    SubjectRecord,
};
use proptest::prelude::*;

pub const TOL: f64 = 1e-10;

pub fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= TOL * 1f64.max(a.abs()).max(b.abs())
}

pub fn check(ok: bool, what: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(what())
    }
}

fn check_close(what: &str, a: f64, b: f64) -> Result<(), String> {
    check(close(a, b), || format!("{what}: {a} vs {b}"))
}

/// One raw subject: (incident, w, follow-up length, delta, events as
/// (position in [0, 1], mark)).
pub type RawSubject = (bool, f64, f64, bool, Vec<(f64, f64)>);

fn raw_subject() -> impl Strategy<Value = RawSubject> {
    (
        any::<bool>(),
        0.0..3.0f64,
        0.2..5.0f64,
        prop::bool::weighted(0.7),
        prop::collection::vec((0.0..=1.0f64, 0.0..10.0f64), 0..6),
    )
}

/// Snap to a 1/8 lattice so that ties among x, w and event times occur.
fn snap(t: f64, on: bool) -> f64 {
    if on {
        (t * 8.0).round() / 8.0
    } else {
        t
    }
}

pub fn build(raw: &[RawSubject], complete: bool, lattice: bool) -> Cohort {
    let subjects = raw
        .iter()
        .enumerate()
        .map(|(i, (incident, w, len, delta, events))| {
            let w = if complete || *incident {
                0.0
            } else {
                snap(*w, lattice)
            };
            let x = snap(w + len, lattice).max(w + 0.125);
            let events = events
                .iter()
                .map(|&(p, mark)| {
                    ProcessEvent::new(snap(w + p * (x - w), lattice).clamp(w, x), mark)
                })
                .collect();
            SubjectRecord::new(format!("s{i}"), w, x, complete || *delta, events)
        })
        .collect();
    validate_cohort(subjects).expect("generated cohort is valid")
}

/// A cohort (truncated and censored unless `complete`) plus a window.
pub fn cohort_and_window(complete: bool) -> impl Strategy<Value = (Cohort, EstimandWindow)> {
    (
        prop::collection::vec(raw_subject(), 2..40),
        any::<bool>(),
        0.5..2.0f64,
        prop_oneof![(0.5..6.0f64).prop_map(Some), Just(None)],
        0.1..=1.0f64,
    )
        .prop_map(move |(raw, lattice, t1, width, tau_frac)| {
            let cohort = build(&raw, complete, lattice);
            let t2 = width.map_or(f64::INFINITY, |d| t1 + d);
            let window = EstimandWindow::new(t1, t2, tau_frac * t1).unwrap();
            (cohort, window)
        })
}

fn probe_us(window: EstimandWindow) -> [f64; 4] {
    let t = window.tau0;
    [0.0, 0.37 * t, 0.81 * t, t]
}

/// `n⁻¹ Σ Ŝ(x_i) Δ_i I(t1 <= x_i < t2) / R(x_i) = Ŝ(t1) - Ŝ(t2)`, and the
/// joint CDF at `(∞, t2⁻)` equals one.
pub fn normalization(est: &BackwardEstimator) -> Result<(), String> {
    check_close("weight total", est.weight_total(), est.mass())?;
    let sample = WeightedSample::new(est, est.window().tau0).map_err(|e| e.to_string())?;
    check_close("p(inf, t2-)", sample.marginal_cdf(f64::INFINITY), 1.0)
}

/// With `w = 0` and `delta = 1` everywhere, every estimator reduces to its
/// unweighted empirical analogue.
pub fn complete_data(cohort: &Cohort, window: EstimandWindow) -> Result<(), String> {
    let n = cohort.n() as f64;
    let curve = product_limit(cohort).map_err(|e| e.to_string())?;
    for s in cohort.subjects() {
        for t in [s.x, s.x + 0.01, 0.5 * s.x] {
            let frac = cohort.subjects().iter().filter(|o| o.x >= t).count() as f64 / n;
            check_close("S(t)", curve.survival_at(t), frac)?;
        }
    }

    let fwd = ForwardMean::new(cohort).map_err(|e| e.to_string())?;
    for t in [0.3, 1.1, 2.7, 6.0] {
        let mean = cohort
            .subjects()
            .iter()
            .map(|s| {
                s.events
                    .iter()
                    .filter(|e| e.time <= t)
                    .map(|e| e.mark)
                    .sum::<f64>()
            })
            .sum::<f64>()
            / n;
        check_close("forward mean", fwd.at(t), mean)?;
    }

    let inside: Vec<_> = cohort
        .subjects()
        .iter()
        .filter(|s| window.contains(s.x))
        .collect();
    if inside.is_empty() {
        return Ok(());
    }
    let est = BackwardEstimator::new(cohort, window).map_err(|e| e.to_string())?;
    let m = inside.len() as f64;
    let spec = KernelSpec::new(Kernel::Epanechnikov, 0.3 * window.tau0).unwrap();
    let rates = rate_curve(&est, &probe_us(window), &spec).map_err(|e| e.to_string())?;
    for (&u, rate) in probe_us(window).iter().zip(rates) {
        let values: Vec<f64> = inside
            .iter()
            .map(|s| s.backward_value(u).unwrap())
            .collect();
        let mean = values.iter().sum::<f64>() / m;
        check_close("mu", est.mean(u).unwrap(), mean)?;

        let sample = WeightedSample::new(&est, u).map_err(|e| e.to_string())?;
        let mut sorted = values.clone();
        sorted.sort_by(f64::total_cmp);
        for &level in &sorted {
            let frac = values.iter().filter(|&&v| v <= level).count() as f64 / m;
            check_close("p", sample.marginal_cdf(level), frac)?;
        }
        for q in [0.13, 0.5, 0.77] {
            // skip levels where q m sits on a count boundary
            if ((q * m) - (q * m).round()).abs() < 1e-6 {
                continue;
            }
            let k = (q * m).ceil() as usize;
            let expected = sorted[k - 1];
            let got = sample.percentile(q).unwrap();
            check(got == expected, || {
                format!("percentile {q}: {got} vs {expected}")
            })?;
        }

        let direct = inside
            .iter()
            .map(|s| subject_rate(s, u, &spec, window.tau0).unwrap())
            .sum::<f64>()
            / m;
        check_close("rate", rate, direct)?;
    }
    Ok(())
}

/// `D μ̂_{t1,t2} = D₁ μ̂_{t1,m} + D₂ μ̂_{m,t2}` for a split point `m`.
pub fn window_additivity(
    cohort: &Cohort,
    window: EstimandWindow,
    split_frac: f64,
) -> Result<(), String> {
    let upper = if window.t2.is_finite() {
        window.t2
    } else {
        window.t1 + 6.0
    };
    let m = window.t1 + split_frac * (upper - window.t1);
    if !(m > window.t1 && m < window.t2) {
        return Ok(());
    }
    let whole = BackwardEstimator::new(cohort, window);
    let left = BackwardEstimator::new(
        cohort,
        EstimandWindow::new(window.t1, m, window.tau0).unwrap(),
    );
    let right = BackwardEstimator::new(
        cohort,
        EstimandWindow::new(m, window.t2, window.tau0).unwrap(),
    );
    let part = |e: &Result<BackwardEstimator, backproc_core::Error>, u: f64| match e {
        Ok(e) => e.mass() * e.mean(u).unwrap(),
        Err(_) => 0.0,
    };
    for u in probe_us(window) {
        let lhs = part(&whole, u);
        let rhs = part(&left, u) + part(&right, u);
        check_close("window additivity", lhs, rhs)?;
    }
    Ok(())
}

/// `Ŝ(s) - Ŝ(s⁺) = Ŝ(s) dN(s) / (n R(s))` at every failure time; vacuous
/// when nothing fails.
pub fn jump_identity(cohort: &Cohort) -> Result<(), String> {
    let curve = match product_limit(cohort) {
        Ok(curve) => curve,
        Err(backproc_core::Error::NoFailures) => return Ok(()),
        Err(e) => return Err(e.to_string()),
    };
    let n = cohort.n() as f64;
    for (k, &s) in curve.event_times().iter().enumerate() {
        let deaths = cohort
            .subjects()
            .iter()
            .filter(|o| o.delta && o.x == s)
            .count() as f64;
        let lhs = curve.survival_at(s) - curve.survival_after(s);
        let rhs = curve.survival_at(s) * deaths / (n * curve.risk_fraction()[k]);
        check_close("jump", lhs, rhs)?;
    }
    Ok(())
}

/// `r̂(u)` equals the kernel smoothing of the jumps of `μ̂`.
pub fn convolution(est: &BackwardEstimator, kernel: Kernel, h_frac: f64) -> Result<(), String> {
    let tau0 = est.window().tau0;
    let spec = KernelSpec::new(kernel, h_frac * tau0).unwrap();
    let curve = est.curve(None).map_err(|e| e.to_string())?;
    let us = probe_us(est.window());
    let direct = rate_curve(est, &us, &spec).map_err(|e| e.to_string())?;
    for (&u, r) in us.iter().zip(direct) {
        let smoothed = convolution_rate(&curve, u, &spec);
        let scale = est.mean(tau0).unwrap().abs().max(1.0) / spec.bandwidth;
        check((r - smoothed).abs() <= TOL * scale.max(r.abs()), || {
            format!("convolution at {u}: {r} vs {smoothed}")
        })?;
    }
    Ok(())
}

/// Smallest eigenvalue of a symmetric matrix by cyclic Jacobi rotations.
pub fn min_eigenvalue(matrix: &[Vec<f64>]) -> f64 {
    let n = matrix.len();
    let mut a: Vec<Vec<f64>> = matrix.to_vec();
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[i][i]).fold(f64::INFINITY, f64::min)
}

/// `[Σ̂(u_j, u_l)]` is symmetric positive semidefinite on `grid`.
pub fn gram_psd(est: &BackwardEstimator, grid: &[f64]) -> Result<(), String> {
    let inf = est.influence(grid).map_err(|e| e.to_string())?;
    let m = inf.covariance_matrix();
    let scale = (0..m.len()).map(|i| m[i][i]).fold(0.0, f64::max);
    for i in 0..m.len() {
        for j in 0..m.len() {
            check(m[i][j] == m[j][i], || format!("asymmetric at ({i}, {j})"))?;
        }
    }
    let low = min_eigenvalue(&m);
    check(low >= -TOL * scale.max(1.0), || {
        format!("min eigenvalue {low}")
    })
}

/// Scaling every mark by `c` scales `μ̂` by `c` and `Σ̂` by `c²`.
pub fn scale_equivariance(cohort: &Cohort, window: EstimandWindow, c: f64) -> Result<(), String> {
    let scaled = validate_cohort(
        cohort
            .subjects()
            .iter()
            .map(|s| {
                let events = s
                    .events
                    .iter()
                    .map(|e| ProcessEvent::new(e.time, c * e.mark))
                    .collect();
                SubjectRecord::new(s.id.clone(), s.w, s.x, s.delta, events)
            })
            .collect(),
    )
    .unwrap();
    let (Ok(a), Ok(b)) = (
        BackwardEstimator::new(cohort, window),
        BackwardEstimator::new(&scaled, window),
    ) else {
        return Ok(());
    };
    let us = probe_us(window);
    for &u in &us {
        check_close("scaled mu", b.mean(u).unwrap(), c * a.mean(u).unwrap())?;
        for &v in &us {
            check_close(
                "scaled sigma",
                b.covariance(u, v).unwrap(),
                c * c * a.covariance(u, v).unwrap(),
            )?;
        }
    }
    Ok(())
}

//! Statistical checks of the structural identities of the Enskog dynamics.
//!
//! Every check returns [`DiagnosticsReport`]s carrying a statistic, its
//! standard error and the threshold it was compared against. A report
//! passes iff `|statistic| ≤ threshold`.

use crate::collision::alpha;
use crate::kernels::{sample_angles, AngularMeasure, SpeedFactor};
use crate::measures::{law_distance, marginal_at, Ensemble, MeasureError};
use crate::picard::split_halves;
use crate::rng::{self, tag, Stream};
use crate::simulator::{CollisionRule, Kernels};
use crate::stats::{estimate, ks_statistic, standard_normal_cdf, Estimate, KS_CRITICAL_1PCT};
use crate::vec3::Vec3;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use std::fmt::Write as _;
use std::sync::OnceLock;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error("invalid diagnostics input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

/// Significance conventions shared by all checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    /// Multiplier of the standard error.
    pub z: f64,
    /// Critical value of `√n · D` for Kolmogorov–Smirnov checks.
    pub ks_critical: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            z: 3.0,
            ks_critical: KS_CRITICAL_1PCT,
        }
    }
}

impl Thresholds {
    /// Bonferroni thresholds for `family` simultaneous checks at overall
    /// level `alpha`: two-sided normal quantile and asymptotic Kolmogorov
    /// critical value at `alpha / family` each.
    pub fn bonferroni(family: usize, alpha: f64) -> Self {
        let each = alpha / family.max(1) as f64;
        Self {
            z: Normal::standard().inverse_cdf(1.0 - 0.5 * each),
            ks_critical: (-0.5 * (0.5 * each).ln()).sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub name: String,
    pub statistic: f64,
    pub standard_error: f64,
    pub threshold: f64,
    pub passed: bool,
    pub replicates: usize,
}

impl DiagnosticsReport {
    /// Threshold `z × se`.
    pub fn new(
        name: impl Into<String>,
        statistic: f64,
        standard_error: f64,
        z: f64,
        replicates: usize,
    ) -> Self {
        Self::with_threshold(
            name,
            statistic,
            standard_error,
            z * standard_error,
            replicates,
        )
    }

    pub fn with_threshold(
        name: impl Into<String>,
        statistic: f64,
        standard_error: f64,
        threshold: f64,
        replicates: usize,
    ) -> Self {
        Self {
            name: name.into(),
            statistic,
            standard_error,
            threshold,
            passed: statistic.abs() <= threshold,
            replicates,
        }
    }
}

pub fn all_passed(reports: &[DiagnosticsReport]) -> bool {
    reports.iter().all(|r| r.passed)
}

pub fn to_json(reports: &[DiagnosticsReport]) -> String {
    serde_json::to_string_pretty(reports).expect("reports serialize")
}

/// `name,statistic,standard_error,threshold,passed,replicates`.
pub fn summary_csv(reports: &[DiagnosticsReport]) -> String {
    let mut s = String::from("name,statistic,standard_error,threshold,passed,replicates\n");
    for r in reports {
        let _ = writeln!(
            s,
            "{},{:.16e},{:.16e},{:.16e},{},{}",
            r.name, r.statistic, r.standard_error, r.threshold, r.passed, r.replicates
        );
    }
    s
}

/// Frequencies at which characteristic functions are compared.
pub fn default_lambda_grid() -> Vec<Vec3> {
    vec![
        Vec3::new(1.0, 0.0, 0.0),
        Vec3::new(0.0, 1.0, 0.0),
        Vec3::new(0.0, 0.0, 1.0),
        Vec3::new(0.5, -0.5, 0.5),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TestFunctionKind {
    CfReal,
    CfImag,
    HermitePoly,
    GaussianBump,
}

/// Bounded test functions `ψ(x, u)` with sup norm 1 and closed-form spatial
/// gradients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TestFunction {
    /// `cos(λ_x·x + λ_u·u)`.
    CfReal { lambda_x: Vec3, lambda_u: Vec3 },
    /// `sin(λ_x·x + λ_u·u)`.
    CfImag { lambda_x: Vec3, lambda_u: Vec3 },
    /// `Π_k He_{n_k}(u_k) e^{-u_k²/4}`, scaled to sup norm 1.
    HermitePoly { index: [u32; 3] },
    /// `exp(-|x-c_x|²/2w_x² - |u-c_u|²/2w_u²)`; `w_x = ∞` drops the position factor.
    GaussianBump {
        center_x: Vec3,
        width_x: f64,
        center_u: Vec3,
        width_u: f64,
    },
}

impl TestFunction {
    pub fn kind(&self) -> TestFunctionKind {
        match self {
            TestFunction::CfReal { .. } => TestFunctionKind::CfReal,
            TestFunction::CfImag { .. } => TestFunctionKind::CfImag,
            TestFunction::HermitePoly { .. } => TestFunctionKind::HermitePoly,
            TestFunction::GaussianBump { .. } => TestFunctionKind::GaussianBump,
        }
    }

    pub fn name(&self) -> String {
        match self {
            TestFunction::CfReal { lambda_x, lambda_u } => {
                format!("cf_real[{lambda_x};{lambda_u}]")
            }
            TestFunction::CfImag { lambda_x, lambda_u } => {
                format!("cf_imag[{lambda_x};{lambda_u}]")
            }
            TestFunction::HermitePoly { index } => {
                format!("hermite[{},{},{}]", index[0], index[1], index[2])
            }
            TestFunction::GaussianBump {
                center_x,
                width_x,
                center_u,
                width_u,
            } => {
                format!("bump[{center_x},{width_x};{center_u},{width_u}]")
            }
        }
    }

    pub fn value(&self, x: Vec3, u: Vec3) -> f64 {
        match self {
            TestFunction::CfReal { lambda_x, lambda_u } => {
                (lambda_x.dot(x) + lambda_u.dot(u)).cos()
            }
            TestFunction::CfImag { lambda_x, lambda_u } => {
                (lambda_x.dot(x) + lambda_u.dot(u)).sin()
            }
            TestFunction::HermitePoly { index } => (0..3)
                .map(|k| hermite_function(index[k], u.get(k)) / hermite_sup(index[k]))
                .product(),
            TestFunction::GaussianBump {
                center_x,
                width_x,
                center_u,
                width_u,
            } => bump_exponent(x, *center_x, *width_x, u, *center_u, *width_u).exp(),
        }
    }

    /// `∇_x ψ(x, u)`.
    pub fn grad_x(&self, x: Vec3, u: Vec3) -> Vec3 {
        match self {
            TestFunction::CfReal { lambda_x, lambda_u } => {
                *lambda_x * -(lambda_x.dot(x) + lambda_u.dot(u)).sin()
            }
            TestFunction::CfImag { lambda_x, lambda_u } => {
                *lambda_x * (lambda_x.dot(x) + lambda_u.dot(u)).cos()
            }
            TestFunction::HermitePoly { .. } => Vec3::ZERO,
            TestFunction::GaussianBump {
                center_x,
                width_x,
                center_u,
                width_u,
            } => {
                if width_x.is_infinite() {
                    return Vec3::ZERO;
                }
                let psi = bump_exponent(x, *center_x, *width_x, u, *center_u, *width_u).exp();
                (x - *center_x) * (-psi / (width_x * width_x))
            }
        }
    }
}

fn bump_exponent(x: Vec3, cx: Vec3, wx: f64, u: Vec3, cu: Vec3, wu: f64) -> f64 {
    let spatial = if wx.is_infinite() {
        0.0
    } else {
        (x - cx).norm_sq() / (2.0 * wx * wx)
    };
    -spatial - (u - cu).norm_sq() / (2.0 * wu * wu)
}

fn hermite_function(n: u32, s: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, s);
    if n == 0 {
        return (-0.25 * s * s).exp();
    }
    for k in 1..n {
        let next = s * cur - k as f64 * prev;
        prev = cur;
        cur = next;
    }
    cur * (-0.25 * s * s).exp()
}

fn hermite_sup(n: u32) -> f64 {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    let table = TABLE.get_or_init(|| (0..12).map(scan_hermite_sup).collect());
    table
        .get(n as usize)
        .copied()
        .unwrap_or_else(|| scan_hermite_sup(n))
}

fn scan_hermite_sup(n: u32) -> f64 {
    let reach = 4.0 + 2.0 * (n as f64).sqrt();
    let steps = 20_000;
    (0..=steps)
        .map(|i| hermite_function(n, reach * i as f64 / steps as f64).abs())
        .fold(0.0, f64::max)
}

fn gaussian(rng: &mut Stream) -> Vec3 {
    Vec3::new(
        StandardNormal.sample(rng),
        StandardNormal.sample(rng),
        StandardNormal.sample(rng),
    )
}

const CHUNK: usize = 4096;

/// Runs `f` over `samples` draws split into fixed-size chunks, each with its
/// own substream, so the values do not depend on the thread count.
fn chunked_draws<T, F>(samples: usize, key: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut Stream) -> T + Sync,
{
    let chunks = samples.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .flat_map_iter(|c| {
            let mut rng = rng::substream(key, c as u64);
            let len = CHUNK.min(samples - c * CHUNK);
            (0..len).map(|_| f(&mut rng)).collect::<Vec<_>>()
        })
        .collect()
}

/// Paired comparison of `E[e^{i(λ,z)} σ(|z−v|)]` and `E[e^{i(λ,z*)} σ(|z−v|)]`
/// with `(z, v) ~ MVN(0, I)²` and `ξ ~ Q/|Q| ⊗ U[0, 2π)`. Reports the grid
/// component with the largest paired z-score.
pub fn tanaka_symmetry_check(
    s: &SpeedFactor,
    q: &AngularMeasure,
    samples: usize,
    seed: u64,
    grid: &[Vec3],
    rule: CollisionRule,
    thresholds: &Thresholds,
) -> Result<DiagnosticsReport, DiagnosticsError> {
    if samples < 2 || grid.is_empty() {
        return Err(DiagnosticsError::InvalidInput(
            "need at least 2 samples and a non-empty grid".into(),
        ));
    }
    if !q.is_cutoff() {
        return Err(DiagnosticsError::InvalidInput(
            "angular measure must have finite mass".into(),
        ));
    }
    let key = rng::derive(seed, tag::DIAGNOSTICS);
    let draws: Vec<(Vec3, Vec3, f64)> = chunked_draws(samples, key, |rng| {
        let z = gaussian(rng);
        let v = gaussian(rng);
        let xi = sample_angles(q, rng);
        let a = alpha(z, v, xi);
        let z_star = match rule {
            CollisionRule::Elastic => z - a,
            CollisionRule::Reversed => z + a,
        };
        (z, z_star, s.evaluate(z.distance(v)))
    });
    let mut worst = DiagnosticsReport::new("tanaka", 0.0, 0.0, thresholds.z, samples);
    let mut worst_score = -1.0;
    for (k, lambda) in grid.iter().enumerate() {
        for (part, f) in [("re", f64::cos as fn(f64) -> f64), ("im", f64::sin)] {
            let diffs: Vec<f64> = draws
                .iter()
                .map(|(z, zs, sig)| (f(lambda.dot(*zs)) - f(lambda.dot(*z))) * sig)
                .collect();
            let Estimate { mean, se } = estimate(&diffs);
            let score = if se > 0.0 {
                mean.abs() / se
            } else if mean == 0.0 {
                0.0
            } else {
                f64::INFINITY
            };
            if score > worst_score {
                worst_score = score;
                worst = DiagnosticsReport::new(
                    format!("tanaka/lambda{k}/{part}"),
                    mean,
                    se,
                    thresholds.z,
                    samples,
                );
            }
        }
    }
    Ok(worst)
}

/// Velocity marginal against `MVN(0, I)` at each time: component means,
/// covariance entries, `E|Z|²`, characteristic function on `grid`, and a
/// Kolmogorov–Smirnov test per component.
pub fn maxwellian_invariance_check(
    run: &Ensemble,
    times: &[f64],
    grid: &[Vec3],
    thresholds: &Thresholds,
) -> Result<Vec<DiagnosticsReport>, DiagnosticsError> {
    let z = thresholds.z;
    let mut reports = Vec::new();
    for &t in times {
        let vel: Vec<Vec3> = marginal_at(run, t)?.into_iter().map(|(_, v)| v).collect();
        let n = vel.len();
        if n < 2 {
            return Err(DiagnosticsError::InvalidInput(
                "need at least 2 members".into(),
            ));
        }
        let tag = |s: &str| format!("maxwellian/t={t}/{s}");
        let report = |name: String, values: Vec<f64>, target: f64| {
            let Estimate { mean, se } = estimate(&values);
            DiagnosticsReport::new(name, mean - target, se, z, n)
        };
        for a in 0..3 {
            reports.push(report(
                tag(&format!("mean{a}")),
                vel.iter().map(|v| v.get(a)).collect(),
                0.0,
            ));
        }
        for a in 0..3 {
            for b in a..3 {
                let values = vel.iter().map(|v| v.get(a) * v.get(b)).collect();
                reports.push(report(
                    tag(&format!("cov{a}{b}")),
                    values,
                    if a == b { 1.0 } else { 0.0 },
                ));
            }
        }
        reports.push(report(
            tag("energy"),
            vel.iter().map(|v| v.norm_sq()).collect(),
            3.0,
        ));
        for (k, lambda) in grid.iter().enumerate() {
            let target = (-0.5 * lambda.norm_sq()).exp();
            reports.push(report(
                tag(&format!("cf{k}/re")),
                vel.iter().map(|v| lambda.dot(*v).cos()).collect(),
                target,
            ));
            reports.push(report(
                tag(&format!("cf{k}/im")),
                vel.iter().map(|v| lambda.dot(*v).sin()).collect(),
                0.0,
            ));
        }
        let se = 1.0 / (n as f64).sqrt();
        for a in 0..3 {
            let comp: Vec<f64> = vel.iter().map(|v| v.get(a)).collect();
            let d = ks_statistic(&comp, standard_normal_cdf);
            reports.push(DiagnosticsReport::new(
                tag(&format!("ks{a}")),
                d,
                se,
                thresholds.ks_critical,
                n,
            ));
        }
    }
    Ok(reports)
}

/// Components of the weak-form residual at one time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakFormResidual {
    pub report: DiagnosticsReport,
    /// Mean of the central difference minus the transport term.
    pub drift: Estimate,
    pub generator: Estimate,
    pub residual_half_step: f64,
    pub c_fd: f64,
    /// Observed order of the ballistic central difference; `None` when the
    /// difference is exact (no spatial dependence).
    pub richardson_order: Option<f64>,
}

impl WeakFormResidual {
    pub fn richardson_ok(&self) -> bool {
        self.richardson_order
            .is_none_or(|p| (1.5..=2.5).contains(&p))
    }
}

/// `R = [⟨μ_{t+dt},ψ⟩ − ⟨μ_{t−dt},ψ⟩]/2dt − ⟨μ_t,(u,∇_xψ)⟩ − ⟨μ_t, Lψ⟩`
/// on a mean-field run. The difference quotient is paired per particle; the
/// generator is a Monte Carlo average over `pair_samples` random pairs and
/// angles. Passes iff `|R| ≤ z · SE + C_fd dt²` with `C_fd` fitted from the
/// residual at `dt/2`.
#[allow(clippy::too_many_arguments)]
pub fn weak_form_residual(
    run: &Ensemble,
    kernels: &Kernels,
    psi: &TestFunction,
    t: f64,
    dt: f64,
    pair_samples: usize,
    seed: u64,
    thresholds: &Thresholds,
) -> Result<WeakFormResidual, DiagnosticsError> {
    if !(dt > 0.0 && t - dt >= 0.0 && t + dt <= run.time_horizon()) {
        return Err(DiagnosticsError::InvalidInput(format!(
            "t ± dt = {t} ± {dt} must lie within [0, {}]",
            run.time_horizon()
        )));
    }
    if pair_samples < 2 || run.len() < 2 {
        return Err(DiagnosticsError::InvalidInput(
            "need at least 2 pair samples and 2 particles".into(),
        ));
    }
    let now = marginal_at(run, t)?;
    let drift_at = |h: f64| -> Result<Estimate, MeasureError> {
        let after = marginal_at(run, t + h)?;
        let before = marginal_at(run, t - h)?;
        let values: Vec<f64> = (0..now.len())
            .into_par_iter()
            .map(|i| {
                let (x, u) = now[i];
                let d = (psi.value(after[i].0, after[i].1) - psi.value(before[i].0, before[i].1))
                    / (2.0 * h);
                d - u.dot(psi.grad_x(x, u))
            })
            .collect();
        Ok(estimate(&values))
    };
    let drift = drift_at(dt)?;
    let drift_half = drift_at(0.5 * dt)?;

    let rate = kernels.angular.total_rate();
    let n = now.len();
    let key = rng::derive(seed, tag::DIAGNOSTICS);
    let gen_values = chunked_draws(pair_samples, key, |rng| {
        let i = rng.random_range(0..n);
        let j = {
            let k = rng.random_range(0..n - 1);
            if k >= i {
                k + 1
            } else {
                k
            }
        };
        let xi = sample_angles(&kernels.angular, rng);
        let ((x, u), (y, v)) = (now[i], now[j]);
        let weight = kernels.acceptance(u, v, x, y);
        if weight == 0.0 {
            return 0.0;
        }
        (psi.value(x, u - alpha(u, v, xi)) - psi.value(x, u)) * weight * rate
    });
    let generator = estimate(&gen_values);

    let residual = drift.mean - generator.mean;
    let residual_half_step = drift_half.mean - generator.mean;
    let c_fd = (residual - residual_half_step).abs() / (0.75 * dt * dt);
    let se = drift.se.hypot(generator.se);
    let threshold = thresholds.z * se + c_fd * dt * dt;
    let report = DiagnosticsReport::with_threshold(
        format!("weak_form/{}/t={t}", psi.name()),
        residual,
        se,
        threshold,
        n,
    );
    let richardson_order = ballistic_order(&now, psi, dt);
    Ok(WeakFormResidual {
        report,
        drift,
        generator,
        residual_half_step,
        c_fd,
        richardson_order,
    })
}

/// Order of the central difference of `s ↦ ψ(x + u s, u)` at `s = 0`
/// against its exact derivative, from steps `h` and `h/2`.
fn ballistic_order(now: &[(Vec3, Vec3)], psi: &TestFunction, h: f64) -> Option<f64> {
    let error = |h: f64| {
        let values: Vec<f64> = now
            .par_iter()
            .map(|&(x, u)| {
                (psi.value(x + u * h, u) - psi.value(x - u * h, u)) / (2.0 * h)
                    - u.dot(psi.grad_x(x, u))
            })
            .collect();
        estimate(&values).mean
    };
    let (e1, e2) = (error(h), error(0.5 * h));
    if e1.abs() < 1e-13 || e2 == 0.0 {
        return None;
    }
    Some((e1 / e2).abs().log2())
}

/// Compares the time-`t` marginals of two runs against the split-half null
/// of the first. The statistic is `max(0, d(run1, run2) − d_null)` with the
/// null's standard error.
pub fn marginal_uniqueness_check(
    run1: &Ensemble,
    run2: &Ensemble,
    times: &[f64],
    dictionary_size: usize,
    thresholds: &Thresholds,
) -> Result<Vec<DiagnosticsReport>, DiagnosticsError> {
    if run1.len() < 4 {
        return Err(DiagnosticsError::InvalidInput(
            "need at least 4 members to split".into(),
        ));
    }
    let (a, b) = split_halves(run1)?;
    times
        .iter()
        .map(|&t| {
            let d = law_distance(run1, run2, t, dictionary_size)?;
            let null = law_distance(&a, &b, t, dictionary_size)?;
            Ok(DiagnosticsReport::new(
                format!("uniqueness/t={t}"),
                (d.value - null.value).max(0.0),
                null.standard_error,
                thresholds.z,
                run1.len().min(run2.len()),
            ))
        })
        .collect()
}

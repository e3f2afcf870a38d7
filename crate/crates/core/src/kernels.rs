//! Cross-section ingredients: the angular measure `Q(dθ) dφ`, the speed factor
//! `σ(|u − v|)` and the spatial mollifier `β(|x − y|)`.
//!
//! `Q` is stored unnormalized on `(theta_min, π]`. The candidate collision
//! rate of the simulator is `total_rate = 2π · Q((theta_min, π])`; angles are
//! drawn from the normalized measure.

use crate::collision::CollisionAngles;
use crate::quadrature;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};
use thiserror::Error;

const MOMENT_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("angular moment diverges: {0}")]
    NonIntegrable(String),
    #[error("invalid kernel parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum AngularFamily {
    /// Constant density on `(theta_min, π]` with the given total mass.
    Uniform { mass: f64 },
    /// Density `coefficient · θ^(−exponent)`; exponent 3/2 is the
    /// Maxwellian-molecule small-angle behaviour.
    PowerLaw { coefficient: f64, exponent: f64 },
    /// Piecewise-linear density through `(theta, density)` nodes, the first
    /// at `theta_min` and the last at `π`.
    Table { nodes: Vec<(f64, f64)> },
}

impl AngularFamily {
    pub fn name(&self) -> &'static str {
        match self {
            AngularFamily::Uniform { .. } => "uniform",
            AngularFamily::PowerLaw { .. } => "maxwellian_power",
            AngularFamily::Table { .. } => "custom_table",
        }
    }
}

/// `m1 = ∫ sin(θ/2) Q(dθ)`, `m2 = ∫ sin²(θ/2) Q(dθ)`, `mtheta = ∫ θ Q(dθ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngularMoments {
    pub m1: f64,
    pub m2: f64,
    pub mtheta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngularMeasure {
    family: AngularFamily,
    theta_min: f64,
    mass_theta: f64,
    moments: AngularMoments,
    /// Cumulative mass at each table node (table family only).
    cumulative: Vec<f64>,
}

impl AngularMeasure {
    pub fn uniform(mass: f64, theta_min: f64) -> Result<Self, KernelError> {
        Self::new(AngularFamily::Uniform { mass }, theta_min)
    }

    pub fn maxwellian_power(coefficient: f64, theta_min: f64) -> Result<Self, KernelError> {
        Self::new(
            AngularFamily::PowerLaw {
                coefficient,
                exponent: 1.5,
            },
            theta_min,
        )
    }

    pub fn power_law(coefficient: f64, exponent: f64, theta_min: f64) -> Result<Self, KernelError> {
        Self::new(
            AngularFamily::PowerLaw {
                coefficient,
                exponent,
            },
            theta_min,
        )
    }

    /// Table measure; `theta_min` is the first node.
    pub fn table(nodes: Vec<(f64, f64)>) -> Result<Self, KernelError> {
        let theta_min = nodes.first().map(|n| n.0).unwrap_or(0.0);
        Self::new(AngularFamily::Table { nodes }, theta_min)
    }

    pub fn new(family: AngularFamily, theta_min: f64) -> Result<Self, KernelError> {
        if !(0.0..PI).contains(&theta_min) {
            return Err(KernelError::InvalidParameter(format!(
                "theta_min must lie in [0, pi), got {theta_min}"
            )));
        }
        let family = match family {
            AngularFamily::Table { mut nodes } => {
                check_table(&mut nodes, theta_min)?;
                AngularFamily::Table { nodes }
            }
            other => other,
        };
        match &family {
            AngularFamily::Uniform { mass } if !(mass.is_finite() && *mass > 0.0) => {
                return Err(KernelError::InvalidParameter(format!(
                    "uniform mass must be positive, got {mass}"
                )));
            }
            AngularFamily::PowerLaw {
                coefficient,
                exponent,
            } if !(coefficient.is_finite()
                && *coefficient > 0.0
                && exponent.is_finite()
                && *exponent > 0.0) =>
            {
                return Err(KernelError::InvalidParameter(format!(
                    "power law needs positive coefficient and exponent, got {coefficient}, {exponent}"
                )));
            }
            _ => {}
        }
        let moments = angular_moments(&family, theta_min)?;
        let (mass_theta, cumulative) = mass_of(&family, theta_min);
        if !(mass_theta > 0.0) {
            return Err(KernelError::InvalidParameter(
                "angular measure has zero mass".into(),
            ));
        }
        Ok(Self {
            family,
            theta_min,
            mass_theta,
            moments,
            cumulative,
        })
    }

    pub fn family(&self) -> &AngularFamily {
        &self.family
    }

    pub fn theta_min(&self) -> f64 {
        self.theta_min
    }

    /// `Q((theta_min, π])`, possibly infinite.
    pub fn mass_theta(&self) -> f64 {
        self.mass_theta
    }

    pub fn moments(&self) -> AngularMoments {
        self.moments
    }

    /// Candidate event rate `2π · mass_theta`.
    pub fn total_rate(&self) -> f64 {
        TAU * self.mass_theta
    }

    pub fn is_cutoff(&self) -> bool {
        self.mass_theta.is_finite()
    }

    /// Normalized distribution function of θ.
    pub fn cdf(&self, theta: f64) -> f64 {
        if theta <= self.theta_min {
            return 0.0;
        }
        if theta >= PI {
            return 1.0;
        }
        let a = self.theta_min;
        match &self.family {
            AngularFamily::Uniform { .. } => (theta - a) / (PI - a),
            AngularFamily::PowerLaw { exponent, .. } => {
                if !self.is_cutoff() {
                    return f64::NAN;
                }
                if (*exponent - 1.0).abs() < 1e-12 {
                    (theta / a).ln() / (PI / a).ln()
                } else {
                    let e = 1.0 - exponent;
                    (theta.powf(e) - a.powf(e)) / (PI.powf(e) - a.powf(e))
                }
            }
            AngularFamily::Table { nodes } => {
                let k = nodes.partition_point(|n| n.0 <= theta).saturating_sub(1);
                let (t0, d0) = nodes[k];
                let (t1, d1) = nodes[k + 1];
                let tau = theta - t0;
                let slope = (d1 - d0) / (t1 - t0);
                (self.cumulative[k] + d0 * tau + 0.5 * slope * tau * tau) / self.mass_theta
            }
        }
    }

    /// Inverse distribution function for `p ∈ (0, 1]`.
    pub fn quantile(&self, p: f64) -> f64 {
        let a = self.theta_min;
        let theta = match &self.family {
            AngularFamily::Uniform { .. } => a + (PI - a) * p,
            AngularFamily::PowerLaw { exponent, .. } => {
                if (*exponent - 1.0).abs() < 1e-12 {
                    a * (p * (PI / a).ln()).exp()
                } else {
                    let e = 1.0 - exponent;
                    let lo = a.powf(e);
                    (lo + p * (PI.powf(e) - lo)).powf(1.0 / e)
                }
            }
            AngularFamily::Table { nodes } => {
                let target = p * self.mass_theta;
                let k = self
                    .cumulative
                    .partition_point(|&c| c < target)
                    .saturating_sub(1)
                    .min(nodes.len() - 2);
                let (t0, d0) = nodes[k];
                let (t1, d1) = nodes[k + 1];
                let r = (target - self.cumulative[k]).max(0.0);
                let slope = (d1 - d0) / (t1 - t0);
                let disc = (d0 * d0 + 2.0 * slope * r).max(0.0);
                let denom = d0 + disc.sqrt();
                let tau = if denom > 0.0 { 2.0 * r / denom } else { 0.0 };
                (t0 + tau).min(t1)
            }
        };
        theta.min(PI)
    }
}

fn check_table(nodes: &mut [(f64, f64)], theta_min: f64) -> Result<(), KernelError> {
    if nodes.len() < 2 {
        return Err(KernelError::InvalidParameter(
            "angular table needs at least two nodes".into(),
        ));
    }
    if (nodes[0].0 - theta_min).abs() > 1e-12 {
        return Err(KernelError::InvalidParameter(
            "first table node must equal theta_min".into(),
        ));
    }
    let last = nodes.len() - 1;
    if (nodes[last].0 - PI).abs() > 1e-9 {
        return Err(KernelError::InvalidParameter(
            "last table node must be pi".into(),
        ));
    }
    nodes[last].0 = PI;
    for w in nodes.windows(2) {
        if !(w[1].0 > w[0].0) {
            return Err(KernelError::InvalidParameter(
                "table nodes must increase strictly".into(),
            ));
        }
    }
    if nodes.iter().any(|n| !(n.1.is_finite() && n.1 >= 0.0)) {
        return Err(KernelError::InvalidParameter(
            "table densities must be finite and non-negative".into(),
        ));
    }
    Ok(())
}

fn mass_of(family: &AngularFamily, a: f64) -> (f64, Vec<f64>) {
    match family {
        AngularFamily::Uniform { mass } => (*mass, Vec::new()),
        AngularFamily::PowerLaw {
            coefficient,
            exponent,
        } => {
            let m = if a == 0.0 && *exponent >= 1.0 {
                f64::INFINITY
            } else if (*exponent - 1.0).abs() < 1e-12 {
                coefficient * (PI / a).ln()
            } else {
                let e = 1.0 - exponent;
                coefficient * (PI.powf(e) - a.powf(e)) / e
            };
            (m, Vec::new())
        }
        AngularFamily::Table { nodes } => {
            let mut cum = Vec::with_capacity(nodes.len());
            let mut acc = 0.0;
            cum.push(0.0);
            for w in nodes.windows(2) {
                acc += 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0);
                cum.push(acc);
            }
            (acc, cum)
        }
    }
}

/// Angular moments of `Q`, by closed form where one exists and adaptive
/// quadrature (absolute tolerance 1e-10) otherwise.
pub fn angular_moments(
    family: &AngularFamily,
    theta_min: f64,
) -> Result<AngularMoments, KernelError> {
    let a = theta_min;
    match family {
        AngularFamily::Uniform { mass } => {
            let width = PI - a;
            Ok(AngularMoments {
                m1: 2.0 * mass * (0.5 * a).cos() / width,
                m2: 0.5 * mass + mass * a.sin() / (2.0 * width),
                mtheta: mass * (PI + a) / 2.0,
            })
        }
        AngularFamily::PowerLaw {
            coefficient,
            exponent,
        } => {
            let p = *exponent;
            if a == 0.0 && p >= 2.0 {
                return Err(KernelError::NonIntegrable(format!(
                    "∫ θ Q(dθ) diverges at 0 for exponent {p} without cutoff"
                )));
            }
            let mtheta = if (p - 2.0).abs() < 1e-12 {
                coefficient * (PI / a).ln()
            } else {
                let e = 2.0 - p;
                coefficient * (PI.powf(e) - a.powf(e)) / e
            };
            // θ = s^k removes the algebraic singularity at 0.
            let k = if p < 2.0 {
                (1.0 / (2.0 - p)).max(1.0)
            } else {
                1.0
            };
            let (lo, hi) = (a.powf(1.0 / k), PI.powf(1.0 / k));
            let weighted = |g: fn(f64) -> f64| {
                quadrature::integrate(
                    |s| {
                        if s <= 0.0 {
                            return 0.0;
                        }
                        let theta = s.powf(k);
                        coefficient * g(theta) * theta.powf(-p) * k * s.powf(k - 1.0)
                    },
                    lo,
                    hi,
                    MOMENT_TOL,
                )
            };
            Ok(AngularMoments {
                m1: weighted(|t| (0.5 * t).sin()),
                m2: weighted(|t| (0.5 * t).sin().powi(2)),
                mtheta,
            })
        }
        AngularFamily::Table { nodes } => {
            let mut m = AngularMoments {
                m1: 0.0,
                m2: 0.0,
                mtheta: 0.0,
            };
            for w in nodes.windows(2) {
                let ((t0, d0), (t1, d1)) = (w[0], w[1]);
                let dens = move |t: f64| d0 + (d1 - d0) * (t - t0) / (t1 - t0);
                m.m1 += quadrature::integrate(|t| (0.5 * t).sin() * dens(t), t0, t1, MOMENT_TOL);
                m.m2 += quadrature::integrate(
                    |t| (0.5 * t).sin().powi(2) * dens(t),
                    t0,
                    t1,
                    MOMENT_TOL,
                );
                m.mtheta += quadrature::integrate(|t| t * dens(t), t0, t1, MOMENT_TOL);
            }
            Ok(m)
        }
    }
}

/// Draws `ξ = (θ, φ)` from the normalized `Q ⊗ dφ`. Requires a cutoff.
pub fn sample_angles<R: Rng + ?Sized>(q: &AngularMeasure, rng: &mut R) -> CollisionAngles {
    debug_assert!(q.is_cutoff(), "sampling needs a finite angular mass");
    let p = 1.0 - rng.random::<f64>();
    let theta = q
        .quantile(p)
        .max(q.theta_min().next_up())
        .max(f64::MIN_POSITIVE);
    let phi = TAU * rng.random::<f64>();
    CollisionAngles::from_parts(theta, phi)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SpeedFamily {
    Constant {
        value: f64,
    },
    /// `tanh(r / scale)`.
    SmoothSaturating {
        scale: f64,
    },
    /// Piecewise-linear through `(r, σ)` nodes, constant beyond the ends.
    Table {
        nodes: Vec<(f64, f64)>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedFactor {
    family: SpeedFamily,
    lipschitz_bound: f64,
}

impl SpeedFactor {
    pub fn constant_one() -> Self {
        Self {
            family: SpeedFamily::Constant { value: 1.0 },
            lipschitz_bound: 0.0,
        }
    }

    pub fn constant(value: f64) -> Result<Self, KernelError> {
        if !(0.0..=1.0).contains(&value) {
            return Err(KernelError::InvalidParameter(format!(
                "constant sigma must lie in [0, 1], got {value}"
            )));
        }
        Ok(Self {
            family: SpeedFamily::Constant { value },
            lipschitz_bound: 0.0,
        })
    }

    pub fn smooth_saturating(scale: f64) -> Result<Self, KernelError> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(KernelError::InvalidParameter(format!(
                "sigma scale must be positive, got {scale}"
            )));
        }
        Ok(Self {
            family: SpeedFamily::SmoothSaturating { scale },
            lipschitz_bound: 1.0 / scale,
        })
    }

    /// Tabulated σ with a caller-declared Lipschitz bound (checked only by
    /// [`validate_hypotheses`]).
    pub fn table(nodes: Vec<(f64, f64)>, lipschitz_bound: f64) -> Result<Self, KernelError> {
        if nodes.is_empty() || nodes.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(KernelError::InvalidParameter(
                "sigma table nodes must increase strictly".into(),
            ));
        }
        if nodes.iter().any(|n| !(n.0.is_finite() && n.1.is_finite())) {
            return Err(KernelError::InvalidParameter(
                "sigma table must be finite".into(),
            ));
        }
        if !(lipschitz_bound >= 0.0) {
            return Err(KernelError::InvalidParameter(
                "lipschitz bound must be non-negative".into(),
            ));
        }
        Ok(Self {
            family: SpeedFamily::Table { nodes },
            lipschitz_bound,
        })
    }

    pub fn family(&self) -> &SpeedFamily {
        &self.family
    }

    pub fn lipschitz_bound(&self) -> f64 {
        self.lipschitz_bound
    }

    #[inline]
    pub fn evaluate(&self, r: f64) -> f64 {
        match &self.family {
            SpeedFamily::Constant { value } => *value,
            SpeedFamily::SmoothSaturating { scale } => (r / scale).tanh(),
            SpeedFamily::Table { nodes } => {
                let k = nodes.partition_point(|n| n.0 <= r);
                if k == 0 {
                    nodes[0].1
                } else if k == nodes.len() {
                    nodes[k - 1].1
                } else {
                    let (r0, s0) = nodes[k - 1];
                    let (r1, s1) = nodes[k];
                    s0 + (s1 - s0) * (r - r0) / (r1 - r0)
                }
            }
        }
    }
}

pub fn evaluate_sigma(s: &SpeedFactor, r: f64) -> f64 {
    s.evaluate(r)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MollifierShape {
    /// `exp(1 − 1/(1 − (r/ε)²))` inside the support.
    Bump,
    /// `(1 + cos(π r/ε)) / 2` inside the support.
    CosineTaper,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mollifier {
    support_radius: f64,
    shape: MollifierShape,
}

impl Mollifier {
    /// `support_radius = ∞` gives `β ≡ 1`.
    pub fn new(support_radius: f64, shape: MollifierShape) -> Result<Self, KernelError> {
        if !(support_radius > 0.0) {
            return Err(KernelError::InvalidParameter(format!(
                "mollifier support radius must be positive, got {support_radius}"
            )));
        }
        Ok(Self {
            support_radius,
            shape,
        })
    }

    pub fn bump(support_radius: f64) -> Result<Self, KernelError> {
        Self::new(support_radius, MollifierShape::Bump)
    }

    pub fn unbounded() -> Self {
        Self {
            support_radius: f64::INFINITY,
            shape: MollifierShape::Bump,
        }
    }

    pub fn support_radius(&self) -> f64 {
        self.support_radius
    }

    pub fn shape(&self) -> MollifierShape {
        self.shape
    }

    #[inline]
    pub fn evaluate(&self, r: f64) -> f64 {
        if r >= self.support_radius {
            return 0.0;
        }
        let q = r / self.support_radius;
        match self.shape {
            MollifierShape::Bump => (1.0 - 1.0 / (1.0 - q * q)).exp(),
            MollifierShape::CosineTaper => 0.5 * (1.0 + (PI * q).cos()),
        }
    }
}

pub fn evaluate_beta(b: &Mollifier, r: f64) -> f64 {
    b.evaluate(r)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    pub notes: Vec<String>,
    pub empirical_lipschitz: f64,
    pub moments: Option<AngularMoments>,
    pub total_rate: f64,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, code: &str) -> bool {
        self.violations.iter().any(|v| v.code == code)
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.passed() {
            writeln!(f, "hypotheses: ok")?;
        } else {
            writeln!(f, "hypotheses: FAILED")?;
        }
        for v in &self.violations {
            writeln!(f, "  [{}] {}", v.code, v.message)?;
        }
        for n in &self.notes {
            writeln!(f, "  note: {n}")?;
        }
        write!(
            f,
            "  empirical sigma Lipschitz constant: {}",
            self.empirical_lipschitz
        )
    }
}

const LIPSCHITZ_GRID: usize = 10_000;
const LIPSCHITZ_RANGE: f64 = 100.0;

pub fn validate_hypotheses(q: &AngularMeasure, s: &SpeedFactor, b: &Mollifier) -> ValidationReport {
    let mut violations = Vec::new();
    let mut notes = Vec::new();
    let mut push = |code: &str, message: String| {
        violations.push(Violation {
            code: code.into(),
            message,
        })
    };

    let m = q.moments();
    if !m.mtheta.is_finite() {
        push("A1", format!("∫ θ Q(dθ) is not finite ({})", m.mtheta));
    }
    if !q.is_cutoff() {
        push(
            "cutoff",
            format!(
                "Q({{theta > {}}}) is infinite; exact simulation needs theta_min > 0",
                q.theta_min()
            ),
        );
    }

    let h = LIPSCHITZ_RANGE / (LIPSCHITZ_GRID - 1) as f64;
    let mut lip: f64 = 0.0;
    let mut prev = s.evaluate(0.0);
    let mut out_of_range = None;
    for k in 0..LIPSCHITZ_GRID {
        let r = h * k as f64;
        let val = s.evaluate(r);
        if !(0.0..=1.0).contains(&val) && out_of_range.is_none() {
            out_of_range = Some((r, val));
        }
        if k > 0 {
            lip = lip.max((val - prev).abs() / h);
        }
        prev = val;
    }
    if let Some((r, val)) = out_of_range {
        push("A2", format!("sigma({r}) = {val} outside [0, 1]"));
    }
    if lip > s.lipschitz_bound() * (1.0 + 1e-9) + 1e-12 {
        push(
            "A2",
            format!(
                "sigma has empirical Lipschitz constant {lip} above declared bound {}",
                s.lipschitz_bound()
            ),
        );
    }

    let radius = b.support_radius();
    if radius.is_finite() {
        let beta_grid = (0..=1000).map(|k| radius * 1.2 * k as f64 / 1000.0);
        for r in beta_grid {
            let val = b.evaluate(r);
            if !(0.0..=1.0).contains(&val) || (r >= radius && val != 0.0) {
                push(
                    "beta",
                    format!(
                        "beta({r}) = {val} violates 0 <= beta <= 1 with support radius {radius}"
                    ),
                );
                break;
            }
        }
        if (b.evaluate(0.0) - 1.0).abs() > 1e-15 {
            push("beta", "beta(0) must equal 1".into());
        }
    } else {
        notes.push("beta has unbounded support (spatially homogeneous limit, beta = 1)".into());
    }

    ValidationReport {
        violations,
        notes,
        empirical_lipschitz: lip,
        moments: Some(m),
        total_rate: q.total_rate(),
    }
}

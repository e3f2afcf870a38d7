//! Picard iteration over path laws.
//!
//! Iterate 0 is the ballistic law `X_t = X_0 + Z_0 t`, `Z_t = Z_0`. Iterate
//! `n + 1` simulates fresh paths in frozen mode against the stored paths of
//! iterate `n`. Each step records `E|Z_t|²` at the output times and the
//! empirical distance to the previous law.

use crate::measures::{
    law_distance, marginal_at, Ensemble, LawDistance, MeasureError, ParticlePath,
};
use crate::rng::{self, tag};
use crate::simulator::{simulate, InitialLaw, Mode, SimConfig, SimError};
use crate::stats::{estimate, Estimate};
use serde::{Deserialize, Serialize};
use std::io::{self, Write};
use thiserror::Error;

pub const DEFAULT_DICTIONARY_SIZE: usize = 64;

#[derive(Debug, Error)]
pub enum PicardError {
    #[error("tolerance {tol} is not above the noise floor 3 × {noise_se:.3e}; raise tol or the path count")]
    TolBelowNoise { tol: f64, noise_se: f64 },
    #[error("invalid Picard configuration: {0}")]
    ConfigInvalid(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentPoint {
    pub t: f64,
    pub moment2: f64,
    pub se: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistancePoint {
    pub t: f64,
    pub distance: LawDistance,
}

#[derive(Debug, Clone)]
pub struct IterationState {
    pub index: usize,
    pub law: Ensemble,
    pub moment2_trace: Vec<MomentPoint>,
    pub distance_to_previous: Option<Vec<DistancePoint>>,
}

impl IterationState {
    pub fn max_distance(&self) -> Option<&DistancePoint> {
        self.distance_to_previous
            .as_ref()?
            .iter()
            .max_by(|a, b| a.distance.value.total_cmp(&b.distance.value))
    }

    pub fn sup_moment2(&self) -> f64 {
        self.moment2_trace
            .iter()
            .map(|m| m.moment2)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Initial draws and dynamics use a new seed per iterate (`Fresh`) or the
/// same seed for every iterate (`Common`, common random numbers).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Seeding {
    Fresh,
    Common,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PicardConfig {
    /// Path count, horizon, kernels, output times and master seed. The mode
    /// is forced to frozen.
    pub sim: SimConfig,
    pub max_iters: usize,
    pub tol: f64,
    pub seeding: Seeding,
    pub dictionary_size: usize,
    /// Caller-supplied noise standard error; estimated from a split of
    /// iterate 0 when absent.
    pub noise_se: Option<f64>,
}

impl PicardConfig {
    pub fn new(sim: SimConfig) -> Self {
        Self {
            sim,
            max_iters: 10,
            tol: 0.1,
            seeding: Seeding::Fresh,
            dictionary_size: DEFAULT_DICTIONARY_SIZE,
            noise_se: None,
        }
    }

    pub fn iterate_seed(&self, n: usize) -> u64 {
        let base = rng::derive(self.sim.master_seed, tag::PICARD_ITERATE);
        match self.seeding {
            Seeding::Fresh => rng::derive(base, n as u64),
            Seeding::Common => rng::derive(base, 0),
        }
    }

    fn frozen_sim(&self, n: usize) -> SimConfig {
        SimConfig {
            mode: Mode::Frozen,
            master_seed: self.iterate_seed(n),
            ..self.sim.clone()
        }
    }
}

fn moment_trace(law: &Ensemble, times: &[f64]) -> Result<Vec<MomentPoint>, MeasureError> {
    times
        .iter()
        .map(|&t| {
            let m: Vec<f64> = marginal_at(law, t)?
                .iter()
                .map(|(_, z)| z.norm_sq())
                .collect();
            let Estimate { mean, se } = estimate(&m);
            Ok(MomentPoint {
                t,
                moment2: mean,
                se,
            })
        })
        .collect()
}

/// Iterate 0: `m` ballistic paths from `initial`.
pub fn initial_law(
    initial: &InitialLaw,
    m: usize,
    horizon: f64,
    seed: u64,
    trace_times: &[f64],
) -> Result<IterationState, PicardError> {
    if m < 2 {
        return Err(PicardError::ConfigInvalid(format!(
            "need at least 2 paths, got {m}"
        )));
    }
    let paths = initial
        .sample(m, seed)
        .into_iter()
        .map(|(x, z)| ParticlePath::ballistic(x, z))
        .collect();
    let law = Ensemble::from_paths(paths, horizon, vec![seed])?;
    let moment2_trace = moment_trace(&law, trace_times)?;
    Ok(IterationState {
        index: 0,
        law,
        moment2_trace,
        distance_to_previous: None,
    })
}

/// One Picard step: fresh paths driven by the frozen law of `prev`.
pub fn iterate(
    prev: &IterationState,
    cfg: &SimConfig,
    dictionary_size: usize,
) -> Result<IterationState, PicardError> {
    if cfg.mode != Mode::Frozen {
        return Err(PicardError::ConfigInvalid(
            "iterate requires frozen mode".into(),
        ));
    }
    let out = simulate(cfg, Some(&prev.law))?;
    let mut lineage = prev.law.seed_lineage().to_vec();
    lineage.push(cfg.master_seed);
    let law = out.paths.with_lineage(lineage);
    let moment2_trace = moment_trace(&law, &cfg.output_times)?;
    let distances = cfg
        .output_times
        .iter()
        .map(|&t| {
            Ok(DistancePoint {
                t,
                distance: law_distance(&prev.law, &law, t, dictionary_size)?,
            })
        })
        .collect::<Result<Vec<_>, MeasureError>>()?;
    Ok(IterationState {
        index: prev.index + 1,
        law,
        moment2_trace,
        distance_to_previous: Some(distances),
    })
}

/// Standard error of the law distance between two independent `M`-path
/// ensembles, estimated from the two halves of `state` (which hold `M/2`
/// paths each, hence the `1/√2`).
pub fn split_half_noise(
    state: &IterationState,
    times: &[f64],
    dictionary_size: usize,
) -> Result<f64, MeasureError> {
    let (a, b) = split_halves(&state.law)?;
    let mut worst: f64 = 0.0;
    for &t in times {
        worst = worst.max(law_distance(&a, &b, t, dictionary_size)?.standard_error);
    }
    Ok(worst / std::f64::consts::SQRT_2)
}

pub fn split_halves(e: &Ensemble) -> Result<(Ensemble, Ensemble), MeasureError> {
    let half = e.len() / 2;
    Ok((e.slice(0, half)?, e.slice(half, 2 * half)?))
}

/// `A e^{B t}` upper envelope of `E|Z_t|²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentEnvelope {
    pub a: f64,
    pub b: f64,
}

impl MomentEnvelope {
    /// Least-squares slope of `ln E|Z_t|²` over the given iterates, clamped
    /// at zero, then the smallest prefactor that dominates every point.
    pub fn fit(states: &[IterationState]) -> Option<Self> {
        let pts: Vec<(f64, f64)> = states
            .iter()
            .flat_map(|s| s.moment2_trace.iter())
            .filter(|m| m.moment2 > 0.0)
            .map(|m| (m.t, m.moment2.ln()))
            .collect();
        if pts.is_empty() {
            return None;
        }
        let n = pts.len() as f64;
        let tm = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let ym = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxx: f64 = pts.iter().map(|p| (p.0 - tm).powi(2)).sum();
        let sxy: f64 = pts.iter().map(|p| (p.0 - tm) * (p.1 - ym)).sum();
        let b = if sxx > 0.0 { (sxy / sxx).max(0.0) } else { 0.0 };
        let a = pts
            .iter()
            .map(|&(t, y)| (y - b * t).exp())
            .fold(0.0, f64::max);
        Some(Self { a, b })
    }

    pub fn at(&self, t: f64) -> f64 {
        self.a * (self.b * t).exp()
    }

    /// Every recorded moment lies below `slack × envelope`.
    pub fn dominates(&self, state: &IterationState, slack: f64) -> bool {
        state
            .moment2_trace
            .iter()
            .all(|m| m.moment2 <= slack * self.at(m.t))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    Converged { iterations: usize },
    NoConvergence { max_iters: usize },
}

#[derive(Debug, Clone)]
pub struct PicardReport {
    pub states: Vec<IterationState>,
    pub outcome: Outcome,
    pub noise_se: f64,
    /// Fitted from iterates 0 and 1.
    pub envelope: Option<MomentEnvelope>,
}

impl PicardReport {
    /// Iterates from 2 on stay below `1.2 ×` the fitted envelope.
    pub fn moments_bounded(&self) -> bool {
        match self.envelope {
            Some(env) => self.states.iter().skip(2).all(|s| env.dominates(s, 1.2)),
            None => true,
        }
    }
}

/// Iterates until the largest distance to the previous law drops below
/// `tol` or `max_iters` steps have run.
pub fn run_to_tolerance(cfg: &PicardConfig) -> Result<PicardReport, PicardError> {
    if cfg.max_iters == 0 {
        return Err(PicardError::ConfigInvalid(
            "max_iters must be at least 1".into(),
        ));
    }
    if cfg.sim.output_times.is_empty() {
        return Err(PicardError::ConfigInvalid(
            "at least one output time is required".into(),
        ));
    }
    if !(cfg.tol > 0.0) {
        return Err(PicardError::ConfigInvalid(format!(
            "tolerance must be positive, got {}",
            cfg.tol
        )));
    }
    cfg.frozen_sim(0).validate()?;
    let times = &cfg.sim.output_times;
    let first = initial_law(
        &cfg.sim.initial,
        cfg.sim.particle_count,
        cfg.sim.horizon,
        cfg.iterate_seed(0),
        times,
    )?;
    let noise_se = match cfg.noise_se {
        Some(se) => se,
        None => split_half_noise(&first, times, cfg.dictionary_size)?,
    };
    if cfg.tol <= 3.0 * noise_se {
        return Err(PicardError::TolBelowNoise {
            tol: cfg.tol,
            noise_se,
        });
    }
    let mut states = vec![first];
    let mut outcome = Outcome::NoConvergence {
        max_iters: cfg.max_iters,
    };
    for n in 1..=cfg.max_iters {
        let next = iterate(
            states.last().expect("non-empty"),
            &cfg.frozen_sim(n),
            cfg.dictionary_size,
        )?;
        let done = next
            .max_distance()
            .is_some_and(|d| d.distance.value < cfg.tol);
        states.push(next);
        if done {
            outcome = Outcome::Converged { iterations: n };
            break;
        }
    }
    let envelope = if states.len() >= 2 {
        MomentEnvelope::fit(&states[..2])
    } else {
        None
    };
    Ok(PicardReport {
        states,
        outcome,
        noise_se,
        envelope,
    })
}

/// Per-iteration CSV: `n,t,moment2,se,distance,distance_se`. Iterate 0 has
/// empty distance columns.
pub fn write_csv<W: Write>(states: &[IterationState], mut w: W) -> io::Result<()> {
    writeln!(w, "n,t,moment2,se,distance,distance_se")?;
    for s in states {
        for (k, m) in s.moment2_trace.iter().enumerate() {
            let d = s.distance_to_previous.as_ref().and_then(|d| d.get(k));
            match d {
                Some(d) => writeln!(
                    w,
                    "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                    s.index, m.t, m.moment2, m.se, d.distance.value, d.distance.standard_error
                )?,
                None => writeln!(
                    w,
                    "{},{:.16e},{:.16e},{:.16e},,",
                    s.index, m.t, m.moment2, m.se
                )?,
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{AngularMeasure, Mollifier, SpeedFactor};
    use crate::simulator::Kernels;
    use std::f64::consts::PI;

    fn sim(m: usize) -> SimConfig {
        SimConfig {
            mode: Mode::Frozen,
            particle_count: m,
            horizon: 1.0,
            output_times: vec![0.0, 0.5, 1.0],
            kernels: Kernels {
                angular: AngularMeasure::uniform(1.0 / PI, 0.0).unwrap(),
                speed: SpeedFactor::constant_one(),
                mollifier: Mollifier::unbounded(),
            },
            ..SimConfig::default()
        }
    }

    #[test]
    fn initial_law_is_ballistic() {
        let s = initial_law(&InitialLaw::default(), 50, 2.0, 3, &[0.0, 1.0]).unwrap();
        assert_eq!(s.index, 0);
        for p in s.law.paths().unwrap() {
            let (x0, z0) = p.state_at(0.0);
            let (x1, z1) = p.state_at(1.0);
            assert_eq!(z0, z1);
            assert!((x1 - x0 - z0).norm() < 1e-12);
        }
        assert!(initial_law(&InitialLaw::default(), 1, 2.0, 3, &[]).is_err());
    }

    #[test]
    fn iterate_requires_frozen_mode() {
        let s = initial_law(&InitialLaw::default(), 50, 1.0, 3, &[0.0]).unwrap();
        let cfg = SimConfig {
            mode: Mode::MeanField,
            ..sim(50)
        };
        assert!(matches!(
            iterate(&s, &cfg, 16),
            Err(PicardError::ConfigInvalid(_))
        ));
        let next = iterate(&s, &sim(50), 16).unwrap();
        assert_eq!(next.index, 1);
        assert_eq!(next.distance_to_previous.as_ref().unwrap().len(), 3);
    }

    #[test]
    fn huge_tolerance_stops_after_one_step() {
        let cfg = PicardConfig {
            tol: 10.0,
            ..PicardConfig::new(sim(400))
        };
        let r = run_to_tolerance(&cfg).unwrap();
        assert_eq!(r.outcome, Outcome::Converged { iterations: 1 });
        assert_eq!(r.states.len(), 2);
    }

    #[test]
    fn refuses_tolerance_below_noise() {
        let cfg = PicardConfig {
            tol: 1e-6,
            ..PicardConfig::new(sim(400))
        };
        assert!(matches!(
            run_to_tolerance(&cfg),
            Err(PicardError::TolBelowNoise { .. })
        ));
    }

    #[test]
    fn common_seeding_reuses_initial_draws() {
        let cfg = PicardConfig {
            seeding: Seeding::Common,
            ..PicardConfig::new(sim(10))
        };
        assert_eq!(cfg.iterate_seed(1), cfg.iterate_seed(4));
        let cfg = PicardConfig::new(sim(10));
        assert_ne!(cfg.iterate_seed(1), cfg.iterate_seed(4));
    }

    #[test]
    fn envelope_dominates_its_fit_points() {
        let mk = |vals: &[(f64, f64)]| IterationState {
            index: 0,
            law: Ensemble::from_paths(
                vec![ParticlePath::ballistic(
                    Default::default(),
                    Default::default(),
                )],
                1.0,
                vec![],
            )
            .unwrap(),
            moment2_trace: vals
                .iter()
                .map(|&(t, m)| MomentPoint {
                    t,
                    moment2: m,
                    se: 0.0,
                })
                .collect(),
            distance_to_previous: None,
        };
        let states = [mk(&[(0.0, 3.0), (1.0, 3.3)]), mk(&[(0.0, 2.9), (1.0, 3.6)])];
        let env = MomentEnvelope::fit(&states).unwrap();
        assert!(env.b > 0.0);
        assert!(states.iter().all(|s| env.dominates(s, 1.0)));
        assert!(!env.dominates(&mk(&[(1.0, 10.0)]), 1.2));
    }

    #[test]
    fn csv_layout() {
        let s = initial_law(&InitialLaw::default(), 20, 1.0, 3, &[0.0]).unwrap();
        let mut buf = Vec::new();
        write_csv(&[s], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("n,t,moment2,se,distance,distance_se"));
        assert!(lines.next().unwrap().ends_with(",,"));
    }
}

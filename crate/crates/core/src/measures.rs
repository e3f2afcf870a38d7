//! Finite representations of a law on position–velocity paths.
//!
//! An [`Ensemble`] is either a set of particle states at one time or a set of
//! complete piecewise-ballistic paths on `[0, horizon]`. Paths are stored as
//! exact event records so they can be evaluated at any time without
//! interpolation error.

use crate::rng::{self, tag};
use crate::stats::FixedSum;
use crate::vec3::Vec3;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeasureError {
    #[error("time {t} outside the range of the ensemble (horizon {horizon})")]
    TimeOutOfRange { t: f64, horizon: f64 },
    #[error("requested an empty resample")]
    EmptyRequest,
    #[error("ensemble has no members")]
    EmptyEnsemble,
    #[error("event at time {time} does not follow the previous event at {previous}")]
    EventOrder { time: f64, previous: f64 },
    #[error("non-finite particle state")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParticleState {
    pub position: Vec3,
    pub velocity: Vec3,
    pub last_event_time: f64,
}

impl ParticleState {
    /// Ballistic advance to time `t ≥ last_event_time`.
    #[inline]
    pub fn position_at(&self, t: f64) -> Vec3 {
        self.position + self.velocity * (t - self.last_event_time)
    }
}

/// Velocity jump of a path; `position` is the position at `time`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathEvent {
    pub time: f64,
    pub velocity: Vec3,
    pub position: Vec3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticlePath {
    initial: ParticleState,
    events: Vec<PathEvent>,
}

impl ParticlePath {
    pub fn ballistic(position: Vec3, velocity: Vec3) -> Self {
        Self {
            initial: ParticleState {
                position,
                velocity,
                last_event_time: 0.0,
            },
            events: Vec::new(),
        }
    }

    /// Records a velocity jump at `time`; times must increase strictly.
    pub fn push_jump(&mut self, time: f64, velocity: Vec3) -> Result<(), MeasureError> {
        let current = self.current();
        if !(time > current.last_event_time) {
            return Err(MeasureError::EventOrder {
                time,
                previous: current.last_event_time,
            });
        }
        if !velocity.is_finite() {
            return Err(MeasureError::NonFinite);
        }
        self.events.push(PathEvent {
            time,
            velocity,
            position: current.position_at(time),
        });
        Ok(())
    }

    pub fn initial(&self) -> ParticleState {
        self.initial
    }

    pub fn events(&self) -> &[PathEvent] {
        &self.events
    }

    /// State right after the latest event.
    #[inline]
    pub fn current(&self) -> ParticleState {
        match self.events.last() {
            Some(e) => ParticleState {
                position: e.position,
                velocity: e.velocity,
                last_event_time: e.time,
            },
            None => self.initial,
        }
    }

    /// Exact (position, velocity) at time `t`; right-continuous at jumps.
    #[inline]
    pub fn state_at(&self, t: f64) -> (Vec3, Vec3) {
        let k = self.events.partition_point(|e| e.time <= t);
        let s = if k == 0 {
            self.initial
        } else {
            let e = self.events[k - 1];
            ParticleState {
                position: e.position,
                velocity: e.velocity,
                last_event_time: e.time,
            }
        };
        (s.position_at(t), s.velocity)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EnsembleKind {
    StatesAtTime,
    FrozenPaths,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Members {
    States(Vec<ParticleState>),
    Paths(Vec<ParticlePath>),
}

/// A finite stand-in for a probability law.
///
/// For `StatesAtTime` ensembles `time_horizon` is the snapshot time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    members: Members,
    time_horizon: f64,
    seed_lineage: Vec<u64>,
}

impl Ensemble {
    pub fn from_states(
        states: Vec<ParticleState>,
        time: f64,
        seed_lineage: Vec<u64>,
    ) -> Result<Self, MeasureError> {
        if states.is_empty() {
            return Err(MeasureError::EmptyEnsemble);
        }
        Ok(Self {
            members: Members::States(states),
            time_horizon: time,
            seed_lineage,
        })
    }

    pub fn from_paths(
        paths: Vec<ParticlePath>,
        horizon: f64,
        seed_lineage: Vec<u64>,
    ) -> Result<Self, MeasureError> {
        if paths.is_empty() {
            return Err(MeasureError::EmptyEnsemble);
        }
        Ok(Self {
            members: Members::Paths(paths),
            time_horizon: horizon,
            seed_lineage,
        })
    }

    pub fn kind(&self) -> EnsembleKind {
        match self.members {
            Members::States(_) => EnsembleKind::StatesAtTime,
            Members::Paths(_) => EnsembleKind::FrozenPaths,
        }
    }

    pub fn members(&self) -> &Members {
        &self.members
    }

    pub fn paths(&self) -> Option<&[ParticlePath]> {
        match &self.members {
            Members::Paths(p) => Some(p),
            Members::States(_) => None,
        }
    }

    pub fn len(&self) -> usize {
        match &self.members {
            Members::States(s) => s.len(),
            Members::Paths(p) => p.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn time_horizon(&self) -> f64 {
        self.time_horizon
    }

    pub fn seed_lineage(&self) -> &[u64] {
        &self.seed_lineage
    }

    pub fn with_lineage(mut self, seed_lineage: Vec<u64>) -> Self {
        self.seed_lineage = seed_lineage;
        self
    }

    /// State-kind snapshot of every member at time `t`.
    pub fn snapshot(&self, t: f64) -> Result<Ensemble, MeasureError> {
        let states = marginal_at(self, t)?
            .into_iter()
            .map(|(position, velocity)| ParticleState {
                position,
                velocity,
                last_event_time: t,
            })
            .collect();
        Ensemble::from_states(states, t, self.seed_lineage.clone())
    }

    /// Members `[start, end)` as a new ensemble (same kind, horizon, lineage).
    pub fn slice(&self, start: usize, end: usize) -> Result<Ensemble, MeasureError> {
        if start >= end || end > self.len() {
            return Err(MeasureError::EmptyEnsemble);
        }
        let members = match &self.members {
            Members::States(s) => Members::States(s[start..end].to_vec()),
            Members::Paths(p) => Members::Paths(p[start..end].to_vec()),
        };
        Ok(Ensemble {
            members,
            time_horizon: self.time_horizon,
            seed_lineage: self.seed_lineage.clone(),
        })
    }
}

/// Exact `(position, velocity)` of every member at time `t`.
pub fn marginal_at(e: &Ensemble, t: f64) -> Result<Vec<(Vec3, Vec3)>, MeasureError> {
    match &e.members {
        Members::States(states) => {
            if t != e.time_horizon {
                return Err(MeasureError::TimeOutOfRange {
                    t,
                    horizon: e.time_horizon,
                });
            }
            Ok(states.iter().map(|s| (s.position, s.velocity)).collect())
        }
        Members::Paths(paths) => {
            if !(t >= 0.0 && t <= e.time_horizon) {
                return Err(MeasureError::TimeOutOfRange {
                    t,
                    horizon: e.time_horizon,
                });
            }
            Ok(paths.iter().map(|p| p.state_at(t)).collect())
        }
    }
}

/// Uniform draw of `count` members with replacement.
pub fn resample(e: &Ensemble, count: usize, seed: u64) -> Result<Ensemble, MeasureError> {
    if count == 0 {
        return Err(MeasureError::EmptyRequest);
    }
    let n = e.len();
    if n == 0 {
        return Err(MeasureError::EmptyEnsemble);
    }
    let mut rng = rng::substream(rng::derive(seed, tag::RESAMPLE), 0);
    let picks: Vec<usize> = (0..count).map(|_| rng.random_range(0..n)).collect();
    let members = match &e.members {
        Members::States(s) => Members::States(picks.iter().map(|&i| s[i]).collect()),
        Members::Paths(p) => Members::Paths(picks.iter().map(|&i| p[i].clone()).collect()),
    };
    let mut seed_lineage = e.seed_lineage.clone();
    seed_lineage.push(seed);
    Ok(Ensemble {
        members,
        time_horizon: e.time_horizon,
        seed_lineage,
    })
}

/// Approximate sup-distance between the time-`t` marginals of two laws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LawDistance {
    pub value: f64,
    pub test_family_size: usize,
    pub standard_error: f64,
}

/// Frequency axis of the characteristic-function grid.
pub const FREQUENCY_AXIS: [f64; 6] = [-2.0, -1.0, -0.5, 0.5, 1.0, 2.0];
/// Number of frequencies in the full grid.
pub const FULL_GRID: usize = 216;
/// Bounded first- and second-moment surrogates per coordinate (3 position + 3 velocity).
const MOMENT_FUNCTIONS: usize = 12;
const BOOTSTRAP_REPLICATES: usize = 200;
const BOOTSTRAP_SEED: u64 = 0x5EED_B007;

/// Fixed dictionary of sup-norm-one test functions on `(x, z)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TestDictionary {
    frequencies: Vec<Vec3>,
}

impl TestDictionary {
    /// `size` frequencies strided through the full 6³ grid (capped at 216).
    pub fn new(size: usize) -> Self {
        let size = size.clamp(0, FULL_GRID);
        let grid: Vec<Vec3> = FREQUENCY_AXIS
            .iter()
            .flat_map(|&a| {
                FREQUENCY_AXIS
                    .iter()
                    .flat_map(move |&b| FREQUENCY_AXIS.iter().map(move |&c| Vec3::new(a, b, c)))
            })
            .collect();
        let frequencies = (0..size).map(|k| grid[k * FULL_GRID / size]).collect();
        Self { frequencies }
    }

    pub fn frequencies(&self) -> &[Vec3] {
        &self.frequencies
    }

    pub fn len(&self) -> usize {
        2 * self.frequencies.len() + MOMENT_FUNCTIONS
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Value of test function `k` at `(x, z)`.
    #[inline]
    pub fn evaluate(&self, k: usize, x: Vec3, z: Vec3) -> f64 {
        let nf = self.frequencies.len();
        if k < 2 * nf {
            let phase = self.frequencies[k / 2].dot(z);
            if k.is_multiple_of(2) {
                phase.cos()
            } else {
                phase.sin()
            }
        } else {
            let j = k - 2 * nf;
            let coord = if j % 6 < 3 {
                x.get(j % 3)
            } else {
                z.get(j % 3)
            };
            if j < 6 {
                coord / (1.0 + coord * coord).sqrt()
            } else {
                coord * coord / (1.0 + coord * coord)
            }
        }
    }

    fn accumulate(&self, sample: &[(Vec3, Vec3)]) -> Vec<FixedSum> {
        const CHUNK: usize = 512;
        let partial: Vec<Vec<FixedSum>> = sample
            .par_chunks(CHUNK)
            .map(|chunk| {
                let mut sums = vec![FixedSum::default(); self.len()];
                for &(x, z) in chunk {
                    for (k, s) in sums.iter_mut().enumerate() {
                        s.add(self.evaluate(k, x, z));
                    }
                }
                sums
            })
            .collect();
        let mut total = vec![FixedSum::default(); self.len()];
        for p in partial {
            for (t, s) in total.iter_mut().zip(p) {
                t.merge(s);
            }
        }
        total
    }

    /// Dictionary means over a sample.
    pub fn means(&self, sample: &[(Vec3, Vec3)]) -> Vec<f64> {
        let n = sample.len() as f64;
        self.accumulate(sample)
            .into_iter()
            .map(|s| s.value() / n)
            .collect()
    }
}

/// Bootstrap variance of the mean of test function `k` over `sample`.
fn bootstrap_variance(dict: &TestDictionary, k: usize, sample: &[(Vec3, Vec3)]) -> f64 {
    let mut values: Vec<f64> = sample
        .iter()
        .map(|&(x, z)| dict.evaluate(k, x, z))
        .collect();
    // canonical order keeps the result independent of member order
    values.sort_unstable_by(f64::total_cmp);
    let n = values.len();
    let key = rng::derive(BOOTSTRAP_SEED, n as u64);
    let means: Vec<f64> = (0..BOOTSTRAP_REPLICATES)
        .into_par_iter()
        .map(|b| {
            let mut rng = rng::substream(key, b as u64);
            let mut s = FixedSum::default();
            for _ in 0..n {
                s.add(values[rng.random_range(0..n)]);
            }
            s.value() / n as f64
        })
        .collect();
    let center = means.iter().sum::<f64>() / BOOTSTRAP_REPLICATES as f64;
    means.iter().map(|m| (m - center).powi(2)).sum::<f64>() / (BOOTSTRAP_REPLICATES - 1) as f64
}

/// Largest discrepancy between the time-`t` marginals of `a` and `b` over
/// the dictionary, with the bootstrap standard error of the discrepancy at
/// the maximizing test function.
pub fn law_distance(
    a: &Ensemble,
    b: &Ensemble,
    t: f64,
    dictionary_size: usize,
) -> Result<LawDistance, MeasureError> {
    let sa = marginal_at(a, t)?;
    let sb = marginal_at(b, t)?;
    let dict = TestDictionary::new(dictionary_size);
    Ok(distance_between_samples(&dict, &sa, &sb))
}

pub fn distance_between_samples(
    dict: &TestDictionary,
    sa: &[(Vec3, Vec3)],
    sb: &[(Vec3, Vec3)],
) -> LawDistance {
    let ma = dict.means(sa);
    let mb = dict.means(sb);
    let (best, value) = ma
        .iter()
        .zip(&mb)
        .map(|(x, y)| (x - y).abs())
        .enumerate()
        .fold(
            (0, 0.0f64),
            |acc, (k, d)| if d > acc.1 { (k, d) } else { acc },
        );
    let standard_error = if value == 0.0 && sa.len() == sb.len() && sa == sb {
        0.0
    } else {
        (bootstrap_variance(dict, best, sa) + bootstrap_variance(dict, best, sb)).sqrt()
    };
    LawDistance {
        value,
        test_family_size: dict.len(),
        standard_error,
    }
}

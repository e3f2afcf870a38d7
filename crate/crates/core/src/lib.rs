//! Particle simulation of the Enskog equation with soft potentials.
//!
//! The crate provides the elastic collision map, angular/speed/spatial
//! kernels, an exact event-driven simulator for the nonlinear jump process
//! and its mean-field particle system, a Picard iteration over path laws,
//! and statistical diagnostics.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod collision;
pub mod config;
pub mod diagnostics;
pub mod format;
pub mod kernels;
pub mod measures;
pub mod picard;
pub mod quadrature;
pub mod rng;
pub mod simulator;
pub mod stats;
pub mod vec3;

pub use collision::{
    alpha, collide, deflection_vector, CollisionAngles, CollisionError, CollisionOutcome,
};
pub use kernels::{
    evaluate_beta, evaluate_sigma, sample_angles, validate_hypotheses, AngularMeasure, KernelError,
    Mollifier, SpeedFactor, ValidationReport,
};
pub use measures::{
    law_distance, Ensemble, EnsembleKind, LawDistance, MeasureError, ParticlePath, ParticleState,
};
pub use simulator::{
    simulate, CollisionRule, JumpEvent, Mode, PartnerUpdate, SimConfig, SimError, SimOutput,
};
pub use vec3::Vec3;

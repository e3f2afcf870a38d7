//! Elastic binary collision geometry.
//!
//! A collision of velocities `u`, `v` is parametrized by the deflection angles
//! `ξ = (θ, φ)`. The unit deflection vector `n` makes the angle `π/2 − θ/2`
//! with the relative velocity `u − v`, and the post-collision pair is
//!
//! ```text
//! u* = u − (n, u − v) n
//! v* = v + (n, u − v) n
//! ```
//!
//! which conserves momentum and kinetic energy and is its own inverse when
//! applied again with the same `n`.

use crate::vec3::Vec3;
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};
use thiserror::Error;

/// Relative speeds below this are treated as `u = v`.
pub const DEGENERACY_THRESHOLD: f64 = 1e-300;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CollisionError {
    #[error("relative velocity |u - v| = {0:e} is degenerate")]
    DegenerateRelativeVelocity(f64),
    #[error("collision angles out of range: theta = {theta}, phi = {phi}")]
    InvalidAngles { theta: f64, phi: f64 },
}

/// Colatitude `theta ∈ (0, π]` and longitude `phi ∈ [0, 2π)` of the deflection vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollisionAngles {
    theta: f64,
    phi: f64,
}

impl CollisionAngles {
    pub fn new(theta: f64, phi: f64) -> Result<Self, CollisionError> {
        if !(theta > 0.0 && theta <= PI && (0.0..TAU).contains(&phi)) {
            return Err(CollisionError::InvalidAngles { theta, phi });
        }
        Ok(Self { theta, phi })
    }

    /// Builds angles from sampler output; `phi` is wrapped into `[0, 2π)`.
    pub(crate) fn from_parts(theta: f64, phi: f64) -> Self {
        debug_assert!(theta > 0.0 && theta <= PI);
        let phi = if phi >= TAU { 0.0 } else { phi };
        Self { theta, phi }
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }
}

/// Right-handed orthonormal frame with `e3` along `u − v`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeflectionFrame {
    pub e1: Vec3,
    pub e2: Vec3,
    pub e3: Vec3,
}

/// Result of one elastic collision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollisionOutcome {
    pub u_star: Vec3,
    pub v_star: Vec3,
    pub alpha: Vec3,
    /// Deflection vector; zero when `u = v`.
    pub n: Vec3,
}

pub fn deflection_frame(u: Vec3, v: Vec3) -> Result<DeflectionFrame, CollisionError> {
    let w = u - v;
    let speed = w.norm();
    if speed < DEGENERACY_THRESHOLD {
        return Err(CollisionError::DegenerateRelativeVelocity(speed));
    }
    let e3 = w / speed;
    let k = if e3.z.abs() > 0.9 {
        Vec3::new(1.0, 0.0, 0.0)
    } else {
        Vec3::new(0.0, 0.0, 1.0)
    };
    let c = e3.cross(k);
    let e1 = c / c.norm();
    let e2 = e3.cross(e1);
    Ok(DeflectionFrame { e1, e2, e3 })
}

/// Deflection vector expressed in an explicit frame.
#[inline]
pub fn deflection_in_frame(frame: &DeflectionFrame, xi: CollisionAngles) -> Vec3 {
    let (s, c) = (0.5 * xi.theta).sin_cos();
    let (sp, cp) = xi.phi.sin_cos();
    frame.e3 * s + (frame.e1 * cp + frame.e2 * sp) * c
}

pub fn deflection_vector(u: Vec3, v: Vec3, xi: CollisionAngles) -> Result<Vec3, CollisionError> {
    let frame = deflection_frame(u, v)?;
    Ok(deflection_in_frame(&frame, xi))
}

/// Velocity increment kernel `α(u, v, ξ) = (n, u − v) n`, zero when `u = v`.
pub fn alpha(u: Vec3, v: Vec3, xi: CollisionAngles) -> Vec3 {
    alpha_with_n(u, v, xi).0
}

fn alpha_with_n(u: Vec3, v: Vec3, xi: CollisionAngles) -> (Vec3, Vec3) {
    match deflection_vector(u, v, xi) {
        Ok(n) => (n * n.dot(u - v), n),
        Err(_) => (Vec3::ZERO, Vec3::ZERO),
    }
}

pub fn collide(u: Vec3, v: Vec3, xi: CollisionAngles) -> CollisionOutcome {
    let (a, n) = alpha_with_n(u, v, xi);
    CollisionOutcome {
        u_star: u - a,
        v_star: v + a,
        alpha: a,
        n,
    }
}

/// Collides, then re-collides the outgoing pair with the same deflection
/// vector, and returns the largest distance from the original pair.
pub fn involution_defect(u: Vec3, v: Vec3, xi: CollisionAngles) -> Result<f64, CollisionError> {
    let n = deflection_vector(u, v, xi)?;
    let first = collide(u, v, xi);
    let back = n * n.dot(first.u_star - first.v_star);
    let u2 = first.u_star - back;
    let v2 = first.v_star + back;
    Ok((u2 - u).norm().max((v2 - v).norm()))
}

//! The squaring map `z = w²` from Hooke billiards to Kepler billiards.
//!
//! With `z = w²` and fictitious time `ds = dt/|w|²`, a Kepler orbit of
//! energy `E` and mass `m` becomes an orbit of the isotropic oscillator
//! `w″ = (E/2) w` satisfying `2|w′|² − E|w|² = m`. The wall line `Im z = h`
//! pulls back to the rectangular hyperbola `2uv = h`.

use nalgebra::Vector2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrals::planar_energy;
use crate::model::PlanarState;

/// Position and fictitious-time velocity on the Hooke side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HookeState {
    pub w: Complex64,
    pub w_prime: Complex64,
    /// Kepler energy of the source trajectory.
    pub energy: f64,
}

impl HookeState {
    /// `2|w′|² − E|w|²`, equal to the Kepler mass along transported orbits.
    pub fn invariant(&self) -> f64 {
        2.0 * self.w_prime.norm_sqr() - self.energy * self.w.norm_sqr()
    }

    /// Maps back to the Kepler position and velocity.
    pub fn to_kepler(&self) -> (Complex64, Complex64) {
        let z = self.w * self.w;
        let zdot = 2.0 * self.w * self.w_prime / self.w.norm_sqr();
        (z, zdot)
    }
}

fn hooke_velocity(w: Complex64, zdot: Complex64) -> Complex64 {
    zdot * w.conj() / 2.0
}

/// Principal-branch image of a Kepler position and velocity.
pub fn kepler_to_hooke_point(z: Complex64, zdot: Complex64, energy: f64) -> Result<HookeState> {
    if z == Complex64::new(0.0, 0.0) {
        return Err(Error::OriginSingularity);
    }
    let w = z.sqrt();
    Ok(HookeState { w, w_prime: hooke_velocity(w, zdot), energy })
}

/// Complex position and velocity of a planar state.
pub fn planar_to_complex(s: &PlanarState) -> (Complex64, Complex64) {
    (Complex64::new(s.xi, s.eta), Complex64::new(s.xi_dot, s.eta_dot))
}

/// Square roots taken continuously along a trajectory: the principal branch
/// at the first point, then the root nearest the previous one.
#[derive(Debug, Clone, Default)]
pub struct BranchTracker {
    prev: Option<Complex64>,
}

impl BranchTracker {
    pub fn new() -> Self {
        BranchTracker::default()
    }

    pub fn map(&mut self, z: Complex64, zdot: Complex64, energy: f64) -> Result<HookeState> {
        let mut h = kepler_to_hooke_point(z, zdot, energy)?;
        if let Some(prev) = self.prev {
            if (h.w + prev).norm() < (h.w - prev).norm() {
                h.w = -h.w;
                h.w_prime = -h.w_prime;
            }
        }
        self.prev = Some(h.w);
        Ok(h)
    }

    pub fn map_planar(&mut self, s: &PlanarState, m: f64) -> Result<HookeState> {
        let (z, zdot) = planar_to_complex(s);
        self.map(z, zdot, planar_energy(s, m))
    }
}

/// Transports a sampled planar trajectory with continuous branch choice.
pub fn transport_trajectory(states: &[PlanarState], m: f64) -> Result<Vec<HookeState>> {
    let mut tracker = BranchTracker::new();
    states.iter().map(|s| tracker.map_planar(s, m)).collect()
}

/// The hyperbola `2uv = h`, preimage of the line `Im z = h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperbolaWall {
    pub h: f64,
}

impl HyperbolaWall {
    /// `2uv − h`.
    pub fn residual(&self, w: Complex64) -> f64 {
        2.0 * w.re * w.im - self.h
    }

    /// Unit normal `(v, u)/|w|`.
    pub fn normal(&self, w: Complex64) -> Vector2<f64> {
        Vector2::new(w.im, w.re) / w.norm()
    }

    /// Mirrors a velocity in the wall normal at `w`.
    pub fn reflect(&self, w: Complex64, w_prime: Complex64) -> Complex64 {
        let n = self.normal(w);
        let v = Vector2::new(w_prime.re, w_prime.im);
        let r = v - n * (2.0 * v.dot(&n));
        Complex64::new(r.x, r.y)
    }

    /// True for `h = 0`, where the image is the pair of coordinate axes.
    pub fn is_degenerate(&self) -> bool {
        self.h == 0.0
    }
}

/// Preimage of the wall line `Im z = h`.
pub fn line_image_wall(h: f64) -> Result<HyperbolaWall> {
    if h == 0.0 {
        return Err(Error::DegenerateLineThroughOrigin);
    }
    Ok(HyperbolaWall { h })
}

/// Relative mismatch with the mirror law, `|w′_out − mirror(w′_in)| / |w′_in|`.
pub fn reflection_defect(wall: &HyperbolaWall, before: &HookeState, after: &HookeState) -> f64 {
    let mirrored = wall.reflect(before.w, before.w_prime);
    (after.w_prime - mirrored).norm() / before.w_prime.norm().max(f64::MIN_POSITIVE)
}

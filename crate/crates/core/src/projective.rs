//! Central projections between affine planes and the chart normalization.
//!
//! A plane `V = {q : ⟨h, q⟩ = 1}` in 3-space is described by its covector
//! `h`. Projecting a point of `V₁` from the origin onto `V₂` divides it by
//! `λ = ⟨h₂, q₁⟩`; velocities pick up the time change `dτ/dt = λ⁻²`.
//!
//! The unnormalized planar chart `(x, y)` carries the metric
//! `‖(x, y)‖₂² = x² + y²/(1+a²)`, with the center at `(0, a)` and the wall
//! on `y = 0`. [`normalize_chart`] maps it to the Euclidean `(ξ, η)` chart
//! used everywhere else.

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrals::planar_energy;
use crate::model::{PlanarState, SystemParams};
use crate::planar::R_MIN;

/// The affine plane `{q : ⟨h_vec, q⟩ = 1}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffinePlane {
    h_vec: Vector3<f64>,
}

impl AffinePlane {
    pub fn new(h_vec: Vector3<f64>) -> Result<Self> {
        if !(h_vec.norm() > 0.0) || !h_vec.iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidState("plane covector must be finite and non-zero".into()));
        }
        Ok(AffinePlane { h_vec })
    }

    /// The plane `z = −1` tangent to the unit sphere at its south pole.
    pub fn south_tangent() -> Self {
        AffinePlane { h_vec: Vector3::new(0.0, 0.0, -1.0) }
    }

    pub fn h_vec(&self) -> Vector3<f64> {
        self.h_vec
    }

    /// `⟨h, q⟩`, the projection factor onto this plane.
    pub fn lambda(&self, q: &Vector3<f64>) -> f64 {
        self.h_vec.dot(q)
    }

    pub fn contains(&self, q: &Vector3<f64>, tol: f64) -> bool {
        (self.lambda(q) - 1.0).abs() <= tol
    }
}

/// Central projection of `q1` onto the plane with covector `h2`.
pub fn plane_plane_project(q1: &Vector3<f64>, h2: &Vector3<f64>) -> Result<Vector3<f64>> {
    let lambda = h2.dot(q1);
    if !(lambda > 0.0) {
        return Err(Error::WrongHalfPlane(lambda));
    }
    Ok(q1 / lambda)
}

/// Velocity of the projected motion with respect to the new time
/// `dτ = dt/λ²`: `λ q̇₁ − ⟨h₂, q̇₁⟩ q₁`.
pub fn pushforward_velocity(q1: &Vector3<f64>, v1: &Vector3<f64>, h2: &Vector3<f64>) -> Result<Vector3<f64>> {
    let lambda = h2.dot(q1);
    if !(lambda > 0.0) {
        return Err(Error::WrongHalfPlane(lambda));
    }
    Ok(v1 * lambda - q1 * h2.dot(v1))
}

/// Acceleration of the projected motion in the new time:
/// `λ²(λ q̈₁ − ⟨h₂, q̈₁⟩ q₁)`.
pub fn pushforward_acceleration(
    q1: &Vector3<f64>,
    acc1: &Vector3<f64>,
    h2: &Vector3<f64>,
) -> Result<Vector3<f64>> {
    let lambda = h2.dot(q1);
    if !(lambda > 0.0) {
        return Err(Error::WrongHalfPlane(lambda));
    }
    Ok((acc1 * lambda - q1 * h2.dot(acc1)) * (lambda * lambda))
}

/// Norm on 3-space that agrees with the Euclidean norm on the direction
/// space of `V₁ = {⟨h1, q⟩ = 1}` and vanishes on the line through `z1 ∈ V₁`.
pub fn star_norm(v: &Vector3<f64>, h1: &Vector3<f64>, z1: &Vector3<f64>) -> f64 {
    (v - z1 * h1.dot(v)).norm()
}

/// `‖v‖₂` of a tangent vector in the `(x, y)` chart.
pub fn metric2_norm(v: Vector2<f64>, a: f64) -> f64 {
    (v.x * v.x + v.y * v.y / (1.0 + a * a)).sqrt()
}

/// `‖·‖₂` distance from `(x, y)` to the center `(0, a)`.
pub fn metric2_distance_to_center(p: Vector2<f64>, a: f64) -> f64 {
    metric2_norm(Vector2::new(p.x, p.y - a), a)
}

/// A planar state in the unnormalized `(x, y)` chart.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChartState {
    pub x: f64,
    pub y: f64,
    pub x_dot: f64,
    pub y_dot: f64,
}

impl ChartState {
    pub const fn new(x: f64, y: f64, x_dot: f64, y_dot: f64) -> Self {
        ChartState { x, y, x_dot, y_dot }
    }

    pub fn position(&self) -> Vector2<f64> {
        Vector2::new(self.x, self.y)
    }

    pub fn velocity(&self) -> Vector2<f64> {
        Vector2::new(self.x_dot, self.y_dot)
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.x, self.y, self.x_dot, self.y_dot]
    }
}

/// `(x, y) ↦ (ξ, η) = (x, (y − a)/√(1+a²))`, with velocities alike.
pub fn normalize_chart(c: &ChartState, a: f64) -> PlanarState {
    let s = (1.0 + a * a).sqrt();
    PlanarState::new(c.x, (c.y - a) / s, c.x_dot, c.y_dot / s)
}

/// Inverse of [`normalize_chart`].
pub fn denormalize_chart(p: &PlanarState, a: f64) -> ChartState {
    let s = (1.0 + a * a).sqrt();
    ChartState::new(p.xi, s * p.eta + a, p.xi_dot, s * p.eta_dot)
}

/// Kepler energy written in the `(x, y)` chart with its metric `‖·‖₂`.
pub fn planar_energy_prenorm(c: &ChartState, params: &SystemParams) -> Result<f64> {
    let r = metric2_distance_to_center(c.position(), params.a);
    if !(r >= R_MIN) {
        return Err(Error::SingularPosition(r));
    }
    Ok(0.5 * metric2_norm(c.velocity(), params.a).powi(2) - params.m / r)
}

/// Energy of the normalized state, for comparison with
/// [`planar_energy_prenorm`].
pub fn planar_energy_normalized(c: &ChartState, params: &SystemParams) -> f64 {
    planar_energy(&normalize_chart(c, params.a), params.m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const SQ2: f64 = std::f64::consts::SQRT_2;

    #[test]
    fn projection_examples() {
        let h2 = Vector3::new(0.0, 1.0, 0.0);
        let q = Vector3::new(0.0, 1.0, -1.0);
        assert_eq!(plane_plane_project(&q, &h2).unwrap(), q);
        assert_eq!(plane_plane_project(&Vector3::new(0.0, 2.0, -1.0), &h2).unwrap(), Vector3::new(0.0, 1.0, -0.5));
        assert!(matches!(plane_plane_project(&Vector3::new(0.0, -1.0, -1.0), &h2), Err(Error::WrongHalfPlane(_))));
        assert!(matches!(plane_plane_project(&Vector3::new(1.0, 0.0, -1.0), &h2), Err(Error::WrongHalfPlane(_))));
    }

    #[test]
    fn metric_examples() {
        assert_eq!(metric2_norm(Vector2::new(3.0, 4.0), 0.0), 5.0);
        assert!((metric2_norm(Vector2::new(0.0, SQ2), 1.0) - 1.0).abs() < 1e-15);
        assert_eq!(metric2_distance_to_center(Vector2::new(1.0, 1.0), 1.0), 1.0);
    }

    #[test]
    fn normalization_examples() {
        let c = ChartState::new(0.3, -0.2, 1.0, 2.0);
        assert_eq!(normalize_chart(&c, 0.0).to_array(), c.to_array());
        let p = normalize_chart(&ChartState::new(0.0, 0.0, 0.0, SQ2), 1.0);
        assert!((p.eta + 1.0 / SQ2).abs() < 1e-15);
        assert!((p.eta - SystemParams::new(1.0, 1.0).h()).abs() < 1e-15);
        assert!((p.eta_dot - 1.0).abs() < 1e-15);
    }

    #[test]
    fn prenorm_energy_examples() {
        let e = planar_energy_prenorm(&ChartState::new(1.0, 1.0, 0.0, 0.0), &SystemParams::new(1.0, 1.0)).unwrap();
        assert_eq!(e, -1.0);
        let free = SystemParams { m: 0.0, a: 3.0, beta: 0.0 };
        assert_eq!(planar_energy_prenorm(&ChartState::new(0.5, 0.5, 2.0, 0.0), &free).unwrap(), 2.0);
        let c = ChartState::new(1.0, 0.0, 0.0, 1.0);
        assert_eq!(planar_energy_prenorm(&c, &SystemParams::new(1.0, 0.0)).unwrap(), -0.5);
        assert!(matches!(
            planar_energy_prenorm(&ChartState::new(0.0, 1.0, 0.0, 0.0), &SystemParams::new(1.0, 1.0)),
            Err(Error::SingularPosition(_))
        ));
    }

    fn kepler_accel3(q: &Vector3<f64>, z: &Vector3<f64>, m: f64) -> Vector3<f64> {
        let d = q - z;
        -d * (m / d.norm().powi(3))
    }

    proptest! {
        #[test]
        fn prenorm_energy_is_conjugate(x in -3.0f64..3.0, y in -3.0f64..3.0, vx in -2.0f64..2.0, vy in -2.0f64..2.0,
                                       a in 0.0f64..4.0, m in -2.0f64..2.0) {
            let params = SystemParams { m, a, beta: 0.0 };
            let c = ChartState::new(x, y, vx, vy);
            prop_assume!(metric2_distance_to_center(c.position(), a) > 1e-3);
            let e1 = planar_energy_prenorm(&c, &params).unwrap();
            let e2 = planar_energy_normalized(&c, &params);
            prop_assert!((e1 - e2).abs() <= 1e-13 * e1.abs().max(1.0));
            let back = denormalize_chart(&normalize_chart(&c, a), a);
            for (u, w) in back.to_array().iter().zip(c.to_array()) {
                prop_assert!((u - w).abs() <= 1e-13 * w.abs().max(1.0));
            }
        }

        #[test]
        fn projection_round_trip(x in -3.0f64..3.0, y in 0.1f64..3.0) {
            let h1 = Vector3::new(0.0, 0.0, -1.0);
            let h2 = Vector3::new(0.0, 1.0, 0.0);
            let q1 = Vector3::new(x, y, -1.0);
            let q2 = plane_plane_project(&q1, &h2).unwrap();
            prop_assert!((h2.dot(&q2) - 1.0).abs() < 1e-15);
            prop_assert!(q2.cross(&q1).norm() < 1e-13 * q1.norm());
            let back = plane_plane_project(&q2, &h1).unwrap();
            prop_assert!((back - q1).norm() <= 1e-13 * q1.norm());
        }

        #[test]
        fn projection_preserves_central_force(x in -3.0f64..3.0, y in 0.05f64..3.0, zy in 0.2f64..2.0, zx in -1.0f64..1.0,
                                              tilt in -0.5f64..0.5, m1 in 0.2f64..3.0) {
            let h1 = Vector3::new(0.0, 0.0, -1.0);
            let h2 = Vector3::new(0.0, 1.0, tilt);
            let z1 = Vector3::new(zx, zy, -1.0);
            let q1 = Vector3::new(x, y, -1.0);
            prop_assume!(h2.dot(&q1) > 0.05 && h2.dot(&z1) > 0.05 && (q1 - z1).norm() > 1e-2);
            let q2 = plane_plane_project(&q1, &h2).unwrap();
            let z2 = plane_plane_project(&z1, &h2).unwrap();
            let acc2 = pushforward_acceleration(&q1, &kepler_accel3(&q1, &z1, m1), &h2).unwrap();
            let d = q2 - z2;
            let m2 = m1 / h1.dot(&z2);
            let expected = -d * (m2 / star_norm(&d, &h1, &z1).powi(3));
            // magnitude m₂/‖d‖² in the projected metric
            let mag = star_norm(&acc2, &h1, &z1);
            prop_assert!((mag - m2 / star_norm(&d, &h1, &z1).powi(2)).abs() <= 1e-10 * mag);
            prop_assert!((acc2 - expected).norm() <= 1e-10 * expected.norm(), "{acc2:?} vs {expected:?}");
        }
    }
}

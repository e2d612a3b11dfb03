//! Domain types shared by every part of the crate.
//!
//! The planar problem always lives in the normalized `(ξ, η)` chart: the
//! Kepler–Coulomb center sits at the origin, the kinetic energy is the
//! Euclidean one and the line wall is `η = h` with `h = −a/√(1+a²)`.
//! The sphere is the unit sphere embedded in 3-space, with the center
//! `Z₁ = (0, a/√(1+a²), −1/√(1+a²))`.

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used for "exactly" equal configuration values.
const CONFIG_TOL: f64 = 1e-12;

/// Mass factor, center offset and centrifugal strength of a model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// Mass factor of the center; positive attracts, negative repels.
    pub m: f64,
    /// Offset of the center along the η-axis of the wall chart (`a ≥ 0`).
    pub a: f64,
    /// Strength of the extra `β/r³` centrifugal force (Boltzmann's model).
    #[serde(default)]
    pub beta: f64,
}

impl SystemParams {
    pub fn new(m: f64, a: f64) -> Self {
        Self { m, a, beta: 0.0 }
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    /// Signed level of the line wall in the normalized chart.
    pub fn h(&self) -> f64 {
        line_level(self.a)
    }

    /// Mass factor of the corresponding spherical problem, `m·√(1+a²)`.
    pub fn m_prime(&self) -> f64 {
        self.m * (1.0 + self.a * self.a).sqrt()
    }

    pub fn is_perturbed(&self) -> bool {
        self.beta != 0.0
    }

    /// The spherical center `Z₁` for this offset.
    pub fn spherical_center(&self) -> SphericalCenter {
        SphericalCenter::from_offset(self.a)
    }
}

/// `h(a) = −a/√(1+a²)`.
pub fn line_level(a: f64) -> f64 {
    -a / (1.0 + a * a).sqrt()
}

/// Position and velocity in the normalized planar chart.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanarState {
    pub xi: f64,
    pub eta: f64,
    pub xi_dot: f64,
    pub eta_dot: f64,
}

impl PlanarState {
    pub const fn new(xi: f64, eta: f64, xi_dot: f64, eta_dot: f64) -> Self {
        Self { xi, eta, xi_dot, eta_dot }
    }

    pub fn from_array(y: [f64; 4]) -> Self {
        Self::new(y[0], y[1], y[2], y[3])
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.xi, self.eta, self.xi_dot, self.eta_dot]
    }

    pub fn position(&self) -> Vector2<f64> {
        Vector2::new(self.xi, self.eta)
    }

    pub fn velocity(&self) -> Vector2<f64> {
        Vector2::new(self.xi_dot, self.eta_dot)
    }

    pub fn radius(&self) -> f64 {
        self.xi.hypot(self.eta)
    }

    pub fn speed(&self) -> f64 {
        self.xi_dot.hypot(self.eta_dot)
    }

    /// Radial velocity times radius, `q·v`.
    pub fn radial_product(&self) -> f64 {
        self.xi * self.xi_dot + self.eta * self.eta_dot
    }

    pub fn with_velocity(self, v: Vector2<f64>) -> Self {
        Self { xi_dot: v.x, eta_dot: v.y, ..self }
    }

    /// Rejects the singular origin and non-finite components.
    pub fn validate(&self) -> Result<()> {
        if !self.to_array().iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidState(format!("non-finite planar state {self:?}")));
        }
        if self.xi == 0.0 && self.eta == 0.0 {
            return Err(Error::SingularPosition(0.0));
        }
        Ok(())
    }
}

/// Point on the unit sphere with a tangent velocity, both in 3-space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphericalState {
    pub q: Vector3<f64>,
    pub v: Vector3<f64>,
}

/// Tolerance on `|q| − 1` and `q·v` for a valid spherical state.
pub const SPHERE_TOL: f64 = 1e-12;

impl SphericalState {
    /// Builds a state, checking that `q` is a unit vector and `v ⟂ q`.
    pub fn new(q: Vector3<f64>, v: Vector3<f64>) -> Result<Self> {
        let s = Self { q, v };
        s.check_constraints(SPHERE_TOL)?;
        Ok(s)
    }

    /// Projects arbitrary `(q, v)` onto the sphere's tangent bundle.
    pub fn projected(q: Vector3<f64>, v: Vector3<f64>) -> Result<Self> {
        let n = q.norm();
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::InvalidState("zero or non-finite position".into()));
        }
        let q = q / n;
        let v = v - q * q.dot(&v);
        Ok(Self { q, v })
    }

    pub fn from_array(y: [f64; 6]) -> Self {
        Self { q: Vector3::new(y[0], y[1], y[2]), v: Vector3::new(y[3], y[4], y[5]) }
    }

    pub fn to_array(self) -> [f64; 6] {
        [self.q.x, self.q.y, self.q.z, self.v.x, self.v.y, self.v.z]
    }

    /// Constraint residuals `(|q| − 1, q·v)`.
    pub fn constraint_residuals(&self) -> (f64, f64) {
        (self.q.norm() - 1.0, self.q.dot(&self.v))
    }

    pub fn check_constraints(&self, tol: f64) -> Result<()> {
        let (dn, dv) = self.constraint_residuals();
        if !(dn.abs() <= tol && dv.abs() <= tol * self.v.norm().max(1.0)) {
            return Err(Error::InvalidState(format!(
                "spherical state off the tangent bundle: |q|-1 = {dn:e}, q.v = {dv:e}"
            )));
        }
        Ok(())
    }

    /// Reprojects onto the unit sphere and removes the normal velocity.
    pub fn renormalized(self) -> Self {
        let q = self.q / self.q.norm();
        let v = self.v - q * q.dot(&self.v);
        Self { q, v }
    }
}

/// The attractive (for `m′ > 0`) center of the spherical problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphericalCenter {
    pub z1: Vector3<f64>,
}

impl SphericalCenter {
    pub fn from_offset(a: f64) -> Self {
        let s = (1.0 + a * a).sqrt();
        Self { z1: Vector3::new(0.0, a / s, -1.0 / s) }
    }
}

/// Which side of a wall the billiard dynamics occupies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Positive,
    Negative,
}

impl Side {
    pub fn sign(self) -> f64 {
        match self {
            Side::Positive => 1.0,
            Side::Negative => -1.0,
        }
    }

    pub fn from_sign(s: f64) -> Result<Self> {
        if s > 0.0 {
            Ok(Side::Positive)
        } else if s < 0.0 {
            Ok(Side::Negative)
        } else {
            Err(Error::Config("wall side must be +1 or -1".into()))
        }
    }
}

/// Shape of a reflection wall.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WallGeometry {
    /// The line `η = level` in the normalized planar chart.
    PlanarLine { level: f64 },
    /// Circle of radius `radius` about the planar center.
    PlanarCircle { radius: f64 },
    /// Great circle `{q : q·normal = 0}`.
    SphericalGreatCircle { normal: Vector3<f64> },
    /// Circle of colatitude `colatitude` about `Z₁`.
    SphericalCenteredCircle { colatitude: f64 },
}

/// A reflection wall plus the side on which the dynamics takes place.
///
/// Signed distances are taken positive on the dynamics side: for the line
/// that is `side·(η − h)`, for the planar circle `side·(r − R)`, for a great
/// circle `side·(q·w)` and for a centered circle `side·(q·Z₁ − cos θ_w)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wall {
    pub geometry: WallGeometry,
    pub side: Side,
}

impl Wall {
    pub fn line(level: f64, side: Side) -> Self {
        Self { geometry: WallGeometry::PlanarLine { level }, side }
    }

    /// The line wall at `η = h(a)` for the given parameters.
    pub fn line_for(params: &SystemParams, side: Side) -> Self {
        Self::line(params.h(), side)
    }

    pub fn circle(radius: f64, side: Side) -> Self {
        Self { geometry: WallGeometry::PlanarCircle { radius }, side }
    }

    pub fn great_circle(normal: Vector3<f64>, side: Side) -> Self {
        Self { geometry: WallGeometry::SphericalGreatCircle { normal }, side }
    }

    pub fn centered_circle(colatitude: f64, side: Side) -> Self {
        Self { geometry: WallGeometry::SphericalCenteredCircle { colatitude }, side }
    }

    pub fn is_spherical(&self) -> bool {
        matches!(
            self.geometry,
            WallGeometry::SphericalGreatCircle { .. } | WallGeometry::SphericalCenteredCircle { .. }
        )
    }

    pub fn kind_name(&self) -> &'static str {
        match self.geometry {
            WallGeometry::PlanarLine { .. } => "planar-line",
            WallGeometry::PlanarCircle { .. } => "planar-centered-circle",
            WallGeometry::SphericalGreatCircle { .. } => "spherical-great-circle",
            WallGeometry::SphericalCenteredCircle { .. } => "spherical-centered-circle",
        }
    }
}

/// Parameters and wall that passed [`validate_config`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidatedModel {
    params: SystemParams,
    wall: Wall,
}

impl ValidatedModel {
    pub fn params(&self) -> &SystemParams {
        &self.params
    }

    pub fn wall(&self) -> &Wall {
        &self.wall
    }

    pub fn is_spherical(&self) -> bool {
        self.wall.is_spherical()
    }
}

/// Checks the consistency of parameters and wall.
pub fn validate_config(params: SystemParams, wall: Wall) -> Result<ValidatedModel> {
    if !(params.m.is_finite() && params.a.is_finite() && params.beta.is_finite()) {
        return Err(Error::Config("non-finite system parameters".into()));
    }
    if params.m == 0.0 {
        return Err(Error::ZeroMass);
    }
    if params.a < 0.0 {
        return Err(Error::Config(format!("center offset a must be >= 0, got {}", params.a)));
    }
    if params.beta < 0.0 {
        return Err(Error::NegativeBeta(params.beta));
    }
    let wall = match wall.geometry {
        WallGeometry::PlanarLine { level } => {
            let h = params.h();
            if (level - h).abs() > CONFIG_TOL {
                return Err(Error::InconsistentWall(format!(
                    "line level {level} differs from h(a) = {h}"
                )));
            }
            wall
        }
        WallGeometry::PlanarCircle { radius } => {
            if !(radius > 0.0) {
                return Err(Error::NegativeRadius(radius));
            }
            wall
        }
        WallGeometry::SphericalGreatCircle { normal } => {
            if ((normal.norm() - 1.0).abs()) > CONFIG_TOL {
                return Err(Error::InconsistentWall(format!(
                    "great-circle normal must be a unit vector, |w| = {}",
                    normal.norm()
                )));
            }
            wall
        }
        WallGeometry::SphericalCenteredCircle { colatitude } => {
            if !(colatitude > 0.0 && colatitude < std::f64::consts::PI) {
                return Err(Error::InconsistentWall(format!(
                    "colatitude must lie in (0, pi), got {colatitude}"
                )));
            }
            wall
        }
    };
    if wall.is_spherical() && params.is_perturbed() {
        return Err(Error::Config("the centrifugal term is only defined for planar models".into()));
    }
    Ok(ValidatedModel { params, wall })
}

/// One wall hit: the arriving state, the reflected state and the first
/// integrals evaluated on both.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BounceRecord<S, I> {
    /// Time of the hit, measured from the start of the run.
    pub t_hit: f64,
    pub state_in: S,
    pub state_out: S,
    pub integrals_in: I,
    pub integrals_out: I,
    /// Grazing hit: the reflection acted as the identity.
    pub grazing: bool,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn boltzmann_line_through_center_is_valid() {
        let p = SystemParams::new(-1.0, 0.0);
        assert!(validate_config(p, Wall::line(0.0, Side::Negative)).is_ok());
    }

    #[test]
    fn line_level_must_match_offset() {
        let p = SystemParams::new(1.0, 1.0);
        assert!(validate_config(p, Wall::line(-1.0 / 2f64.sqrt(), Side::Negative)).is_ok());
        assert!(matches!(
            validate_config(p, Wall::line(0.0, Side::Negative)),
            Err(Error::InconsistentWall(_))
        ));
    }

    #[test]
    fn rejects_zero_mass_and_bad_radius() {
        assert_eq!(
            validate_config(SystemParams::new(0.0, 0.0), Wall::circle(1.0, Side::Positive)),
            Err(Error::ZeroMass)
        );
        assert_eq!(
            validate_config(SystemParams::new(1.0, 0.0), Wall::circle(-2.0, Side::Positive)),
            Err(Error::NegativeRadius(-2.0))
        );
    }

    #[test]
    fn spherical_center_is_unit() {
        for a in [0.0, 0.5, 1.0, 3.0, 100.0] {
            let z = SphericalCenter::from_offset(a).z1;
            assert!((z.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn m_prime_without_offset_is_m() {
        assert_eq!(SystemParams::new(-2.5, 0.0).m_prime(), -2.5);
    }

    proptest! {
        #[test]
        fn h_is_decreasing_and_bounded(a in 0.0f64..50.0, da in 1e-3f64..5.0) {
            let h0 = line_level(a);
            prop_assert!(h0 <= 0.0 && h0 > -1.0);
            prop_assert!(line_level(a + da) < h0);
        }
    }
}

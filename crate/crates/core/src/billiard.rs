//! Walls, reflections, wall-hit detection and the billiard map.
//!
//! A billiard trajectory follows the Kepler–Coulomb flow on one side of a
//! wall until it hits the wall, where the velocity is mirrored in the wall
//! normal. Signed wall distances are positive on the dynamics side.
//!
//! Hits are located either numerically (adaptive integration with dense
//! output and bracketed root finding) or, for the planar line wall without
//! centrifugal term, in closed form by intersecting the Kepler conic with
//! the line.

use std::fmt::Debug;

use nalgebra::{Vector2, Vector3};
use roots::{find_root_brent, Convergency};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrals::{angular_momentum, mechanical_energy, planar_energy, IntegralSet};
use crate::model::{
    BounceRecord, PlanarState, Side, SphericalState, SystemParams, ValidatedModel, Wall, WallGeometry,
};
use crate::ode::{integrate, Dop853, IntegratorConfig, OdeSystem};
use crate::planar::{
    collision_bounce, is_radial, orbit_elements, propagate_analytic, radial_time_from_center, ConicElements,
    PlanarField,
};
use crate::spherical::{
    axial_angular_momentum, planar_energy_embedded, spherical_energy_embedded, time_to_center, SphericalField,
};

/// A state counts as on the wall when its signed distance is below this.
pub const WALL_TOL: f64 = 1e-10;

/// Hits with `|v·n̂| < TANGENCY_TOL·|v|` are grazing.
pub const TANGENCY_TOL: f64 = 1e-8;

const ROOT_TOL: f64 = 1e-13;
const NEAR_PARABOLIC: f64 = 1e-7;

/// Signed distance of a point to a planar wall.
pub fn planar_signed_distance(q: &Vector2<f64>, wall: &Wall) -> f64 {
    let side = wall.side.sign();
    match wall.geometry {
        WallGeometry::PlanarLine { level } => side * (q.y - level),
        WallGeometry::PlanarCircle { radius } => side * (q.norm() - radius),
        _ => f64::NAN,
    }
}

/// Signed distance of a point of the sphere to a spherical wall.
pub fn spherical_signed_distance(q: &Vector3<f64>, wall: &Wall, params: &SystemParams) -> f64 {
    let side = wall.side.sign();
    match wall.geometry {
        WallGeometry::SphericalGreatCircle { normal } => side * q.dot(&normal),
        WallGeometry::SphericalCenteredCircle { colatitude } => {
            side * (q.dot(&params.spherical_center().z1) - colatitude.cos())
        }
        _ => f64::NAN,
    }
}

/// States that can bounce off a wall.
pub trait BilliardState: Copy + Debug + PartialEq {
    type Integrals: Copy + Debug + PartialEq;

    /// Signed distance of the position to the wall.
    fn signed_distance(&self, wall: &Wall, params: &SystemParams) -> f64;

    /// Unit wall normal at the position, pointing into the dynamics side.
    fn wall_normal(&self, wall: &Wall, params: &SystemParams) -> Self;

    /// `(v·n̂, |v|)` for the wall normal `n̂`.
    fn normal_velocity(&self, wall: &Wall, params: &SystemParams) -> (f64, f64);

    /// Mirrors the velocity in the wall normal, `v − 2(v·n̂)n̂`.
    fn mirror(&self, wall: &Wall, params: &SystemParams) -> Self;

    /// Moves the position exactly onto the wall.
    fn snapped(&self, wall: &Wall, params: &SystemParams) -> Self;

    fn integrals(&self, params: &SystemParams) -> Self::Integrals;
}

/// Signed distance of the state's position to the wall.
pub fn wall_signed_distance<S: BilliardState>(s: &S, wall: &Wall, params: &SystemParams) -> f64 {
    s.signed_distance(wall, params)
}

/// Reflects the velocity of a state lying on the wall.
pub fn reflect<S: BilliardState>(s: &S, wall: &Wall, params: &SystemParams) -> Result<S> {
    let g = s.signed_distance(wall, params);
    if !(g.abs() <= WALL_TOL) {
        return Err(Error::NotOnWall(g));
    }
    Ok(s.mirror(wall, params))
}

fn planar_normal(q: &Vector2<f64>, wall: &Wall) -> Vector2<f64> {
    let side = wall.side.sign();
    match wall.geometry {
        WallGeometry::PlanarLine { .. } => Vector2::new(0.0, side),
        WallGeometry::PlanarCircle { .. } => q * (side / q.norm()),
        _ => Vector2::repeat(f64::NAN),
    }
}

impl BilliardState for PlanarState {
    type Integrals = IntegralSet;

    fn signed_distance(&self, wall: &Wall, _params: &SystemParams) -> f64 {
        planar_signed_distance(&self.position(), wall)
    }

    fn wall_normal(&self, wall: &Wall, _params: &SystemParams) -> Self {
        let n = planar_normal(&self.position(), wall);
        PlanarState::new(self.xi, self.eta, n.x, n.y)
    }

    fn normal_velocity(&self, wall: &Wall, _params: &SystemParams) -> (f64, f64) {
        (self.velocity().dot(&planar_normal(&self.position(), wall)), self.speed())
    }

    fn mirror(&self, wall: &Wall, _params: &SystemParams) -> Self {
        let n = planar_normal(&self.position(), wall);
        let v = self.velocity();
        self.with_velocity(v - n * (2.0 * v.dot(&n)))
    }

    fn snapped(&self, wall: &Wall, _params: &SystemParams) -> Self {
        match wall.geometry {
            WallGeometry::PlanarLine { level } => PlanarState { eta: level, ..*self },
            WallGeometry::PlanarCircle { radius } => {
                let q = self.position() * (radius / self.radius());
                PlanarState { xi: q.x, eta: q.y, ..*self }
            }
            _ => *self,
        }
    }

    fn integrals(&self, params: &SystemParams) -> IntegralSet {
        IntegralSet::evaluate(self, params)
    }
}

/// Conserved quantities tracked along spherical billiard runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphericalIntegrals {
    /// `½|v|² − m′ cot θ`.
    pub e_sph: f64,
    /// Planar energy of the chart image, extended over the whole sphere.
    pub e_pl: f64,
    /// Angular momentum about the axis through the centers.
    pub l_axis: f64,
}

impl SphericalIntegrals {
    pub fn evaluate(s: &SphericalState, params: &SystemParams) -> Self {
        SphericalIntegrals {
            e_sph: spherical_energy_embedded(s, params).unwrap_or(f64::NAN),
            e_pl: planar_energy_embedded(s, params).unwrap_or(f64::NAN),
            l_axis: axial_angular_momentum(s, params),
        }
    }
}

fn spherical_normal(q: &Vector3<f64>, wall: &Wall, params: &SystemParams) -> Vector3<f64> {
    let axis = match wall.geometry {
        WallGeometry::SphericalGreatCircle { normal } => normal,
        WallGeometry::SphericalCenteredCircle { .. } => params.spherical_center().z1,
        _ => return Vector3::repeat(f64::NAN),
    };
    let t = axis - q * q.dot(&axis);
    t * (wall.side.sign() / t.norm())
}

impl BilliardState for SphericalState {
    type Integrals = SphericalIntegrals;

    fn signed_distance(&self, wall: &Wall, params: &SystemParams) -> f64 {
        spherical_signed_distance(&self.q, wall, params)
    }

    fn wall_normal(&self, wall: &Wall, params: &SystemParams) -> Self {
        SphericalState { q: self.q, v: spherical_normal(&self.q, wall, params) }
    }

    fn normal_velocity(&self, wall: &Wall, params: &SystemParams) -> (f64, f64) {
        (self.v.dot(&spherical_normal(&self.q, wall, params)), self.v.norm())
    }

    fn mirror(&self, wall: &Wall, params: &SystemParams) -> Self {
        let n = spherical_normal(&self.q, wall, params);
        SphericalState { q: self.q, v: self.v - n * (2.0 * self.v.dot(&n)) }
    }

    fn snapped(&self, wall: &Wall, params: &SystemParams) -> Self {
        let q = match wall.geometry {
            WallGeometry::SphericalGreatCircle { normal } => {
                let w = normal / normal.norm();
                self.q - w * self.q.dot(&w)
            }
            WallGeometry::SphericalCenteredCircle { colatitude } => {
                let z1 = params.spherical_center().z1;
                let u = self.q - z1 * self.q.dot(&z1);
                z1 * colatitude.cos() + u * (colatitude.sin() / u.norm())
            }
            _ => self.q,
        };
        SphericalState { q, v: self.v }.renormalized()
    }

    fn integrals(&self, params: &SystemParams) -> SphericalIntegrals {
        SphericalIntegrals::evaluate(self, params)
    }
}

/// Why a trajectory was declared to leave for good.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EscapeReason {
    /// The Kepler conic (or radial ray) has no forward intersection with the wall.
    NoForwardIntersection,
    /// Non-negative energy, receding radially, far beyond the wall.
    Receding,
    /// A repulsive net force pushes the particle away from the wall it is
    /// already moving away from.
    RepelledFromWall,
}

/// Passage through the attractive center by elastic bouncing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollisionEvent<S> {
    /// Time at which the center is reached.
    pub t_collision: f64,
    /// Time of `state_out`.
    pub t_resume: f64,
    /// The retraced state: same position as before the collision, reversed velocity.
    pub state_out: S,
}

/// Result of following the flow to the next wall contact.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HitOutcome<S: BilliardState> {
    Hit(BounceRecord<S, S::Integrals>),
    /// Grazing contact; the record's outgoing state equals the incoming one.
    Tangency(BounceRecord<S, S::Integrals>),
    Escape { t: f64, state: S, reason: EscapeReason },
    Collision(CollisionEvent<S>),
}

fn bounce_outcome<S: BilliardState>(t: f64, s_in: S, wall: &Wall, params: &SystemParams) -> HitOutcome<S> {
    let s_in = s_in.snapped(wall, params);
    let (vn, speed) = s_in.normal_velocity(wall, params);
    let grazing = !(vn.abs() >= TANGENCY_TOL * speed);
    let s_out = if grazing { s_in } else { s_in.mirror(wall, params) };
    let record = BounceRecord {
        t_hit: t,
        state_in: s_in,
        state_out: s_out,
        integrals_in: s_in.integrals(params),
        integrals_out: s_out.integrals(params),
        grazing,
    };
    if grazing {
        HitOutcome::Tangency(record)
    } else {
        HitOutcome::Hit(record)
    }
}

struct RootTol;

impl Convergency<f64> for RootTol {
    fn is_root_found(&mut self, y: f64) -> bool {
        y.abs() < ROOT_TOL
    }

    fn is_converged(&mut self, x1: f64, x2: f64) -> bool {
        (x1 - x2).abs() <= 2.0 * f64::EPSILON * x1.abs().max(x2.abs())
    }

    fn is_iteration_limit_reached(&mut self, iter: usize) -> bool {
        iter >= 200
    }
}

enum Located<const N: usize, T> {
    Crossing { t: f64, y: [f64; N] },
    Stopped { t: f64, y: [f64; N], tag: T },
    Timeout,
}

/// Dense-output samples per step scanned for sign changes.
const SAMPLES: usize = 8;

/// Integrates until `g` changes sign from positive to non-positive, `check`
/// returns a tag, or `t_max` is reached.
#[allow(clippy::too_many_arguments)]
fn locate<const N: usize, F: OdeSystem<N>, T>(
    field: &F,
    t0: f64,
    y0: [f64; N],
    t_max: f64,
    cfg: IntegratorConfig,
    g: &dyn Fn(&[f64; N]) -> f64,
    ceiling: &dyn Fn(&[f64; N]) -> f64,
    check: &mut dyn FnMut(&[f64; N]) -> Result<Option<T>>,
    project: Option<fn([f64; N]) -> [f64; N]>,
    observer: &mut dyn FnMut(f64, &[f64; N]),
) -> Result<Located<N, T>> {
    if let Some(tag) = check(&y0)? {
        return Ok(Located::Stopped { t: t0, y: y0, tag });
    }
    let g0 = g(&y0);
    if !(g0 >= -WALL_TOL) {
        return Err(Error::InvalidState(format!("start lies outside the dynamics side (distance {g0:e})")));
    }
    // starting on the wall: wait until the motion is clearly inside
    let mut armed = g0 > WALL_TOL;
    let mut it = Dop853::new(field, t0, y0, cfg);
    while it.t() < t_max {
        let ceil = ceiling(it.y()).min(t_max - it.t());
        let step = it.step(field, ceil)?;
        let mut prev = (step.t0, g(&step.y0));
        for k in 1..=SAMPLES {
            let t = if k == SAMPLES { step.t1() } else { step.t0 + step.h * k as f64 / SAMPLES as f64 };
            let gk = g(&step.eval(t));
            if !armed {
                if gk > WALL_TOL {
                    armed = true;
                } else if gk < -WALL_TOL {
                    return Err(Error::InvalidState("motion leaves the dynamics side at the start".into()));
                }
            } else if prev.1 > 0.0 && gk <= 0.0 {
                let t_hit = find_root_brent(prev.0, t, |s| g(&step.eval(s)), &mut RootTol).unwrap_or(t);
                // the interpolant is less accurate than the steps themselves
                let y = integrate(field, step.t0, step.y0, t_hit, cfg)?;
                return Ok(Located::Crossing { t: t_hit, y });
            }
            prev = (t, gk);
        }
        let mut y1 = step.y1;
        if let Some(p) = project {
            y1 = p(y1);
            it.reset_state(field, step.t1(), y1);
        }
        observer(step.t1(), &y1);
        if let Some(tag) = check(&y1)? {
            return Ok(Located::Stopped { t: step.t1(), y: y1, tag });
        }
    }
    Ok(Located::Timeout)
}

enum Stop {
    Collision,
    Escape(EscapeReason),
}

fn planar_parts(model: &ValidatedModel) -> Result<(SystemParams, Wall)> {
    if model.is_spherical() {
        return Err(Error::Config("a planar state needs a planar wall".into()));
    }
    Ok((*model.params(), *model.wall()))
}

fn spherical_parts(model: &ValidatedModel) -> Result<(SystemParams, Wall)> {
    if !model.is_spherical() {
        return Err(Error::Config("a spherical state needs a spherical wall".into()));
    }
    Ok((*model.params(), *model.wall()))
}

/// Radius beyond which receding orbits count as escaped.
pub fn escape_radius(wall: &Wall) -> f64 {
    let scale = match wall.geometry {
        WallGeometry::PlanarLine { level } => level.abs(),
        WallGeometry::PlanarCircle { radius } => radius,
        _ => 1.0,
    };
    1e3 * scale.max(1.0)
}

/// Sufficient conditions for never reaching the wall again.
pub fn escape_certificate(s: &PlanarState, params: &SystemParams, wall: &Wall) -> Option<EscapeReason> {
    let (m, beta) = (params.m, params.beta);
    let r = s.radius();
    let r_dot = s.radial_product() / r;
    let receding = || {
        let turning = if m > 0.0 { (angular_momentum(s).powi(2) + beta) / (2.0 * m) } else { 0.0 };
        mechanical_energy(s, params) >= 0.0 && r_dot > 0.0 && r > escape_radius(wall).max(turning)
    };
    let center_inside = planar_signed_distance(&Vector2::zeros(), wall) >= -WALL_TOL;
    match wall.geometry {
        WallGeometry::PlanarLine { .. } => {
            let away = wall.side.sign() * s.eta_dot;
            if m <= 0.0 && !center_inside && away >= 0.0 {
                Some(EscapeReason::RepelledFromWall)
            } else if receding() && away > 2.0 * ((m.abs() + beta / r) / r).sqrt() {
                Some(EscapeReason::Receding)
            } else {
                None
            }
        }
        WallGeometry::PlanarCircle { .. } if wall.side == Side::Positive => {
            if m <= 0.0 && r_dot >= 0.0 {
                Some(EscapeReason::RepelledFromWall)
            } else if receding() {
                Some(EscapeReason::Receding)
            } else {
                None
            }
        }
        _ => None,
    }
}

fn planar_collision(t: f64, s: &PlanarState, params: &SystemParams) -> Result<HitOutcome<PlanarState>> {
    let passage = collision_bounce(s, params)?;
    Ok(HitOutcome::Collision(CollisionEvent {
        t_collision: t + passage.t_collision,
        t_resume: t + passage.elapsed,
        state_out: passage.state_out,
    }))
}

/// Follows the planar flow numerically from time `t0` to the next wall
/// contact.
pub fn next_hit_numeric(
    t0: f64,
    state: &PlanarState,
    model: &ValidatedModel,
    cfg: IntegratorConfig,
    t_max: f64,
) -> Result<HitOutcome<PlanarState>> {
    next_hit_numeric_observed(t0, state, model, cfg, t_max, &mut |_, _| {})
}

/// [`next_hit_numeric`], reporting every accepted integrator step.
pub fn next_hit_numeric_observed(
    t0: f64,
    state: &PlanarState,
    model: &ValidatedModel,
    cfg: IntegratorConfig,
    t_max: f64,
    observer: &mut dyn FnMut(f64, &PlanarState),
) -> Result<HitOutcome<PlanarState>> {
    let (params, wall) = planar_parts(model)?;
    state.validate()?;
    let center_inside = planar_signed_distance(&Vector2::zeros(), &wall) >= -WALL_TOL;
    let collision_orbit = params.m > 0.0 && !params.is_perturbed() && center_inside && is_radial(state);

    if let WallGeometry::PlanarLine { level } = wall.geometry {
        if !params.is_perturbed() && !is_radial(state) && conic_line_crossing(state, &params, level)?.is_none() {
            return Ok(HitOutcome::Escape { t: t0, state: *state, reason: EscapeReason::NoForwardIntersection });
        }
    }

    let field = PlanarField { params };
    let g = |y: &[f64; 4]| planar_signed_distance(&Vector2::new(y[0], y[1]), &wall);
    let ceiling = |y: &[f64; 4]| {
        let r = y[0].hypot(y[1]);
        let v = y[2].hypot(y[3]).max(f64::MIN_POSITIVE);
        (0.25 * g(y).abs() / v).max(1e-4 * r / v)
    };
    let mut check = |y: &[f64; 4]| {
        let s = PlanarState::from_array(*y);
        if collision_orbit && s.radial_product() < 0.0 {
            return Ok(Some(Stop::Collision));
        }
        Ok(escape_certificate(&s, &params, &wall).map(Stop::Escape))
    };
    let mut obs = |t: f64, y: &[f64; 4]| observer(t, &PlanarState::from_array(*y));
    match locate(&field, t0, state.to_array(), t_max, cfg, &g, &ceiling, &mut check, None, &mut obs)? {
        Located::Crossing { t, y } => Ok(bounce_outcome(t, PlanarState::from_array(y), &wall, &params)),
        Located::Stopped { t, y, tag: Stop::Collision } => planar_collision(t, &PlanarState::from_array(y), &params),
        Located::Stopped { t, y, tag: Stop::Escape(reason) } => {
            Ok(HitOutcome::Escape { t, state: PlanarState::from_array(y), reason })
        }
        Located::Timeout => Err(Error::Undetermined(t_max)),
    }
}

/// Follows the spherical flow numerically from time `t0` to the next wall
/// contact. Orbits falling into the attractive center bounce back.
pub fn next_hit_spherical(
    t0: f64,
    state: &SphericalState,
    model: &ValidatedModel,
    cfg: IntegratorConfig,
    t_max: f64,
) -> Result<HitOutcome<SphericalState>> {
    next_hit_spherical_observed(t0, state, model, cfg, t_max, &mut |_, _| {})
}

/// [`next_hit_spherical`], reporting every accepted integrator step.
pub fn next_hit_spherical_observed(
    t0: f64,
    state: &SphericalState,
    model: &ValidatedModel,
    cfg: IntegratorConfig,
    t_max: f64,
    observer: &mut dyn FnMut(f64, &SphericalState),
) -> Result<HitOutcome<SphericalState>> {
    let (params, wall) = spherical_parts(model)?;
    state.check_constraints(1e-9)?;
    let z1 = params.spherical_center().z1;
    let center_inside = spherical_signed_distance(&z1, &wall, &params) >= -WALL_TOL;

    let field = SphericalField::new(&params);
    let g = |y: &[f64; 6]| spherical_signed_distance(&Vector3::new(y[0], y[1], y[2]), &wall, &params);
    let ceiling = |y: &[f64; 6]| {
        let v = Vector3::new(y[3], y[4], y[5]).norm().max(f64::MIN_POSITIVE);
        (0.25 * g(y).abs() / v).max(1e-4 / v)
    };
    let mut check = |y: &[f64; 6]| -> Result<Option<f64>> {
        if !center_inside {
            return Ok(None);
        }
        time_to_center(&SphericalState::from_array(*y), &params)
    };
    let project: fn([f64; 6]) -> [f64; 6] = |y| SphericalState::from_array(y).renormalized().to_array();
    let mut obs = |t: f64, y: &[f64; 6]| observer(t, &SphericalState::from_array(*y));
    match locate(&field, t0, state.to_array(), t_max, cfg, &g, &ceiling, &mut check, Some(project), &mut obs)? {
        Located::Crossing { t, y } => {
            Ok(bounce_outcome(t, SphericalState::from_array(y).renormalized(), &wall, &params))
        }
        Located::Stopped { t, y, tag: tc } => {
            let s = SphericalState::from_array(y);
            Ok(HitOutcome::Collision(CollisionEvent {
                t_collision: t + tc,
                t_resume: t + 2.0 * tc,
                state_out: SphericalState { q: s.q, v: -s.v },
            }))
        }
        Located::Timeout => Err(Error::Undetermined(t_max)),
    }
}

/// Perifocal frame: `x` along the Laplace–Runge–Lenz vector, `y` oriented
/// with the sense of motion.
fn perifocal(el: &ConicElements, p: &Vector2<f64>) -> (f64, f64) {
    let lrl = el.lrl();
    let ex = if el.eccentricity > 1e-12 { lrl / lrl.norm() } else { Vector2::new(1.0, 0.0) };
    let ey = Vector2::new(-ex.y, ex.x) * el.angular_momentum.signum();
    (p.dot(&ex), p.dot(&ey))
}

/// Time since the reference passage (pericenter or vertex) at a point of
/// the conic.
fn conic_clock(el: &ConicElements, p: &Vector2<f64>) -> f64 {
    let (m, e) = (el.m, el.eccentricity);
    let (x, y) = perifocal(el, p);
    if m > 0.0 && (e - 1.0).abs() < NEAR_PARABOLIC {
        let p3 = el.semi_latus_rectum.powi(3);
        let d = (0.5 * y.atan2(x)).tan();
        return 0.5 * (p3 / m).sqrt() * (d + d * d * d / 3.0);
    }
    let a = (m / (2.0 * el.energy)).abs();
    let n = (m.abs() / a.powi(3)).sqrt();
    if m > 0.0 && e < 1.0 {
        let ecc = (y / (a * (1.0 - e * e).sqrt())).atan2(x / a + e);
        (ecc - e * ecc.sin()) / n
    } else {
        let hyp = (y / (a * (e * e - 1.0).sqrt())).asinh();
        if m > 0.0 {
            (e * hyp.sinh() - hyp) / n
        } else {
            (e * hyp.sinh() + hyp) / n
        }
    }
}

/// Forward flight time along the conic between two of its points.
fn flight_time(el: &ConicElements, from: &Vector2<f64>, to: &Vector2<f64>) -> f64 {
    let dt = conic_clock(el, to) - conic_clock(el, from);
    match el.period() {
        Some(period) => dt.rem_euclid(period),
        None => dt,
    }
}

/// Estimated time until the Kepler conic through `s` first reaches the line
/// `η = level`, skipping the current position when it already lies there.
fn conic_line_crossing(s: &PlanarState, params: &SystemParams, level: f64) -> Result<Option<f64>> {
    let el = orbit_elements(s, params)?;
    let m = params.m;
    let l2 = el.angular_momentum.powi(2);
    let (ax, ay) = (el.a_xi, el.a_eta);
    // A·q = L² − m r on the conic; with η = level this is quadratic in ξ
    let c = l2 - ay * level;
    let qa = m * m - ax * ax;
    let qb = 2.0 * c * ax;
    let qc = m * m * level * level - c * c;
    let mut xs: Vec<f64> = Vec::with_capacity(2);
    if qa.abs() <= 1e-14 * m * m {
        if qb != 0.0 {
            xs.push(-qc / qb);
        }
    } else {
        let scale = qb * qb + 4.0 * qa.abs() * (m * m * level * level + c * c);
        let disc = qb * qb - 4.0 * qa * qc;
        if disc.abs() <= 1e-12 * scale {
            // tangency: rounding would split the double root by ~√ε
            xs.push(-qb / (2.0 * qa));
        } else if disc > 0.0 {
            let sq = disc.sqrt();
            let q = -0.5 * (qb + qb.signum() * sq);
            if q != 0.0 {
                xs.push(q / qa);
                xs.push(qc / q);
            } else {
                xs.push(-qb / (2.0 * qa));
            }
        }
    }
    let start = s.position();
    let on_wall = (s.eta - level).abs() <= WALL_TOL;
    let mut best: Option<f64> = None;
    for xi in xs {
        let r = xi.hypot(level);
        let rhs = c - ax * xi;
        // squaring admits points of the mirror conic; keep the physical branch
        if (m * r - rhs).abs() > 1e-8 * (m.abs() * r).max(c.abs() + (ax * xi).abs()).max(1.0) {
            continue;
        }
        if on_wall && (xi - s.xi).abs() <= 1e-8 * xi.abs().max(1.0) {
            continue;
        }
        let dt = flight_time(&el, &start, &Vector2::new(xi, level));
        if dt > 0.0 && best.is_none_or(|b| dt < b) {
            best = Some(dt);
        }
    }
    Ok(best)
}

/// Newton refinement of a crossing time of `η = level`.
fn polish_line_crossing(s: &PlanarState, params: &SystemParams, level: f64, mut dt: f64) -> Result<f64> {
    for _ in 0..8 {
        let p = propagate_analytic(s, dt, params)?;
        if !(p.eta_dot.abs() > TANGENCY_TOL * p.speed()) {
            break;
        }
        let step = (p.eta - level) / p.eta_dot;
        if step.abs() > 1e-3 * dt.abs().max(1.0) {
            break;
        }
        dt -= step;
        if step.abs() <= 2.0 * f64::EPSILON * dt.abs() {
            break;
        }
    }
    Ok(dt)
}

/// Time along a radial orbit since its inner end (the center for `m > 0`,
/// the turning point for `m < 0`) at radius `r`, moving outward.
fn radial_clock(r: f64, energy: f64, m: f64) -> f64 {
    if m > 0.0 {
        radial_time_from_center(r, energy, m)
    } else {
        let a = -m / (2.0 * energy);
        let h = (r / a - 1.0).max(1.0).acosh();
        (a.powi(3) / -m).sqrt() * (h.sinh() + h)
    }
}

/// Closed-form next contact of a radial orbit with the line `η = level`.
fn radial_line_event(
    t0: f64,
    s: &PlanarState,
    params: &SystemParams,
    wall: &Wall,
    level: f64,
) -> Result<HitOutcome<PlanarState>> {
    let m = params.m;
    let r0 = s.radius();
    let u = s.position() / r0;
    let energy = planar_energy(s, m);
    let inbound = s.radial_product() < 0.0;
    let r_inner = if m > 0.0 { 0.0 } else { -m / energy };
    let r_outer = if m > 0.0 && energy < 0.0 { m / -energy } else { f64::INFINITY };
    let rw = (u.y != 0.0).then(|| level / u.y).filter(|&r| r > r_inner && r <= r_outer && r.is_finite());
    let tau0 = radial_clock(r0, energy, m);
    let tau = |r: f64| radial_clock(r, energy, m);

    // (time to the hit, moving outward at the hit)
    let hit = match (inbound, rw) {
        (true, Some(rw)) if rw < r0 => Some((tau0 - tau(rw), false)),
        (true, _) if m > 0.0 => return planar_collision(t0, s, params),
        (true, Some(rw)) => Some((tau0 + tau(rw), true)),
        (false, Some(rw)) if rw > r0 => Some((tau(rw) - tau0, true)),
        (false, Some(rw)) if m > 0.0 && energy < 0.0 => Some((2.0 * tau(r_outer) - tau(rw) - tau0, false)),
        (false, None) if m > 0.0 && energy < 0.0 => return planar_collision(t0, s, params),
        _ => None,
    };
    let Some((dt, outward)) = hit else {
        return Ok(HitOutcome::Escape { t: t0, state: *s, reason: EscapeReason::NoForwardIntersection });
    };
    let rw = rw.unwrap_or(r0);
    let speed = (2.0 * (energy + m / rw)).max(0.0).sqrt();
    let v = u * if outward { speed } else { -speed };
    let q = u * rw;
    let state_in = PlanarState::new(q.x, level, v.x, v.y);
    Ok(bounce_outcome(t0 + dt, state_in, wall, params))
}

/// Next contact with the planar line wall from time `t0`, computed from the
/// Kepler conic in closed form.
pub fn next_hit_analytic_line(t0: f64, state: &PlanarState, model: &ValidatedModel) -> Result<HitOutcome<PlanarState>> {
    let (params, wall) = planar_parts(model)?;
    let WallGeometry::PlanarLine { level } = wall.geometry else {
        return Err(Error::Config("the closed-form wall hit needs a line wall".into()));
    };
    if params.is_perturbed() {
        return Err(Error::PerturbedModel(params.beta));
    }
    state.validate()?;
    let g0 = planar_signed_distance(&state.position(), &wall);
    if !(g0 >= -WALL_TOL) {
        return Err(Error::InvalidState(format!("start lies outside the dynamics side (distance {g0:e})")));
    }
    if is_radial(state) {
        return radial_line_event(t0, state, &params, &wall, level);
    }
    let Some(estimate) = conic_line_crossing(state, &params, level)? else {
        return Ok(HitOutcome::Escape { t: t0, state: *state, reason: EscapeReason::NoForwardIntersection });
    };
    let dt = polish_line_crossing(state, &params, level, estimate)?;
    let s_in = propagate_analytic(state, dt, &params)?;
    Ok(bounce_outcome(t0 + dt, s_in, &wall, &params))
}

/// How wall hits are located.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Closed-form conic intersection (planar line wall, no centrifugal term).
    Analytic,
    #[default]
    Numeric,
}

/// Settings for [`billiard_map`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub mode: Mode,
    pub integrator: IntegratorConfig,
    /// Time limit for the whole run.
    pub t_max: f64,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { mode: Mode::Numeric, integrator: IntegratorConfig::default(), t_max: f64::INFINITY }
    }
}

/// How a run ended.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RunEnd<S> {
    /// The requested number of bounces was reached.
    Completed,
    Escaped { t: f64, state: S, reason: EscapeReason },
    /// Neither a hit nor an escape certificate before `t_max`.
    Undetermined { t_max: f64 },
}

/// Bounces, collision passages and the end of a billiard run.
#[derive(Debug, Clone, PartialEq)]
pub struct BilliardRun<S: BilliardState> {
    pub records: Vec<BounceRecord<S, S::Integrals>>,
    pub collisions: Vec<CollisionEvent<S>>,
    pub end: RunEnd<S>,
}

impl<S: BilliardState> BilliardRun<S> {
    fn new() -> Self {
        BilliardRun { records: Vec::new(), collisions: Vec::new(), end: RunEnd::Completed }
    }
}

type NextHit<'a, S> = dyn FnMut(f64, &S, &mut dyn FnMut(f64, &S)) -> Result<HitOutcome<S>> + 'a;

fn iterate<S: BilliardState>(
    state: &S,
    n: usize,
    t_max: f64,
    next: &mut NextHit<'_, S>,
    observer: &mut dyn FnMut(f64, &S),
) -> Result<BilliardRun<S>> {
    let mut run = BilliardRun::new();
    let (mut t, mut s) = (0.0, *state);
    observer(t, &s);
    while run.records.len() < n {
        let outcome = match next(t, &s, observer) {
            Err(Error::Undetermined(t_max)) => {
                run.end = RunEnd::Undetermined { t_max };
                break;
            }
            other => other?,
        };
        match outcome {
            HitOutcome::Hit(rec) | HitOutcome::Tangency(rec) => {
                if rec.t_hit > t_max {
                    run.end = RunEnd::Undetermined { t_max };
                    break;
                }
                observer(rec.t_hit, &rec.state_in);
                observer(rec.t_hit, &rec.state_out);
                t = rec.t_hit;
                s = rec.state_out;
                run.records.push(rec);
            }
            HitOutcome::Collision(ev) => {
                if ev.t_resume > t_max {
                    run.end = RunEnd::Undetermined { t_max };
                    break;
                }
                observer(ev.t_resume, &ev.state_out);
                t = ev.t_resume;
                s = ev.state_out;
                run.collisions.push(ev);
            }
            HitOutcome::Escape { t, state, reason } => {
                run.end = RunEnd::Escaped { t, state, reason };
                break;
            }
        }
    }
    Ok(run)
}

/// Samples between analytic hits handed to observers.
const ANALYTIC_SAMPLES: usize = 32;

/// Iterates "flow to the wall, reflect" `n` times from a planar state on
/// the dynamics side.
pub fn billiard_map(
    state: &PlanarState,
    n: usize,
    model: &ValidatedModel,
    opts: &RunOptions,
) -> Result<BilliardRun<PlanarState>> {
    billiard_map_observed(state, n, model, opts, &mut |_, _| {})
}

/// [`billiard_map`], reporting trajectory samples: integrator steps (or
/// evenly spaced points in analytic mode) and both sides of every bounce.
pub fn billiard_map_observed(
    state: &PlanarState,
    n: usize,
    model: &ValidatedModel,
    opts: &RunOptions,
    observer: &mut dyn FnMut(f64, &PlanarState),
) -> Result<BilliardRun<PlanarState>> {
    let (params, wall) = planar_parts(model)?;
    let opts = *opts;
    let mut next: Box<NextHit<'_, PlanarState>> = match opts.mode {
        Mode::Numeric => Box::new(move |t, s, obs| next_hit_numeric_observed(t, s, model, opts.integrator, opts.t_max, obs)),
        Mode::Analytic => {
            if params.is_perturbed() || !matches!(wall.geometry, WallGeometry::PlanarLine { .. }) {
                return Err(Error::Config("analytic mode needs a line wall and no centrifugal term".into()));
            }
            Box::new(move |t, s, obs| {
                let outcome = next_hit_analytic_line(t, s, model)?;
                if let HitOutcome::Hit(rec) | HitOutcome::Tangency(rec) = &outcome {
                    let span = (rec.t_hit.min(opts.t_max) - t).max(0.0);
                    for k in 1..ANALYTIC_SAMPLES {
                        let dt = span * k as f64 / ANALYTIC_SAMPLES as f64;
                        obs(t + dt, &propagate_analytic(s, dt, &params)?);
                    }
                }
                Ok(outcome)
            })
        }
    };
    iterate(state, n, opts.t_max, &mut *next, observer)
}

/// Spherical counterpart of [`billiard_map`].
pub fn spherical_billiard_map(
    state: &SphericalState,
    n: usize,
    model: &ValidatedModel,
    opts: &RunOptions,
) -> Result<BilliardRun<SphericalState>> {
    spherical_billiard_map_observed(state, n, model, opts, &mut |_, _| {})
}

/// [`spherical_billiard_map`] with trajectory samples.
pub fn spherical_billiard_map_observed(
    state: &SphericalState,
    n: usize,
    model: &ValidatedModel,
    opts: &RunOptions,
    observer: &mut dyn FnMut(f64, &SphericalState),
) -> Result<BilliardRun<SphericalState>> {
    spherical_parts(model)?;
    if opts.mode == Mode::Analytic {
        return Err(Error::Config("spherical walls are only supported in numeric mode".into()));
    }
    let opts = *opts;
    let mut next = |t: f64, s: &SphericalState, obs: &mut dyn FnMut(f64, &SphericalState)| {
        next_hit_spherical_observed(t, s, model, opts.integrator, opts.t_max, obs)
    };
    iterate(state, n, opts.t_max, &mut next, observer)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_config;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_1_SQRT_2, PI, TAU};

    const S3: f64 = 0.866_025_403_784_438_6;

    fn line_model(m: f64, a: f64, side: Side) -> ValidatedModel {
        let p = SystemParams::new(m, a);
        validate_config(p, Wall::line_for(&p, side)).unwrap()
    }

    fn close(a: &PlanarState, b: &PlanarState, tol: f64) -> bool {
        a.to_array().iter().zip(b.to_array()).all(|(x, y)| (x - y).abs() <= tol * y.abs().max(1.0))
    }

    fn cfg() -> IntegratorConfig {
        IntegratorConfig::with_tolerance(1e-12)
    }

    #[test]
    fn signed_distance_examples() {
        let p = SystemParams::new(1.0, 0.0);
        let line = Wall::line(0.0, Side::Positive);
        assert_eq!(wall_signed_distance(&PlanarState::new(1.0, 0.5, 0.0, 0.0), &line, &p), 0.5);
        let circle = Wall::circle(2.0, Side::Positive);
        assert_eq!(wall_signed_distance(&PlanarState::new(0.0, 1.0, 0.0, 0.0), &circle, &p), -1.0);
        let gc = Wall::great_circle(Vector3::new(1.0, 0.0, 0.0), Side::Positive);
        let s = SphericalState::new(Vector3::new(0.0, 0.0, -1.0), Vector3::zeros()).unwrap();
        assert_eq!(wall_signed_distance(&s, &gc, &p), 0.0);
    }

    #[test]
    fn reflection_examples() {
        let p = SystemParams::new(1.0, 1.0);
        let line = Wall::line_for(&p, Side::Positive);
        let s = PlanarState::new(0.2, p.h(), 0.3, -0.7);
        assert_eq!(reflect(&s, &line, &p).unwrap(), PlanarState::new(0.2, p.h(), 0.3, 0.7));
        let circle = Wall::circle(1.5, Side::Negative);
        let s = PlanarState::new(1.5, 0.0, -1.0, 0.2);
        assert_eq!(reflect(&s, &circle, &p).unwrap(), PlanarState::new(1.5, 0.0, 1.0, 0.2));
        let gc = Wall::great_circle(Vector3::new(1.0, 0.0, 0.0), Side::Positive);
        let s = SphericalState::new(Vector3::new(0.0, 0.0, -1.0), Vector3::new(0.5, 0.2, 0.0)).unwrap();
        assert_eq!(reflect(&s, &gc, &p).unwrap().v, Vector3::new(-0.5, 0.2, 0.0));
        let off = PlanarState::new(0.2, 0.5, 0.3, -0.7);
        assert!(matches!(reflect(&off, &line, &p), Err(Error::NotOnWall(_))));
    }

    #[test]
    fn circular_orbit_hits_line() {
        let model = line_model(1.0, 1.0 / 3f64.sqrt(), Side::Positive);
        assert!((model.params().h() + 0.5).abs() < 1e-15);
        let s = PlanarState::new(S3, -0.5, 0.5, S3);
        let expected_in = PlanarState::new(-S3, -0.5, 0.5, -S3);
        let HitOutcome::Hit(rec) = next_hit_numeric(0.0, &s, &model, cfg(), 100.0).unwrap() else { panic!() };
        assert!(close(&rec.state_in, &expected_in, 1e-9), "{:?}", rec.state_in);
        assert!((rec.t_hit - 4.0 * PI / 3.0).abs() < 1e-9);
        let HitOutcome::Hit(rec) = next_hit_analytic_line(0.0, &s, &model).unwrap() else { panic!() };
        assert!(close(&rec.state_in, &expected_in, 1e-12), "{:?}", rec.state_in);
        assert!(close(&rec.state_out, &PlanarState::new(-S3, -0.5, 0.5, S3), 1e-12));
        assert!((rec.t_hit - 4.0 * PI / 3.0).abs() < 1e-12);
    }

    #[test]
    fn repulsive_receding_orbit_escapes() {
        let model = line_model(-1.0, 1.0, Side::Negative);
        let h = model.params().h();
        let s = PlanarState::new(0.3, h - 0.5, 0.2, -1.0);
        let out = next_hit_numeric(0.0, &s, &model, cfg(), 1e3).unwrap();
        assert!(matches!(out, HitOutcome::Escape { .. }), "{out:?}");
        let out = next_hit_analytic_line(0.0, &s, &model).unwrap();
        assert!(matches!(out, HitOutcome::Escape { reason: EscapeReason::NoForwardIntersection, .. }));
    }

    #[test]
    fn ellipse_above_line_never_hits() {
        let model = line_model(1.0, 3.0, Side::Positive);
        let s = PlanarState::new(0.5, 0.0, 0.0, 1.2);
        let out = next_hit_analytic_line(0.0, &s, &model).unwrap();
        assert!(matches!(out, HitOutcome::Escape { reason: EscapeReason::NoForwardIntersection, .. }), "{out:?}");
    }

    #[test]
    fn parabola_tangent_to_line_grazes() {
        // parabola with pericenter (0, h) on the line: A along −η, v = √(2m/r) along ξ
        let model = line_model(1.0, 1.0, Side::Positive);
        let h = model.params().h();
        let s0 = PlanarState::new(0.0, h, (2.0 / h.abs()).sqrt(), 0.0);
        let el = orbit_elements(&s0, model.params()).unwrap();
        assert!((el.eccentricity - 1.0).abs() < 1e-14);
        // start half a unit of time before the pericenter
        let start = propagate_analytic(&s0, -0.5, model.params()).unwrap();
        let out = next_hit_analytic_line(0.0, &start, &model).unwrap();
        let HitOutcome::Tangency(rec) = out else { panic!("{out:?}") };
        assert!(rec.grazing && rec.state_in == rec.state_out);
        assert!((rec.t_hit - 0.5).abs() < 1e-6);
    }

    #[test]
    fn radial_fall_bounces_at_center_then_hits_line() {
        // center above the line; start between them moving up toward the center
        let model = line_model(1.0, 1.0, Side::Positive);
        let h = model.params().h();
        let s = PlanarState::new(0.0, -0.3, 0.0, 2.5);
        let out = next_hit_numeric(0.0, &s, &model, cfg(), 100.0).unwrap();
        let HitOutcome::Collision(ev) = out else { panic!("{out:?}") };
        let oracle = collision_bounce(&s, model.params()).unwrap();
        assert_eq!(ev.state_out, oracle.state_out);
        assert_eq!(ev.t_resume, oracle.elapsed);
        for hit in [
            next_hit_numeric(ev.t_resume, &ev.state_out, &model, cfg(), 100.0).unwrap(),
            next_hit_analytic_line(ev.t_resume, &ev.state_out, &model).unwrap(),
        ] {
            let HitOutcome::Hit(rec) = hit else { panic!("{hit:?}") };
            assert!(rec.state_in.xi.abs() < 1e-12 && (rec.state_in.eta - h).abs() < 1e-12);
            assert!(rec.state_out.eta_dot > 0.0);
        }
        // line through the center
        let model = line_model(1.0, 0.0, Side::Positive);
        let s = PlanarState::new(0.0, 1.0, 0.0, -0.3);
        assert!(matches!(next_hit_numeric(0.0, &s, &model, cfg(), 100.0).unwrap(), HitOutcome::Collision(_)));
    }

    #[test]
    fn radial_orbits_hit_the_line_analytically() {
        // away from the center toward the line below it, bound and unbound
        let model = line_model(1.0, 1.0, Side::Positive);
        for speed in [2.7, 4.0] {
            let u = Vector2::new(0.1, -0.2);
            let v = u * (speed / u.norm());
            let s = PlanarState::new(u.x, u.y, v.x, v.y);
            let a = next_hit_analytic_line(0.0, &s, &model).unwrap();
            let n = next_hit_numeric(0.0, &s, &model, cfg(), 100.0).unwrap();
            match (a, n) {
                (HitOutcome::Hit(ra), HitOutcome::Hit(rn)) => {
                    assert!(close(&ra.state_in, &rn.state_in, 1e-8), "{ra:?} {rn:?}");
                    assert!((ra.t_hit - rn.t_hit).abs() < 1e-8);
                }
                other => panic!("{other:?}"),
            }
        }
        // repulsive: falls in, turns, and leaves along the ray
        let model = line_model(-1.0, 1.0, Side::Positive);
        let s = PlanarState::new(0.0, -0.3, 0.0, 0.9);
        let a = next_hit_analytic_line(0.0, &s, &model).unwrap();
        let n = next_hit_numeric(0.0, &s, &model, cfg(), 100.0).unwrap();
        let (HitOutcome::Hit(ra), HitOutcome::Hit(rn)) = (a, n) else { panic!("{a:?} {n:?}") };
        assert!(close(&ra.state_in, &rn.state_in, 1e-8) && (ra.t_hit - rn.t_hit).abs() < 1e-8);
    }

    #[test]
    fn circle_walls() {
        let p = SystemParams::new(1.0, 0.0);
        let inside = validate_config(p, Wall::circle(2.0, Side::Negative)).unwrap();
        let s = PlanarState::new(1.0, 0.0, 0.0, 1.2);
        let HitOutcome::Hit(rec) = next_hit_numeric(0.0, &s, &inside, cfg(), 100.0).unwrap() else { panic!() };
        assert!((rec.state_in.radius() - 2.0).abs() < 1e-12);
        assert!(rec.state_in.radial_product() > 0.0 && rec.state_out.radial_product() < 0.0);
        let l = |x: &PlanarState| angular_momentum(x).powi(2);
        assert!((l(&rec.state_in) - l(&rec.state_out)).abs() < 1e-12);
        let outside = validate_config(p, Wall::circle(0.5, Side::Positive)).unwrap();
        let s = PlanarState::new(1.0, 0.0, 0.1, 1.6);
        let out = next_hit_numeric(0.0, &s, &outside, cfg(), 1e5).unwrap();
        assert!(matches!(out, HitOutcome::Escape { reason: EscapeReason::Receding, .. }), "{out:?}");
    }

    #[test]
    fn numeric_run_without_hit_is_undetermined() {
        let p = SystemParams::new(1.0, 0.0);
        let inside = validate_config(p, Wall::circle(5.0, Side::Negative)).unwrap();
        let s = PlanarState::new(1.0, 0.0, 0.0, 1.0);
        assert_eq!(next_hit_numeric(0.0, &s, &inside, cfg(), 20.0), Err(Error::Undetermined(20.0)));
    }

    #[test]
    fn spherical_great_circle_bounce() {
        let p = SystemParams::new(1.0, 0.5);
        let model = validate_config(p, Wall::great_circle(Vector3::new(0.0, 1.0, 0.0), Side::Negative)).unwrap();
        let s = crate::spherical::planar_to_sphere(&PlanarState::new(0.4, -0.9, 0.6, 0.5), p.a);
        let out = next_hit_spherical(0.0, &s, &model, cfg(), 100.0).unwrap();
        let HitOutcome::Hit(rec) = out else { panic!("{out:?}") };
        assert!(rec.state_in.q.y.abs() < 1e-10);
        assert!((rec.integrals_in.e_sph - rec.integrals_out.e_sph).abs() < 1e-12);
        assert!((rec.integrals_in.e_pl - rec.integrals_out.e_pl).abs() < 1e-12);
    }

    #[test]
    fn spherical_radial_fall_bounces() {
        let p = SystemParams::new(1.0, 0.0);
        let model = validate_config(p, Wall::centered_circle(1.2, Side::Positive)).unwrap();
        let s = SphericalState::projected(Vector3::new(0.5, 0.0, -1.0), Vector3::new(-2.5, 0.0, -1.25)).unwrap();
        let out = next_hit_spherical(0.0, &s, &model, cfg(), 100.0).unwrap();
        let HitOutcome::Collision(ev) = out else { panic!("{out:?}") };
        assert_eq!(ev.state_out.q, s.q);
        assert_eq!(ev.state_out.v, -s.v);
        let HitOutcome::Hit(rec) = next_hit_spherical(ev.t_resume, &ev.state_out, &model, cfg(), 100.0).unwrap()
        else {
            panic!()
        };
        assert!((rec.state_in.q.dot(&p.spherical_center().z1) - 1.2f64.cos()).abs() < 1e-10);
    }

    #[test]
    fn billiard_map_zero_bounces() {
        let model = line_model(1.0, 1.0, Side::Positive);
        let s = PlanarState::new(0.5, 0.0, 0.0, 1.0);
        for mode in [Mode::Analytic, Mode::Numeric] {
            let run = billiard_map(&s, 0, &model, &RunOptions { mode, ..RunOptions::default() }).unwrap();
            assert!(run.records.is_empty() && run.end == RunEnd::Completed);
        }
    }

    #[test]
    fn billiard_map_conserves_line_integrals() {
        let model = line_model(1.0, 1.0, Side::Positive);
        let s = PlanarState::new(0.3, model.params().h(), 0.5, 0.8);
        let opts = RunOptions { mode: Mode::Analytic, integrator: cfg(), t_max: 1e6 };
        let run = billiard_map(&s, 50, &model, &opts).unwrap();
        assert_eq!(run.records.len(), 50, "{:?}", run.end);
        let d0 = run.records[0].integrals_in.d;
        for rec in &run.records {
            assert!((rec.integrals_out.d - d0).abs() < 1e-10 * d0.abs().max(1.0));
            assert!((rec.state_in.eta - model.params().h()).abs() < 1e-10);
        }
    }

    fn bound_state_on_wall() -> impl Strategy<Value = (PlanarState, f64)> {
        (0.0f64..3.0, -1.5f64..1.5, 0.0f64..PI, 0.3f64..1.2).prop_map(|(a, xi, phi, v)| {
            let h = crate::model::line_level(a);
            (PlanarState::new(xi, h, v * phi.cos(), v * phi.sin()), a)
        })
    }

    proptest! {
        #[test]
        fn reflect_is_an_involution((s, a) in bound_state_on_wall(), m in prop_oneof![Just(1.0), Just(-1.0)]) {
            let p = SystemParams::new(m, a);
            let wall = Wall::line_for(&p, Side::Positive);
            let once = reflect(&s, &wall, &p).unwrap();
            prop_assert_eq!(reflect(&once, &wall, &p).unwrap(), s);
            prop_assert_eq!(once.speed(), s.speed());
            let d = |x: &PlanarState| IntegralSet::evaluate(x, &p).d;
            prop_assert!((d(&once) - d(&s)).abs() <= 1e-12 * d(&s).abs().max(1.0));
        }

        #[test]
        fn circle_reflection_round_trips(r in 0.3f64..3.0, phi in 0.0f64..TAU, u in -2.0f64..2.0, w in -2.0f64..2.0) {
            let p = SystemParams::new(1.0, 0.0);
            let wall = Wall::circle(r, Side::Negative);
            let s = PlanarState::new(r * phi.cos(), r * phi.sin(), u, w).snapped(&wall, &p);
            let back = reflect(&reflect(&s, &wall, &p).unwrap(), &wall, &p).unwrap();
            prop_assert!(close(&back, &s, 1e-14));
            prop_assert!((reflect(&s, &wall, &p).unwrap().speed() - s.speed()).abs() <= 1e-15 * s.speed().max(1.0));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn analytic_and_numeric_hits_agree((s, a) in bound_state_on_wall()) {
            let model = line_model(1.0, a, Side::Positive);
            let el = orbit_elements(&s, model.params()).unwrap();
            // close passes of the center are beyond the integrator's resolution
            prop_assume!(el.semi_latus_rectum / (1.0 + el.eccentricity) > 1e-3);
            let an = next_hit_analytic_line(0.0, &s, &model).unwrap();
            let nu = next_hit_numeric(0.0, &s, &model, cfg(), 1e4).unwrap();
            match (an, nu) {
                (HitOutcome::Hit(x), HitOutcome::Hit(y)) => {
                    prop_assert!(close(&x.state_in, &y.state_in, 1e-8), "{:?} vs {:?}", x.state_in, y.state_in);
                    prop_assert!((x.t_hit - y.t_hit).abs() <= 1e-8 * x.t_hit.max(1.0));
                }
                (HitOutcome::Escape { .. }, HitOutcome::Escape { .. }) => {}
                other => prop_assert!(false, "{:?}", other),
            }
        }
    }

    #[test]
    fn perpendicular_speed_scale() {
        let s = PlanarState::new(0.0, -FRAC_1_SQRT_2, 1.0, 1e-10);
        let p = SystemParams::new(1.0, 1.0);
        let (vn, speed) = s.normal_velocity(&Wall::line_for(&p, Side::Positive), &p);
        assert!(vn.abs() < TANGENCY_TOL * speed);
    }
}

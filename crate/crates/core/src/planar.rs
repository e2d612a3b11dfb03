//! Planar Kepler–Coulomb flow in the normalized chart.
//!
//! The center sits at the origin with mass factor `m` (attractive for
//! `m > 0`). Boltzmann's variant adds a repulsive centrifugal force
//! `β q/r⁴`, i.e. a potential `β/(2r²)`.
//!
//! Exact propagation uses universal variables: with `β_E = −2E` and the
//! Stumpff-type functions `G_k(ψ)`, the equation
//! `r₀G₁ + σ₀G₂ + mG₃ = Δt` (with `σ₀ = q₀·v₀`) fixes `ψ`, and the state
//! follows from the Lagrange coefficients. The same code path covers the
//! elliptic, parabolic and hyperbolic cases and both signs of `m`.

use std::f64::consts::{PI, TAU};

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrals::{angular_momentum, lrl_eta, lrl_xi, planar_energy};
use crate::model::{PlanarState, SystemParams};
use crate::ode::OdeSystem;

/// Below this radius the field is treated as singular.
pub const R_MIN: f64 = 1e-12;

/// Relative tolerance on `|L| / (r |v|)` for treating an orbit as radial.
pub const RADIAL_TOL: f64 = 1e-10;

/// Acceleration `−m q/r³ + β q/r⁴`.
pub fn kepler_accel(position: Vector2<f64>, params: &SystemParams) -> Result<Vector2<f64>> {
    let r = position.norm();
    if !(r >= R_MIN) {
        return Err(Error::SingularPosition(r));
    }
    Ok(accel_unchecked(position, r, params))
}

#[inline]
fn accel_unchecked(q: Vector2<f64>, r: f64, params: &SystemParams) -> Vector2<f64> {
    let r3 = r * r * r;
    let radial = -params.m / r3 + params.beta / (r3 * r);
    q * radial
}

/// The planar vector field on `(ξ, η, ξ̇, η̇)`.
#[derive(Debug, Clone, Copy)]
pub struct PlanarField {
    pub params: SystemParams,
}

impl OdeSystem<4> for PlanarField {
    fn rhs(&self, _t: f64, y: &[f64; 4]) -> [f64; 4] {
        let q = Vector2::new(y[0], y[1]);
        let a = accel_unchecked(q, q.norm(), &self.params);
        [y[2], y[3], a.x, a.y]
    }
}

/// Conic described by a Keplerian state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConicElements {
    pub energy: f64,
    pub angular_momentum: f64,
    pub a_xi: f64,
    pub a_eta: f64,
    pub eccentricity: f64,
    pub semi_latus_rectum: f64,
    /// Direction of the Laplace–Runge–Lenz vector (the pericenter for `m > 0`).
    pub periapsis_angle: f64,
    pub m: f64,
}

impl ConicElements {
    pub fn lrl(&self) -> Vector2<f64> {
        Vector2::new(self.a_xi, self.a_eta)
    }

    pub fn is_bound(&self) -> bool {
        self.m > 0.0 && self.energy < 0.0
    }

    /// Semi-major axis magnitude `|m/(2E)|` (infinite for parabolas).
    pub fn semi_major_axis(&self) -> f64 {
        (self.m / (2.0 * self.energy)).abs()
    }

    /// Orbital period of a bound orbit.
    pub fn period(&self) -> Option<f64> {
        self.is_bound().then(|| TAU * (self.semi_major_axis().powi(3) / self.m).sqrt())
    }
}

/// Energy, angular momentum, Laplace–Runge–Lenz vector and shape of the
/// Kepler conic through `state`.
pub fn orbit_elements(state: &PlanarState, params: &SystemParams) -> Result<ConicElements> {
    if params.is_perturbed() {
        return Err(Error::PerturbedModel(params.beta));
    }
    state.validate()?;
    let m = params.m;
    let l = angular_momentum(state);
    let (a_xi, a_eta) = (lrl_xi(state, m), lrl_eta(state, m));
    Ok(ConicElements {
        energy: planar_energy(state, m),
        angular_momentum: l,
        a_xi,
        a_eta,
        eccentricity: a_xi.hypot(a_eta) / m.abs(),
        semi_latus_rectum: l * l / m.abs(),
        periapsis_angle: a_eta.atan2(a_xi),
        m,
    })
}

const KEPLER_MAX_ITER: usize = 200;

/// Solves Kepler's equation for the anomaly.
///
/// * `e < 1`: eccentric anomaly `E` with `E − e sin E = M`,
/// * `e > 1`: hyperbolic anomaly `H` with `e sinh H − H = M`,
/// * `e = 1`: `D = tan(ν/2)` with Barker's equation `D + D³/3 = M`.
pub fn solve_kepler_equation(mean_anomaly: f64, e: f64) -> Result<f64> {
    if !(e >= 0.0) || !mean_anomaly.is_finite() {
        return Err(Error::NonConvergence { mean_anomaly, eccentricity: e });
    }
    if e < 1.0 {
        kepler_elliptic(mean_anomaly, e)
    } else if e > 1.0 {
        kepler_hyperbolic(mean_anomaly, e)
    } else {
        Ok(barker(mean_anomaly))
    }
}

/// Residual of the Kepler equation matching [`solve_kepler_equation`].
pub fn kepler_residual(anomaly: f64, mean_anomaly: f64, e: f64) -> f64 {
    if e < 1.0 {
        anomaly - e * anomaly.sin() - mean_anomaly
    } else if e > 1.0 {
        e * anomaly.sinh() - anomaly - mean_anomaly
    } else {
        anomaly + anomaly.powi(3) / 3.0 - mean_anomaly
    }
}

/// Safeguarded Newton iteration on an increasing function with a bracket.
fn newton_bracketed(
    f: impl Fn(f64) -> (f64, f64),
    mut lo: f64,
    mut hi: f64,
    mut x: f64,
    fail: Error,
) -> Result<f64> {
    for _ in 0..KEPLER_MAX_ITER {
        let (fx, dfx) = f(x);
        if fx == 0.0 {
            return Ok(x);
        }
        if fx < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let mut next = x - fx / dfx;
        if !(next > lo && next < hi) || !next.is_finite() {
            // geometric bisection when the bracket spans decades
            next = if lo > 0.0 && hi > 4.0 * lo { (lo * hi).sqrt() } else { 0.5 * (lo + hi) };
        }
        if (next - x).abs() <= 4.0 * f64::EPSILON * next.abs().max(1e-300) || hi - lo <= 4.0 * f64::EPSILON * hi.abs()
        {
            return Ok(next);
        }
        x = next;
    }
    Err(fail)
}

fn kepler_elliptic(mean_anomaly: f64, e: f64) -> Result<f64> {
    // reduce to [-π, π]
    let k = (mean_anomaly / TAU).round();
    let m = mean_anomaly - k * TAU;
    let (sign, m) = if m < 0.0 { (-1.0, -m) } else { (1.0, m) };
    if m == 0.0 {
        return Ok(k * TAU);
    }
    let start = if e < 0.8 { m + e * m.sin() } else { PI.min(m + e) };
    let fail = Error::NonConvergence { mean_anomaly, eccentricity: e };
    // (1−e)x ≤ x − e sin x ≤ x on [0, π]
    let (lo, hi) = (m, PI.min(m / (1.0 - e)));
    let start = start.clamp(lo, hi);
    let root = newton_bracketed(|x| (x - e * x.sin() - m, 1.0 - e * x.cos()), lo, hi, start, fail)?;
    Ok(sign * root + k * TAU)
}

fn kepler_hyperbolic(mean_anomaly: f64, e: f64) -> Result<f64> {
    let (sign, m) = if mean_anomaly < 0.0 { (-1.0, -mean_anomaly) } else { (1.0, mean_anomaly) };
    let hi = (m / (e - 1.0)).asinh();
    let start = (m / e).asinh().max((2.0 * m / e + 1.8).ln().min(hi)).min(hi);
    let fail = Error::NonConvergence { mean_anomaly, eccentricity: e };
    if m == 0.0 {
        return Ok(0.0);
    }
    // (e−1) sinh x ≤ e sinh x − x ≤ e sinh x
    let lo = (m / e).asinh();
    let root = newton_bracketed(|x| (e * x.sinh() - x - m, e * x.cosh() - 1.0), lo, hi, start.clamp(lo, hi), fail)?;
    Ok(sign * root)
}

fn barker(mean_anomaly: f64) -> f64 {
    let (sign, m) = if mean_anomaly < 0.0 { (-1.0, -mean_anomaly) } else { (1.0, mean_anomaly) };
    let w = 1.5 * m;
    let y = (w + (w * w + 1.0).sqrt()).cbrt();
    let mut d = y - 1.0 / y;
    // cancellation for small m; polish
    for _ in 0..3 {
        d -= (d + d * d * d / 3.0 - m) / (1.0 + d * d);
    }
    sign * d
}

/// `G₀..G₃` of the universal formulation for `β_E = −2E`.
pub(crate) fn universal_functions(psi: f64, beta: f64) -> [f64; 4] {
    let z = beta * psi * psi;
    let (c0, c1, c2, c3);
    if z.abs() < 1.0 {
        // series Σ (−z)^j/(2j+k)!
        let mut s = [0.0; 4];
        for (k, sk) in s.iter_mut().enumerate() {
            let mut term = 1.0 / (1..=k).map(|i| i as f64).product::<f64>();
            let mut j = 0usize;
            loop {
                *sk += term;
                j += 1;
                let denom = ((2 * j + k - 1) * (2 * j + k)) as f64;
                term *= -z / denom;
                if term.abs() < 1e-18 * sk.abs().max(1e-300) || j > 30 {
                    break;
                }
            }
        }
        (c0, c1, c2, c3) = (s[0], s[1], s[2], s[3]);
    } else if z > 0.0 {
        let sz = z.sqrt();
        c0 = sz.cos();
        c1 = sz.sin() / sz;
        c2 = (1.0 - c0) / z;
        c3 = (sz - sz.sin()) / (z * sz);
    } else {
        let sz = (-z).sqrt();
        c0 = sz.cosh();
        c1 = sz.sinh() / sz;
        c2 = (1.0 - c0) / z;
        c3 = (sz.sinh() - sz) / (-z * sz);
    }
    [c0, psi * c1, psi * psi * c2, psi * psi * psi * c3]
}

/// Radial-orbit test `|L| ≤ RADIAL_TOL · r|v|`.
pub fn is_radial(state: &PlanarState) -> bool {
    angular_momentum(state).abs() <= RADIAL_TOL * state.radius() * state.speed()
}

/// Exact Kepler propagation of `state` by `dt` (any sign).
pub fn propagate_analytic(state: &PlanarState, dt: f64, params: &SystemParams) -> Result<PlanarState> {
    if params.is_perturbed() {
        return Err(Error::PerturbedModel(params.beta));
    }
    state.validate()?;
    if dt == 0.0 {
        return Ok(*state);
    }
    let m = params.m;
    if is_radial(state) && m > 0.0 {
        let (fwd, back) = if dt > 0.0 { (*state, dt) } else { (reversed(state), -dt) };
        if let Some(tc) = time_to_collision(&fwd, m) {
            if tc <= back {
                return Err(Error::CollisionInsideInterval);
            }
        }
    }
    Ok(universal_step(state, dt, m))
}

pub(crate) fn reversed(s: &PlanarState) -> PlanarState {
    PlanarState::new(s.xi, s.eta, -s.xi_dot, -s.eta_dot)
}

/// Universal-variable propagation without collision checks.
pub(crate) fn universal_step(state: &PlanarState, dt: f64, m: f64) -> PlanarState {
    let q0 = state.position();
    let v0 = state.velocity();
    let r0 = q0.norm();
    let sigma0 = q0.dot(&v0);
    let energy = 0.5 * v0.norm_squared() - m / r0;
    let beta = -2.0 * energy;

    // one full period brings a bound orbit back to its start
    let mut t = dt;
    if beta > 0.0 && m > 0.0 {
        let period = TAU * m / beta.powf(1.5);
        t -= period * (t / period).round();
        if t == 0.0 {
            return *state;
        }
    }

    let kepler = |psi: f64| {
        let g = universal_functions(psi, beta);
        let f = r0 * g[1] + sigma0 * g[2] + m * g[3] - t;
        let r = r0 * g[0] + sigma0 * g[1] + m * g[2];
        (f, r, g)
    };

    // bracket the root of the increasing function F(ψ)
    let dir = t.signum();
    let mut step = t.abs() / r0;
    let (mut lo, mut hi) = (0.0f64, 0.0f64);
    if beta > 0.0 && m > 0.0 {
        // one period corresponds to Δψ = 2π/√β
        step = step.min(TAU / beta.sqrt());
    }
    let mut probe = dir * step;
    for _ in 0..2000 {
        let (f, _, _) = kepler(probe);
        if f * dir >= 0.0 {
            if dir > 0.0 {
                hi = probe;
            } else {
                lo = probe;
            }
            break;
        }
        if dir > 0.0 {
            lo = probe;
        } else {
            hi = probe;
        }
        probe *= 2.0;
    }

    let mut psi = 0.5 * (lo + hi);
    for _ in 0..200 {
        let (f, r, _) = kepler(psi);
        if f == 0.0 {
            break;
        }
        if f < 0.0 {
            lo = psi;
        } else {
            hi = psi;
        }
        let mut next = psi - f / r;
        if !(next > lo && next < hi) || !next.is_finite() {
            // geometric bisection when the bracket spans decades
            next = if lo > 0.0 && hi > 4.0 * lo { (lo * hi).sqrt() } else { 0.5 * (lo + hi) };
        }
        let done = (next - psi).abs() <= 2.0 * f64::EPSILON * next.abs().max(f64::MIN_POSITIVE);
        psi = next;
        if done || hi - lo <= 2.0 * f64::EPSILON * hi.abs().max(lo.abs()) {
            break;
        }
    }

    let (_, r, g) = kepler(psi);
    let f = 1.0 - m * g[2] / r0;
    let gg = r0 * g[1] + sigma0 * g[2];
    let fdot = -m * g[1] / (r * r0);
    let gdot = 1.0 - m * g[2] / r;
    let q = q0 * f + v0 * gg;
    let v = q0 * fdot + v0 * gdot;
    PlanarState::new(q.x, q.y, v.x, v.y)
}

/// `x − sin x` without cancellation for small `x`.
fn x_minus_sin(x: f64) -> f64 {
    if x.abs() < 0.5 {
        let x2 = x * x;
        let mut term = x * x2 / 6.0;
        let mut sum: f64 = 0.0;
        let mut k = 3.0;
        while term.abs() > 1e-18 * sum.abs().max(1e-300) {
            sum += term;
            term *= -x2 / ((k + 1.0) * (k + 2.0));
            k += 2.0;
        }
        sum
    } else {
        x - x.sin()
    }
}

/// `sinh x − x` without cancellation for small `x`.
fn sinh_minus_x(x: f64) -> f64 {
    if x.abs() < 0.5 {
        let x2 = x * x;
        let mut term = x * x2 / 6.0;
        let mut sum: f64 = 0.0;
        let mut k = 3.0;
        while term.abs() > 1e-18 * sum.abs().max(1e-300) {
            sum += term;
            term *= x2 / ((k + 1.0) * (k + 2.0));
            k += 2.0;
        }
        sum
    } else {
        x.sinh() - x
    }
}

/// Time a radial orbit at distance `r` has spent since leaving the center.
pub(crate) fn radial_time_from_center(r: f64, energy: f64, m: f64) -> f64 {
    if (2.0 * energy * r / m).abs() < 1e-14 {
        return 2f64.sqrt() / 3.0 * r.powf(1.5) / m.sqrt();
    }
    if energy < 0.0 {
        let a = m / (-2.0 * energy);
        // r = a(1 − cos E); use the half-angle form to keep precision
        let ecc = 2.0 * (r / (2.0 * a)).sqrt().min(1.0).asin();
        (a.powi(3) / m).sqrt() * x_minus_sin(ecc)
    } else {
        let a = m / (2.0 * energy);
        // r = a(cosh H − 1) = 2a sinh²(H/2)
        let hyp = 2.0 * (r / (2.0 * a)).sqrt().asinh();
        (a.powi(3) / m).sqrt() * sinh_minus_x(hyp)
    }
}

/// Time until a radial orbit reaches the center, if it ever does.
pub fn time_to_collision(state: &PlanarState, m: f64) -> Option<f64> {
    if m <= 0.0 {
        return None;
    }
    let r = state.radius();
    let energy = planar_energy(state, m);
    let t_here = radial_time_from_center(r, energy, m);
    if state.radial_product() < 0.0 {
        Some(t_here)
    } else if energy < 0.0 {
        let a = m / (-2.0 * energy);
        Some(TAU * (a.powi(3) / m).sqrt() - t_here)
    } else {
        None
    }
}

/// Passage of a radial orbit through the center with elastic bouncing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollisionPassage {
    /// Time from the input state to the collision.
    pub t_collision: f64,
    /// Time from the input state to `state_out`.
    pub elapsed: f64,
    /// The state after the bounce, back at the input position.
    pub state_out: PlanarState,
}

/// Continues a radial orbit through its collision with the center.
///
/// The continued orbit is the time reversal of the incoming one: after the
/// bounce the direction of motion `d` becomes `−d` and the speed profile is
/// mirrored. The returned state is the one reached when the orbit is back
/// at the input position, `2·t_collision` later, with reversed velocity.
pub fn collision_bounce(state: &PlanarState, params: &SystemParams) -> Result<CollisionPassage> {
    state.validate()?;
    let l = angular_momentum(state);
    if !is_radial(state) {
        return Err(Error::NotACollisionOrbit(l.abs()));
    }
    let tc = time_to_collision(state, params.m).ok_or(Error::NotACollisionOrbit(l.abs()))?;
    Ok(CollisionPassage { t_collision: tc, elapsed: 2.0 * tc, state_out: reversed(state) })
}

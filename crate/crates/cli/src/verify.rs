//! `verify`: the invariant suite on seeded pseudo-random states.

use std::f64::consts::PI;
use std::fmt;

use kepler_billiards::billiard::{next_hit_analytic_line, next_hit_numeric, reflect, HitOutcome};
use kepler_billiards::integrals::{gj_integral, planar_energy, spherical_energy_chart};
use kepler_billiards::model::{line_level, validate_config, PlanarState, Side, SystemParams, Wall};
use kepler_billiards::ode::IntegratorConfig;
use kepler_billiards::planar::orbit_elements;
use kepler_billiards::spherical::{
    geodesic_distance, planar_to_sphere, propagate_spherical, sphere_to_planar, spherical_time_along,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub name: &'static str,
    pub cases: usize,
    pub failures: usize,
    pub max_error: f64,
    pub tolerance: f64,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub seed: u64,
    pub cases: usize,
    pub checks: Vec<CheckReport>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(CheckReport::passed)
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "verify seed={} cases={}", self.seed, self.cases)?;
        for c in &self.checks {
            writeln!(
                f,
                "{:<28} {}  failures {}/{}  max error {:.3e}  tolerance {:.0e}",
                c.name,
                if c.passed() { "PASS" } else { "FAIL" },
                c.failures,
                c.cases,
                c.max_error,
                c.tolerance
            )?;
        }
        write!(f, "{}", if self.passed() { "all checks passed" } else { "verification FAILED" })
    }
}

/// Per-case generator: the stream is fixed by the seed, the check and the
/// case index, so results do not depend on scheduling.
fn case_rng(seed: u64, check: u64, case: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((check << 32) | case as u64);
    rng
}

/// Error measure for one case; `None` when the case is not applicable.
type Case = fn(&mut ChaCha8Rng, bool) -> Option<f64>;

fn reflection_d(rng: &mut ChaCha8Rng, fault: bool) -> Option<f64> {
    let a = [0.0, 0.5, 1.0, 3.0][rng.gen_range(0..4)];
    let m = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    let p = SystemParams::new(m, a);
    let s = PlanarState::new(rng.gen_range(-5.0..5.0), p.h(), rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
    if s.radius() < 1e-9 {
        return None;
    }
    let after = reflect(&s, &Wall::line_for(&p, Side::Positive), &p).ok()?;
    let d0 = gj_integral(&s, m, p.h());
    let mut d1 = gj_integral(&after, m, p.h());
    if fault {
        d1 += 1e-6 * d0.abs().max(1.0);
    }
    Some((d1 - d0).abs() / d0.abs().max(1.0))
}

fn energy_identity(rng: &mut ChaCha8Rng, _fault: bool) -> Option<f64> {
    let a = rng.gen_range(0.0..3.0);
    let m = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    let s = PlanarState::new(
        rng.gen_range(-3.0..3.0),
        rng.gen_range(-3.0..3.0),
        rng.gen_range(-3.0..3.0),
        rng.gen_range(-3.0..3.0),
    );
    if s.radius() < 1e-3 {
        return None;
    }
    let e_sph = spherical_energy_chart(&s, m, a);
    let identity = (1.0 + a * a) * (planar_energy(&s, m) + 0.5 * gj_integral(&s, m, line_level(a)));
    Some((e_sph - identity).abs() / e_sph.abs().max(1.0))
}

fn analytic_vs_numeric(rng: &mut ChaCha8Rng, _fault: bool) -> Option<f64> {
    let a = [0.5, 1.0, 3.0][rng.gen_range(0..3)];
    let phi = rng.gen_range(0.05..PI - 0.05);
    let v = rng.gen_range(0.2..1.2);
    let p = SystemParams::new(1.0, a);
    let s = PlanarState::new(rng.gen_range(-1.5..1.5), p.h(), v * phi.cos(), v * phi.sin());
    let el = orbit_elements(&s, &p).ok()?;
    if el.energy >= 0.0 || el.semi_latus_rectum / (1.0 + el.eccentricity) <= 1e-2 {
        return None;
    }
    let model = validate_config(p, Wall::line_for(&p, Side::Positive)).ok()?;
    let cfg = IntegratorConfig::with_tolerance(1e-12);
    match (next_hit_analytic_line(0.0, &s, &model), next_hit_numeric(0.0, &s, &model, cfg, 1e4)) {
        (Ok(HitOutcome::Hit(x)), Ok(HitOutcome::Hit(y))) => Some(
            x.state_in.to_array().into_iter().zip(y.state_in.to_array()).map(|(u, w)| (u - w).abs()).fold(0.0, f64::max),
        ),
        _ => Some(f64::INFINITY),
    }
}

fn projection(rng: &mut ChaCha8Rng, _fault: bool) -> Option<f64> {
    let a = rng.gen_range(0.0..2.0);
    let m = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    let p = SystemParams::new(m, a);
    let (r, phi) = (rng.gen_range(0.4..1.5), rng.gen_range(0.0..2.0 * PI));
    let p0 = PlanarState::new(r * phi.cos(), r * phi.sin(), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    let el = orbit_elements(&p0, &p).ok()?;
    if m > 0.0 && el.semi_latus_rectum / (1.0 + el.eccentricity) < 0.1 {
        return None;
    }
    let cfg = IntegratorConfig::with_tolerance(1e-13);
    let (end, tau) = spherical_time_along(&p0, 0.5, &p, cfg).ok()?;
    let mapped = planar_to_sphere(&end, p.a);
    let s = propagate_spherical(&planar_to_sphere(&p0, p.a), tau, &p, cfg, true).ok()?;
    let back = sphere_to_planar(&mapped, p.a).ok()?;
    let round_trip = back.to_array().into_iter().zip(end.to_array()).map(|(u, w)| (u - w).abs()).fold(0.0, f64::max);
    Some(geodesic_distance(&mapped.q, &s.q).max(round_trip))
}

fn run_check(name: &'static str, id: u64, case: Case, tolerance: f64, seed: u64, cases: usize, fault: bool) -> CheckReport {
    let errors: Vec<Option<f64>> = (0..cases).into_par_iter().map(|k| case(&mut case_rng(seed, id, k), fault)).collect();
    let applicable: Vec<f64> = errors.into_iter().flatten().collect();
    CheckReport {
        name,
        cases: applicable.len(),
        failures: applicable.iter().filter(|e| e.is_nan() || **e > tolerance).count(),
        max_error: applicable.iter().copied().fold(0.0, f64::max),
        tolerance,
    }
}

/// Runs the suite; `fault` corrupts the reflection check to exercise the
/// failure path.
pub fn cmd_verify(seed: u64, cases: usize, fault: bool) -> Report {
    let checks = vec![
        run_check("reflection D-invariance", 1, reflection_d, 1e-12, seed, cases, fault),
        run_check("spherical energy identity", 2, energy_identity, 1e-12, seed, cases, fault),
        run_check("analytic vs numeric hit", 3, analytic_vs_numeric, 1e-8, seed, cases.div_ceil(10), fault),
        run_check("projection correspondence", 4, projection, 1e-8, seed, cases.div_ceil(10), fault),
    ];
    Report { seed, cases, checks }
}

//! Conserved quantities of the planar Kepler–Coulomb problem in the
//! normalized chart, and the spherical energy expressed in that chart.
//!
//! The spherical energy is evaluated from its own closed form, never from
//! the relation `E_sph = (1+a²)(E_pl + D/2)`, so that relation can be
//! checked rather than assumed.

use serde::{Deserialize, Serialize};

use crate::model::{PlanarState, SystemParams};

/// `E_pl = ½|v|² − m/r`.
pub fn planar_energy(s: &PlanarState, m: f64) -> f64 {
    0.5 * (s.xi_dot * s.xi_dot + s.eta_dot * s.eta_dot) - m / s.radius()
}

/// Total mechanical energy including the centrifugal potential `β/(2r²)`.
///
/// Equals [`planar_energy`] when `β = 0`.
pub fn mechanical_energy(s: &PlanarState, params: &SystemParams) -> f64 {
    let e = planar_energy(s, params.m);
    if params.beta == 0.0 {
        e
    } else {
        let r2 = s.xi * s.xi + s.eta * s.eta;
        e + 0.5 * params.beta / r2
    }
}

/// `L = ξη̇ − ηξ̇`.
pub fn angular_momentum(s: &PlanarState) -> f64 {
    s.xi * s.eta_dot - s.eta * s.xi_dot
}

/// ξ-component of the Laplace–Runge–Lenz vector, `L η̇ − m ξ/r`.
pub fn lrl_xi(s: &PlanarState, m: f64) -> f64 {
    angular_momentum(s) * s.eta_dot - m * s.xi / s.radius()
}

/// η-component of the Laplace–Runge–Lenz vector, `−L ξ̇ − m η/r`.
pub fn lrl_eta(s: &PlanarState, m: f64) -> f64 {
    -angular_momentum(s) * s.xi_dot - m * s.eta / s.radius()
}

/// The integral `D = L² − 2 h A_η` attached to the line `η = h`.
pub fn gj_integral(s: &PlanarState, m: f64, h: f64) -> f64 {
    let l = angular_momentum(s);
    l * l - 2.0 * h * lrl_eta(s, m)
}

/// Spherical energy of the corresponding spherical problem, written in the
/// normalized planar chart.
pub fn spherical_energy_chart(s: &PlanarState, m: f64, a: f64) -> f64 {
    let k = 1.0 + a * a;
    let r = s.radius();
    let l = angular_momentum(s);
    let kinetic = 0.5 * (s.xi_dot * s.xi_dot + s.eta_dot * s.eta_dot);
    let cross = l * s.xi_dot + m * s.eta / r;
    k * (kinetic - m / r) + 0.5 * k * (l * l - 2.0 * a / k.sqrt() * cross)
}

/// All first integrals of a planar state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegralSet {
    /// Mechanical energy; includes `β/(2r²)` for the perturbed model.
    pub e_pl: f64,
    pub l: f64,
    pub a_xi: f64,
    pub a_eta: f64,
    pub d: f64,
    pub e_sph: f64,
}

impl IntegralSet {
    /// Evaluates every integral; `D` is taken with respect to `η = h(a)`.
    pub fn evaluate(s: &PlanarState, params: &SystemParams) -> Self {
        let m = params.m;
        Self {
            e_pl: mechanical_energy(s, params),
            l: angular_momentum(s),
            a_xi: lrl_xi(s, m),
            a_eta: lrl_eta(s, m),
            d: gj_integral(s, m, params.h()),
            e_sph: spherical_energy_chart(s, m, params.a),
        }
    }

    pub fn as_array(&self) -> [f64; 6] {
        [self.e_pl, self.l, self.a_xi, self.a_eta, self.d, self.e_sph]
    }

    pub const NAMES: [&'static str; 6] = ["E_pl", "L", "A_xi", "A_eta", "D", "E_sph"];
}

/// Largest relative deviation `|x − x₀| / max(1, |x₀|)` over a sequence.
pub fn max_relative_drift<I: IntoIterator<Item = f64>>(reference: f64, values: I) -> f64 {
    let scale = reference.abs().max(1.0);
    values
        .into_iter()
        .map(|x| (x - reference).abs() / scale)
        .fold(0.0, f64::max)
}

/// Analytic gradients with respect to `(ξ, η, ξ̇, η̇)`.
pub mod gradient {
    use super::*;

    pub type Grad = [f64; 4];

    pub fn planar_energy(s: &PlanarState, m: f64) -> Grad {
        let r3 = s.radius().powi(3);
        [m * s.xi / r3, m * s.eta / r3, s.xi_dot, s.eta_dot]
    }

    pub fn angular_momentum(s: &PlanarState) -> Grad {
        [s.eta_dot, -s.xi_dot, -s.eta, s.xi]
    }

    pub fn lrl_xi(s: &PlanarState, m: f64) -> Grad {
        let r3 = s.radius().powi(3);
        let l = super::angular_momentum(s);
        [
            s.eta_dot * s.eta_dot - m * s.eta * s.eta / r3,
            -s.eta_dot * s.xi_dot + m * s.xi * s.eta / r3,
            -s.eta * s.eta_dot,
            s.xi * s.eta_dot + l,
        ]
    }

    pub fn lrl_eta(s: &PlanarState, m: f64) -> Grad {
        let r3 = s.radius().powi(3);
        let l = super::angular_momentum(s);
        [
            -s.xi_dot * s.eta_dot + m * s.xi * s.eta / r3,
            s.xi_dot * s.xi_dot - m * s.xi * s.xi / r3,
            s.eta * s.xi_dot - l,
            -s.xi * s.xi_dot,
        ]
    }

    pub fn gj_integral(s: &PlanarState, m: f64, h: f64) -> Grad {
        let l = super::angular_momentum(s);
        let gl = angular_momentum(s);
        let ga = lrl_eta(s, m);
        std::array::from_fn(|i| 2.0 * l * gl[i] - 2.0 * h * ga[i])
    }

    pub fn spherical_energy_chart(s: &PlanarState, m: f64, a: f64) -> Grad {
        let k = 1.0 + a * a;
        let c = 2.0 * a / k.sqrt();
        let r3 = s.radius().powi(3);
        let l = super::angular_momentum(s);
        let ge = planar_energy(s, m);
        let gl = angular_momentum(s);
        // d(η/r)
        let g_eta_r = [-s.xi * s.eta / r3, s.xi * s.xi / r3, 0.0, 0.0];
        let mut g = [0.0; 4];
        for i in 0..4 {
            let d_cross = s.xi_dot * gl[i] + if i == 2 { l } else { 0.0 } + m * g_eta_r[i];
            g[i] = k * ge[i] + 0.5 * k * (2.0 * l * gl[i] - c * d_cross);
        }
        g
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const S3: f64 = 0.866_025_403_784_438_6;

    fn tilted() -> PlanarState {
        PlanarState::new(S3, -0.5, 0.5, S3)
    }

    #[test]
    fn planar_energy_examples() {
        assert!((planar_energy(&PlanarState::new(1.0, 0.0, 0.0, 1.0), 1.0) + 0.5).abs() < 1e-15);
        assert!((planar_energy(&PlanarState::new(3.0, 4.0, 1.0, 0.0), 1.0) - 0.3).abs() < 1e-15);
        let esc = PlanarState::new(1.0, 0.0, 0.0, 2f64.sqrt());
        assert!(planar_energy(&esc, 1.0).abs() < 1e-15);
    }

    #[test]
    fn angular_momentum_examples() {
        assert_eq!(angular_momentum(&PlanarState::new(1.0, 0.0, 0.0, 1.0)), 1.0);
        assert_eq!(angular_momentum(&PlanarState::new(1.0, 0.0, 1.0, 0.0)), 0.0);
        assert!((angular_momentum(&tilted()) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn lrl_examples() {
        let c = PlanarState::new(1.0, 0.0, 0.0, 1.0);
        assert_eq!(lrl_eta(&c, 1.0), 0.0);
        assert_eq!(lrl_xi(&c, 1.0), 0.0);
        assert!(lrl_eta(&tilted(), 1.0).abs() < 1e-15);
        let esc = PlanarState::new(1.0, 0.0, 0.0, 2f64.sqrt());
        assert!((lrl_xi(&esc, 1.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn gj_integral_examples() {
        let s = PlanarState::new(0.3, 1.2, -0.7, 0.4);
        let l = angular_momentum(&s);
        assert_eq!(gj_integral(&s, 1.0, 0.0), l * l);
        assert!((gj_integral(&tilted(), 1.0, -0.5) - 1.0).abs() < 1e-15);
        let reflected = PlanarState::new(S3, -0.5, 0.5, -S3);
        assert!((angular_momentum(&reflected) + 0.5).abs() < 1e-15);
        assert!((lrl_eta(&reflected, 1.0) - 0.75).abs() < 1e-15);
        assert!((gj_integral(&reflected, 1.0, -0.5) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn spherical_energy_examples() {
        let c = PlanarState::new(1.0, 0.0, 0.0, 1.0);
        assert!(spherical_energy_chart(&c, 1.0, 0.0).abs() < 1e-15);
        assert!(spherical_energy_chart(&c, 1.0, 1.0).abs() < 1e-15);
        assert!((spherical_energy_chart(&c, 0.0, 0.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn mechanical_energy_adds_centrifugal_term() {
        let s = PlanarState::new(2.0, 0.0, 0.0, 1.0);
        let p = SystemParams::new(1.0, 0.0).with_beta(0.4);
        assert!((mechanical_energy(&s, &p) - (0.5 - 0.5 + 0.05)).abs() < 1e-15);
    }

    fn state() -> impl Strategy<Value = PlanarState> {
        (0.2f64..3.0, 0.0f64..std::f64::consts::TAU, -2.0f64..2.0, -2.0f64..2.0)
            .prop_map(|(r, phi, u, v)| {
                let (s, c) = phi.sin_cos();
                PlanarState::new(r * c, r * s, u, v)
            })
    }

    fn fd_grad(f: impl Fn(&PlanarState) -> f64, s: &PlanarState) -> [f64; 4] {
        let step = 1e-6;
        let y = s.to_array();
        std::array::from_fn(|i| {
            let mut p = y;
            let mut q = y;
            p[i] += step;
            q[i] -= step;
            (f(&PlanarState::from_array(p)) - f(&PlanarState::from_array(q))) / (2.0 * step)
        })
    }

    fn close(a: [f64; 4], b: [f64; 4]) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-6 * y.abs().max(1.0))
    }

    proptest! {
        #[test]
        fn lrl_norm_identity(s in state(), m in prop_oneof![Just(-1.0), Just(1.0), -3.0f64..3.0]) {
            let e = planar_energy(&s, m);
            let l = angular_momentum(&s);
            let a2 = lrl_xi(&s, m).powi(2) + lrl_eta(&s, m).powi(2);
            let rhs = m * m + 2.0 * e * l * l;
            prop_assert!((a2 - rhs).abs() <= 1e-10 * a2.abs().max(rhs.abs()).max(1.0));
        }

        #[test]
        fn line_reflection_preserves_energy_and_d(s in state(), m in -2.0f64..2.0, a in 0.0f64..4.0) {
            let h = crate::model::line_level(a);
            let on_wall = PlanarState { eta: h, ..s };
            prop_assume!(on_wall.radius() > 1e-3);
            let flipped = PlanarState { eta_dot: -on_wall.eta_dot, ..on_wall };
            let d0 = gj_integral(&on_wall, m, h);
            let d1 = gj_integral(&flipped, m, h);
            prop_assert!((d1 - d0).abs() <= 1e-12 * d0.abs().max(1.0));
            prop_assert_eq!(planar_energy(&on_wall, m), planar_energy(&flipped, m));
        }

        #[test]
        fn circle_reflection_preserves_l_squared(s in state(), m in -2.0f64..2.0) {
            let r = s.radius();
            let (ux, uy) = (s.xi / r, s.eta / r);
            let vr = s.xi_dot * ux + s.eta_dot * uy;
            let out = PlanarState::new(s.xi, s.eta, s.xi_dot - 2.0 * vr * ux, s.eta_dot - 2.0 * vr * uy);
            let (l0, l1) = (angular_momentum(&s), angular_momentum(&out));
            prop_assert!((l0 * l0 - l1 * l1).abs() <= 1e-12 * (l0 * l0).max(1.0));
            let (e0, e1) = (planar_energy(&s, m), planar_energy(&out, m));
            prop_assert!((e0 - e1).abs() <= 1e-13 * e0.abs().max(1.0));
        }

        #[test]
        fn energies_are_functionally_independent(s in state(), a in 0.0f64..3.0) {
            let m = 1.0;
            let g1 = fd_grad(|x| planar_energy(x, m), &s);
            let g2 = fd_grad(|x| spherical_energy_chart(x, m, a), &s);
            let mut best: f64 = 0.0;
            for i in 0..4 {
                for j in (i + 1)..4 {
                    best = best.max((g1[i] * g2[j] - g1[j] * g2[i]).abs());
                }
            }
            prop_assert!(best > 1e-6, "largest 2x2 minor {best}");
        }

        #[test]
        fn analytic_gradients_match_finite_differences(s in state(), m in -2.0f64..2.0, a in 0.0f64..3.0) {
            let h = crate::model::line_level(a);
            prop_assert!(close(gradient::planar_energy(&s, m), fd_grad(|x| planar_energy(x, m), &s)));
            prop_assert!(close(gradient::angular_momentum(&s), fd_grad(angular_momentum, &s)));
            prop_assert!(close(gradient::lrl_xi(&s, m), fd_grad(|x| lrl_xi(x, m), &s)));
            prop_assert!(close(gradient::lrl_eta(&s, m), fd_grad(|x| lrl_eta(x, m), &s)));
            prop_assert!(close(gradient::gj_integral(&s, m, h), fd_grad(|x| gj_integral(x, m, h), &s)));
            prop_assert!(close(
                gradient::spherical_energy_chart(&s, m, a),
                fd_grad(|x| spherical_energy_chart(x, m, a), &s)
            ));
        }
    }
}

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

//! Kepler–Coulomb billiards in the plane and on the sphere.
//!
//! The crate simulates billiards whose free flight is a planar or spherical
//! Kepler–Coulomb motion, maps trajectories between the plane and the sphere
//! by central projection, and checks the first integrals that make these
//! billiards integrable: the planar energy, the spherical energy and the
//! integral `D = L² − 2hA_η` of the line-wall model.

pub mod error;
pub mod integrals;
pub mod model;
pub mod ode;
pub mod planar;
pub mod projective;
pub mod spherical;
pub mod billiard;
pub mod conformal;
pub mod config;

pub use error::{Error, Result};

#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/planar.md")]
    mod planar {}
    #[doc = include_str!("../../../book/src/line-wall.md")]
    mod line_wall {}
    #[doc = include_str!("../../../book/src/sphere.md")]
    mod sphere {}
    #[doc = include_str!("../../../book/src/conformal.md")]
    mod conformal {}
    #[doc = include_str!("../../../book/src/numerics.md")]
    mod numerics {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}

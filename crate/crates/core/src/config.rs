//! JSON run configuration.
//!
//! ```json
//! {
//!   "system": {"model": "boltzmann", "m": -1, "a": 1, "beta": 0},
//!   "wall": {"kind": "line", "side": 1},
//!   "initial": {"state": [0.2, 0.1, 0.3, -0.4]},
//!   "integrator": {"rtol": 1e-12, "atol": 1e-12, "max_step": 0.5},
//!   "run": {"n_bounces": 100, "t_max": 1e4}
//! }
//! ```

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::billiard::{Mode, RunOptions};
use crate::error::{Error, Result};
use crate::model::{validate_config, PlanarState, Side, SphericalState, SystemParams, ValidatedModel, Wall};
use crate::ode::IntegratorConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// Planar, no centrifugal term.
    Kepler,
    /// Planar, optional centrifugal term `beta`.
    Boltzmann,
    Spherical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub model: ModelKind,
    pub m: f64,
    pub a: f64,
    #[serde(default)]
    pub beta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WallKind {
    Line,
    Circle,
    GreatCircle,
    CenteredCircle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WallSection {
    pub kind: WallKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub colatitude: Option<f64>,
    /// Line level; defaults to the normalized `h(a)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<f64>,
    /// Great-circle normal; defaults to `(0, 1, 0)`, the image of the line wall.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normal: Option<[f64; 3]>,
    pub side: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    pub state: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub n_bounces: usize,
    pub t_max: f64,
    #[serde(default)]
    pub mode: Mode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub system: SystemSection,
    pub wall: WallSection,
    pub initial: InitialSection,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    pub run: RunSection,
}

/// Initial state in the phase space matching the wall.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialState {
    Planar(PlanarState),
    Spherical(SphericalState),
}

/// A checked configuration, ready to run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSetup {
    pub model: ValidatedModel,
    pub initial: InitialState,
    pub n_bounces: usize,
    pub options: RunOptions,
}

impl Config {
    pub fn from_json(text: &str) -> Result<Config> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Validates every section and assembles the run.
    pub fn setup(&self) -> Result<RunSetup> {
        let sys = &self.system;
        if sys.model == ModelKind::Kepler && sys.beta != 0.0 {
            return Err(Error::Config("the kepler model has no centrifugal term; use boltzmann".into()));
        }
        let params = SystemParams::new(sys.m, sys.a).with_beta(sys.beta);
        let side = Side::from_sign(self.wall.side)?;
        let spherical = sys.model == ModelKind::Spherical;
        let need = |v: Option<f64>, name: &str| {
            v.ok_or_else(|| Error::Config(format!("a {:?} wall needs \"{name}\"", self.wall.kind)))
        };
        let wall = match self.wall.kind {
            WallKind::Line => Wall::line(self.wall.level.unwrap_or_else(|| params.h()), side),
            WallKind::Circle => Wall::circle(need(self.wall.radius, "radius")?, side),
            WallKind::GreatCircle => {
                let [x, y, z] = self.wall.normal.unwrap_or([0.0, 1.0, 0.0]);
                Wall::great_circle(Vector3::new(x, y, z), side)
            }
            WallKind::CenteredCircle => Wall::centered_circle(need(self.wall.colatitude, "colatitude")?, side),
        };
        if wall.is_spherical() != spherical {
            return Err(Error::Config(format!(
                "a {:?} wall does not fit the {:?} model",
                self.wall.kind, sys.model
            )));
        }
        let model = validate_config(params, wall)?;
        let initial = match (spherical, self.initial.state.as_slice()) {
            (false, &[xi, eta, xi_dot, eta_dot]) => {
                let s = PlanarState::new(xi, eta, xi_dot, eta_dot);
                s.validate()?;
                InitialState::Planar(s)
            }
            (true, &[qx, qy, qz, vx, vy, vz]) => {
                InitialState::Spherical(SphericalState::projected(Vector3::new(qx, qy, qz), Vector3::new(vx, vy, vz))?)
            }
            (_, s) => {
                let want = if spherical { 6 } else { 4 };
                return Err(Error::Config(format!("initial state needs {want} numbers, got {}", s.len())));
            }
        };
        let i = self.integrator;
        if !(i.rtol > 0.0 && i.atol > 0.0 && i.max_step > 0.0) {
            return Err(Error::Config("integrator tolerances and max_step must be positive".into()));
        }
        if !(self.run.t_max > 0.0) {
            return Err(Error::Config("run.t_max must be positive".into()));
        }
        Ok(RunSetup {
            model,
            initial,
            n_bounces: self.run.n_bounces,
            options: RunOptions { mode: self.run.mode, integrator: i, t_max: self.run.t_max },
        })
    }
}

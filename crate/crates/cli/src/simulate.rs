//! `simulate`: run a configured billiard and write its trajectory, bounces
//! and summary.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use kepler_billiards::billiard::{
    billiard_map_observed, spherical_billiard_map_observed, BilliardRun, BilliardState, EscapeReason, Mode, RunEnd,
};
use kepler_billiards::config::{Config, InitialState, RunSetup};
use kepler_billiards::integrals::{max_relative_drift, IntegralSet};
use kepler_billiards::model::{PlanarState, SphericalState, ValidatedModel};
use kepler_billiards::ode::{Dop853, OdeSystem};
use kepler_billiards::planar::{propagate_analytic, PlanarField};
use kepler_billiards::spherical::SphericalField;
use kepler_billiards::billiard::SphericalIntegrals;
use log::info;
use rayon::prelude::*;
use serde::Serialize;

use crate::table::{Table, PLANAR_HEADER, SPHERICAL_HEADER};

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const BOUNCES_FILE: &str = "bounces.csv";
pub const SUMMARY_FILE: &str = "summary.json";

const PLANAR_BOUNCE_HEADER: [&str; 14] = [
    "bounce", "t", "xi", "eta", "xi_dot_in", "eta_dot_in", "xi_dot_out", "eta_dot_out", "E_pl", "L", "A_eta", "D",
    "E_sph", "grazing",
];
const SPHERICAL_BOUNCE_HEADER: [&str; 15] = [
    "bounce", "t", "qx", "qy", "qz", "vx_in", "vy_in", "vz_in", "vx_out", "vy_out", "vz_out", "E_sph", "E_pl",
    "L_axis", "grazing",
];

/// Samples of a free flight without a wall when no bounce is requested.
const FREE_FLIGHT_SAMPLES: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Completed,
    Escape,
    Undetermined,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub outcome: Outcome,
    pub bounces: usize,
    pub collisions: usize,
    pub tangencies: usize,
    pub t_end: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub escape_reason: Option<EscapeReason>,
    /// Largest `|x − x₀| / max(1, |x₀|)` over all trajectory samples.
    pub max_drift: BTreeMap<&'static str, f64>,
    pub config: Config,
}

pub struct RunOutput {
    pub trajectory: Table,
    pub bounces: Table,
    pub summary: Summary,
}

trait Row: BilliardState {
    fn row(&self, t: f64, params: &kepler_billiards::model::SystemParams) -> Vec<f64>;
    fn bounce_row(k: usize, rec: &kepler_billiards::model::BounceRecord<Self, Self::Integrals>) -> Vec<f64>;
    /// Named conserved quantities of a trajectory sample.
    fn drifts(row: &[f64]) -> Vec<(&'static str, f64)>;
}

impl Row for PlanarState {
    fn row(&self, t: f64, params: &kepler_billiards::model::SystemParams) -> Vec<f64> {
        let i = IntegralSet::evaluate(self, params);
        vec![t, self.xi, self.eta, self.xi_dot, self.eta_dot, i.e_pl, i.l, i.a_eta, i.d, i.e_sph]
    }

    fn bounce_row(k: usize, rec: &kepler_billiards::model::BounceRecord<Self, IntegralSet>) -> Vec<f64> {
        let (a, b, i) = (rec.state_in, rec.state_out, rec.integrals_out);
        vec![
            (k + 1) as f64,
            rec.t_hit,
            a.xi,
            a.eta,
            a.xi_dot,
            a.eta_dot,
            b.xi_dot,
            b.eta_dot,
            i.e_pl,
            i.l,
            i.a_eta,
            i.d,
            i.e_sph,
            f64::from(u8::from(rec.grazing)),
        ]
    }

    fn drifts(row: &[f64]) -> Vec<(&'static str, f64)> {
        vec![("E_pl", row[5]), ("L", row[6]), ("A_eta", row[7]), ("D", row[8]), ("E_sph", row[9])]
    }
}

impl Row for SphericalState {
    fn row(&self, t: f64, params: &kepler_billiards::model::SystemParams) -> Vec<f64> {
        let i = SphericalIntegrals::evaluate(self, params);
        vec![t, self.q.x, self.q.y, self.q.z, self.v.x, self.v.y, self.v.z, i.e_sph]
    }

    fn bounce_row(k: usize, rec: &kepler_billiards::model::BounceRecord<Self, SphericalIntegrals>) -> Vec<f64> {
        let (a, b, i) = (rec.state_in, rec.state_out, rec.integrals_out);
        vec![
            (k + 1) as f64,
            rec.t_hit,
            a.q.x,
            a.q.y,
            a.q.z,
            a.v.x,
            a.v.y,
            a.v.z,
            b.v.x,
            b.v.y,
            b.v.z,
            i.e_sph,
            i.e_pl,
            i.l_axis,
            f64::from(u8::from(rec.grazing)),
        ]
    }

    fn drifts(row: &[f64]) -> Vec<(&'static str, f64)> {
        vec![("E_sph", row[7])]
    }
}

fn max_drift<S: Row>(trajectory: &Table) -> BTreeMap<&'static str, f64> {
    let mut out = BTreeMap::new();
    let Some(first) = trajectory.rows.first() else { return out };
    for (k, (name, x0)) in S::drifts(first).into_iter().enumerate() {
        let drift = max_relative_drift(x0, trajectory.rows.iter().map(|r| S::drifts(r)[k].1));
        out.insert(name, drift);
    }
    out
}

fn summarize<S: Row>(run: &BilliardRun<S>, trajectory: &Table, config: &Config) -> Summary {
    let (outcome, escape_reason) = match run.end {
        RunEnd::Completed => (Outcome::Completed, None),
        RunEnd::Escaped { reason, .. } => (Outcome::Escape, Some(reason)),
        RunEnd::Undetermined { .. } => (Outcome::Undetermined, None),
    };
    Summary {
        outcome,
        bounces: run.records.len(),
        collisions: run.collisions.len(),
        tangencies: run.records.iter().filter(|r| r.grazing).count(),
        t_end: trajectory.rows.last().map_or(0.0, |r| r[0]),
        escape_reason,
        max_drift: max_drift::<S>(trajectory),
        config: config.clone(),
    }
}

fn bounce_table<S: Row>(run: &BilliardRun<S>, header: &[&str]) -> Table {
    let mut t = Table::new(header);
    for (k, rec) in run.records.iter().enumerate() {
        t.push(S::bounce_row(k, rec));
    }
    t
}

/// Integrates without a wall until `t_max`, sampling every accepted step.
fn free_flight<const N: usize, F: OdeSystem<N>>(
    field: &F,
    y0: [f64; N],
    t_max: f64,
    setup: &RunSetup,
    project: fn([f64; N]) -> [f64; N],
    sample: &mut dyn FnMut(f64, [f64; N]),
) -> Result<()> {
    let mut it = Dop853::new(field, 0.0, y0, setup.options.integrator);
    sample(0.0, y0);
    while it.t() < t_max {
        let step = it.step(field, t_max - it.t())?;
        let y = project(step.y1);
        it.reset_state(field, step.t1(), y);
        sample(step.t1(), y);
    }
    Ok(())
}

fn simulate_planar(setup: &RunSetup, s0: &PlanarState, config: &Config) -> Result<RunOutput> {
    let model: &ValidatedModel = &setup.model;
    let params = *model.params();
    let mut trajectory = Table::new(&PLANAR_HEADER);
    let run = if setup.n_bounces == 0 {
        let t_max = setup.options.t_max;
        if setup.options.mode == Mode::Analytic {
            for k in 0..=FREE_FLIGHT_SAMPLES {
                let t = t_max * k as f64 / FREE_FLIGHT_SAMPLES as f64;
                trajectory.push(propagate_analytic(s0, t, &params)?.row(t, &params));
            }
        } else {
            let field = PlanarField { params };
            free_flight(&field, s0.to_array(), t_max, setup, |y| y, &mut |t, y| {
                trajectory.push(PlanarState::from_array(y).row(t, &params))
            })?;
        }
        BilliardRun { records: Vec::new(), collisions: Vec::new(), end: RunEnd::Completed }
    } else {
        billiard_map_observed(s0, setup.n_bounces, model, &setup.options, &mut |t, s| {
            trajectory.push(s.row(t, &params))
        })?
    };
    let bounces = bounce_table(&run, &PLANAR_BOUNCE_HEADER);
    let summary = summarize(&run, &trajectory, config);
    Ok(RunOutput { trajectory, bounces, summary })
}

fn simulate_spherical(setup: &RunSetup, s0: &SphericalState, config: &Config) -> Result<RunOutput> {
    let model = &setup.model;
    let params = *model.params();
    let mut trajectory = Table::new(&SPHERICAL_HEADER);
    let run = if setup.n_bounces == 0 {
        let field = SphericalField::new(&params);
        let project: fn([f64; 6]) -> [f64; 6] = |y| SphericalState::from_array(y).renormalized().to_array();
        free_flight(&field, s0.to_array(), setup.options.t_max, setup, project, &mut |t, y| {
            trajectory.push(SphericalState::from_array(y).row(t, &params))
        })?;
        BilliardRun { records: Vec::new(), collisions: Vec::new(), end: RunEnd::Completed }
    } else {
        spherical_billiard_map_observed(s0, setup.n_bounces, model, &setup.options, &mut |t, s| {
            trajectory.push(s.row(t, &params))
        })?
    };
    let bounces = bounce_table(&run, &SPHERICAL_BOUNCE_HEADER);
    let summary = summarize(&run, &trajectory, config);
    Ok(RunOutput { trajectory, bounces, summary })
}

/// Parses, validates and runs one configuration.
pub fn run_config(config: &Config) -> Result<RunOutput> {
    let setup = config.setup()?;
    match setup.initial {
        InitialState::Planar(s) => simulate_planar(&setup, &s, config),
        InitialState::Spherical(s) => simulate_spherical(&setup, &s, config),
    }
}

pub fn read_config(path: &Path) -> Result<Config> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(Config::from_json(&text)?)
}

pub fn write_output(out: &RunOutput, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    out.trajectory.write(&dir.join(TRAJECTORY_FILE))?;
    out.bounces.write(&dir.join(BOUNCES_FILE))?;
    let json = serde_json::to_string_pretty(&out.summary)? + "\n";
    std::fs::write(dir.join(SUMMARY_FILE), json)?;
    Ok(())
}

/// Runs every configuration, in parallel when there are several, and
/// writes each into `out` (one subdirectory per config file stem when
/// there is more than one). Returns the summaries in argument order.
pub fn cmd_simulate(configs: &[PathBuf], out: &Path) -> Result<Vec<Summary>> {
    let parsed = configs.iter().map(|p| read_config(p)).collect::<Result<Vec<_>>>()?;
    let dirs: Vec<PathBuf> = if configs.len() == 1 {
        vec![out.to_path_buf()]
    } else {
        configs.iter().map(|p| out.join(p.file_stem().unwrap_or_default())).collect()
    };
    let results: Vec<Result<RunOutput>> = parsed.par_iter().map(run_config).collect();
    let mut summaries = Vec::with_capacity(results.len());
    for (result, dir) in results.into_iter().zip(&dirs) {
        let output = result?;
        write_output(&output, dir)?;
        info!(
            "{}: {:?} after {} bounces",
            dir.display(),
            output.summary.outcome,
            output.summary.bounces
        );
        summaries.push(output.summary);
    }
    Ok(summaries)
}

//! `project`: map trajectory tables between the plane and the sphere.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::ValueEnum;
use kepler_billiards::model::{PlanarState, SphericalState};
use kepler_billiards::projective::denormalize_chart;
use kepler_billiards::spherical::{chart_time_density, planar_to_sphere, sphere_to_chart, sphere_to_planar};
use nalgebra::Vector3;

use crate::simulate::SUMMARY_FILE;
use crate::table::Table;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Direction {
    PlaneToSphere,
    SphereToPlane,
}

pub const PLANE_IN: [&str; 5] = ["t", "xi", "eta", "xi_dot", "eta_dot"];
pub const SPHERE_IN: [&str; 7] = ["t", "qx", "qy", "qz", "vx", "vy", "vz"];
pub const SPHERE_OUT: [&str; 8] = ["t", "qx", "qy", "qz", "vx", "vy", "vz", "dtau_dt"];
pub const PLANE_OUT: [&str; 6] = ["t", "xi", "eta", "xi_dot", "eta_dot", "dtau_dt"];

/// Rows that could not be mapped, by zero-based data row index.
#[derive(Debug, Clone, PartialEq)]
pub struct Rejected {
    pub rows: Vec<usize>,
    pub first_error: String,
}

/// Maps every row; rows outside the chart are skipped and reported.
pub fn project_table(input: &Table, direction: Direction, a: f64) -> Result<(Table, Option<Rejected>)> {
    let mut rejected = Vec::new();
    let mut first_error = None;
    let out = match direction {
        Direction::PlaneToSphere => {
            let c = input.columns(&PLANE_IN)?;
            let mut out = Table::new(&SPHERE_OUT);
            for row in &input.rows {
                let p = PlanarState::new(row[c[1]], row[c[2]], row[c[3]], row[c[4]]);
                let s = planar_to_sphere(&p, a);
                let chart = denormalize_chart(&p, a);
                let rate = chart_time_density(chart.x, chart.y);
                out.push(vec![row[c[0]], s.q.x, s.q.y, s.q.z, s.v.x, s.v.y, s.v.z, rate]);
            }
            out
        }
        Direction::SphereToPlane => {
            let c = input.columns(&SPHERE_IN)?;
            let mut out = Table::new(&PLANE_OUT);
            for (i, row) in input.rows.iter().enumerate() {
                let s = SphericalState {
                    q: Vector3::new(row[c[1]], row[c[2]], row[c[3]]),
                    v: Vector3::new(row[c[4]], row[c[5]], row[c[6]]),
                };
                match sphere_to_planar(&s, a).and_then(|p| Ok((p, sphere_to_chart(&s)?))) {
                    Ok((p, chart)) => {
                        let rate = chart_time_density(chart.x, chart.y);
                        out.push(vec![row[c[0]], p.xi, p.eta, p.xi_dot, p.eta_dot, rate]);
                    }
                    Err(e) => {
                        first_error.get_or_insert_with(|| e.to_string());
                        rejected.push(i);
                    }
                }
            }
            out
        }
    };
    let rejected = first_error.map(|first_error| Rejected { rows: rejected, first_error });
    Ok((out, rejected))
}

/// Offset `a` from the sibling `summary.json` of a simulated run.
fn offset_from_summary(input: &Path) -> Result<f64> {
    let summary = input.with_file_name(SUMMARY_FILE);
    let text = std::fs::read_to_string(&summary)
        .with_context(|| format!("no --a given and no readable {}", summary.display()))?;
    let json: serde_json::Value = serde_json::from_str(&text)?;
    json["config"]["system"]["a"].as_f64().with_context(|| format!("{} has no config.system.a", summary.display()))
}

/// Default output file next to the input.
fn default_output(input: &Path, direction: Direction) -> PathBuf {
    let stem = input.file_stem().and_then(|s| s.to_str()).unwrap_or("trajectory");
    let suffix = match direction {
        Direction::PlaneToSphere => "sphere",
        Direction::SphereToPlane => "plane",
    };
    input.with_file_name(format!("{stem}.{suffix}.csv"))
}

/// Writes the mapped table and returns its path. Rows outside the chart
/// are written out as an error after the valid rows are saved.
pub fn cmd_project(input: &Path, direction: Direction, a: Option<f64>, out: Option<&Path>) -> Result<PathBuf> {
    let a = match a {
        Some(a) => a,
        None => offset_from_summary(input)?,
    };
    if !a.is_finite() {
        bail!(kepler_billiards::Error::Config(format!("offset a must be finite, got {a}")));
    }
    let table = Table::read(input)?;
    let (mapped, rejected) = project_table(&table, direction, a)?;
    let path = out.map_or_else(|| default_output(input, direction), Path::to_path_buf);
    mapped.write(&path)?;
    if let Some(r) = rejected {
        bail!(kepler_billiards::Error::Config(format!(
            "{} row(s) outside the southern hemisphere, indices {:?}: {}",
            r.rows.len(),
            r.rows,
            r.first_error
        )));
    }
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn south_pole_is_chart_origin() {
        let mut t = Table::new(&SPHERE_IN);
        t.push(vec![0.0, 0.0, 0.0, -1.0, 0.3, -0.2, 0.0]);
        let (p, rejected) = project_table(&t, Direction::SphereToPlane, 0.0).unwrap();
        assert!(rejected.is_none());
        assert_eq!(p.rows[0], vec![0.0, 0.0, 0.0, 0.3, -0.2, 1.0]);
    }

    #[test]
    fn northern_rows_are_reported() {
        let mut t = Table::new(&SPHERE_IN);
        t.push(vec![0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0]);
        t.push(vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
        t.push(vec![2.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let (p, rejected) = project_table(&t, Direction::SphereToPlane, 0.5).unwrap();
        assert_eq!(p.rows.len(), 1);
        assert_eq!(rejected.unwrap().rows, vec![1, 2]);
    }
}

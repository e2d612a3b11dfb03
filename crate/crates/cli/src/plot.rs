//! `plot`: deterministic SVG rendering of a simulated run.
//!
//! Planar runs are drawn in the normalized `(ξ, η)` chart. Spherical runs
//! are drawn as an orthographic projection onto the `(q_x, q_y)` plane.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use kepler_billiards::config::Config;
use kepler_billiards::model::{ValidatedModel, WallGeometry};
use nalgebra::Vector3;

use crate::simulate::{BOUNCES_FILE, SUMMARY_FILE, TRAJECTORY_FILE};
use crate::table::Table;

const SIZE: f64 = 600.0;
const MARGIN: f64 = 30.0;
const CURVE_SAMPLES: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Geometry {
    Planar,
    Spherical,
}

/// Everything drawn, in model coordinates.
struct Scene {
    geometry: Geometry,
    segments: Vec<Vec<[f64; 2]>>,
    bounces: Vec<[f64; 2]>,
    walls: Vec<Vec<[f64; 2]>>,
    centers: Vec<[f64; 2]>,
}

struct Inputs {
    trajectory: Table,
    bounces: Option<Table>,
    model: Option<ValidatedModel>,
}

fn locate(input: &Path) -> PathBuf {
    if input.is_dir() {
        input.join(TRAJECTORY_FILE)
    } else {
        input.to_path_buf()
    }
}

fn read_inputs(input: &Path) -> Result<Inputs> {
    let path = locate(input);
    let trajectory = Table::read(&path)?;
    let bounces_path = path.with_file_name(BOUNCES_FILE);
    let bounces = if bounces_path.exists() { Some(Table::read(&bounces_path)?) } else { None };
    let summary_path = path.with_file_name(SUMMARY_FILE);
    let model = if summary_path.exists() {
        let text = std::fs::read_to_string(&summary_path)?;
        let json: serde_json::Value = serde_json::from_str(&text)?;
        let config: Config = serde_json::from_value(json["config"].clone())
            .with_context(|| format!("{}: invalid config", summary_path.display()))?;
        Some(config.setup()?.model)
    } else {
        None
    };
    Ok(Inputs { trajectory, bounces, model })
}

fn orthonormal_pair(n: Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let n = n.normalize();
    let helper = if n.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    let e1 = n.cross(&helper).normalize();
    (e1, n.cross(&e1))
}

fn sphere_circle(axis: Vector3<f64>, colatitude: f64) -> Vec<[f64; 2]> {
    let (e1, e2) = orthonormal_pair(axis);
    let axis = axis.normalize();
    (0..=CURVE_SAMPLES)
        .map(|k| {
            let phi = std::f64::consts::TAU * k as f64 / CURVE_SAMPLES as f64;
            let q = axis * colatitude.cos() + (e1 * phi.cos() + e2 * phi.sin()) * colatitude.sin();
            [q.x, q.y]
        })
        .collect()
}

fn scene(inputs: &Inputs) -> Result<Scene> {
    let t = &inputs.trajectory;
    let (geometry, cols) = if t.has_columns(&["xi", "eta"]) {
        (Geometry::Planar, t.columns(&["t", "xi", "eta"])?)
    } else {
        (Geometry::Spherical, t.columns(&["t", "qx", "qy"])?)
    };
    let bounce_pts: Vec<(f64, [f64; 2])> = match &inputs.bounces {
        Some(b) => {
            let c = match geometry {
                Geometry::Planar => b.columns(&["t", "xi", "eta"])?,
                Geometry::Spherical => b.columns(&["t", "qx", "qy"])?,
            };
            b.rows.iter().map(|r| (r[c[0]], [r[c[1]], r[c[2]]])).collect()
        }
        None => Vec::new(),
    };

    let mut segments = Vec::new();
    if !t.rows.is_empty() {
        let mut current = Vec::new();
        let mut next = 0;
        for row in &t.rows {
            while next < bounce_pts.len() && row[cols[0]] > bounce_pts[next].0 {
                let hit = bounce_pts[next].1;
                current.push(hit);
                segments.push(std::mem::take(&mut current));
                current.push(hit);
                next += 1;
            }
            current.push([row[cols[1]], row[cols[2]]]);
        }
        segments.push(current);
    }

    let mut walls = Vec::new();
    let mut centers = Vec::new();
    if geometry == Geometry::Spherical {
        walls.push(sphere_circle(Vector3::z(), std::f64::consts::FRAC_PI_2));
    }
    if let Some(model) = &inputs.model {
        let z1 = model.params().spherical_center().z1;
        match model.wall().geometry {
            WallGeometry::PlanarLine { .. } | WallGeometry::PlanarCircle { .. } => centers.push([0.0, 0.0]),
            _ => centers.extend([[z1.x, z1.y], [-z1.x, -z1.y]]),
        }
        match model.wall().geometry {
            WallGeometry::PlanarCircle { radius } => walls.push(
                (0..=CURVE_SAMPLES)
                    .map(|k| {
                        let phi = std::f64::consts::TAU * k as f64 / CURVE_SAMPLES as f64;
                        [radius * phi.cos(), radius * phi.sin()]
                    })
                    .collect(),
            ),
            WallGeometry::SphericalGreatCircle { normal } => walls.push(sphere_circle(normal, std::f64::consts::FRAC_PI_2)),
            WallGeometry::SphericalCenteredCircle { colatitude } => walls.push(sphere_circle(z1, colatitude)),
            // The line spans the view, so it is added once the bounds are known.
            WallGeometry::PlanarLine { .. } => {}
        }
    }
    Ok(Scene { geometry, segments, bounces: bounce_pts.into_iter().map(|(_, p)| p).collect(), walls, centers })
}

/// Square view box containing every point, with 10 % padding.
fn bounds(scene: &Scene) -> (f64, f64, f64) {
    if scene.geometry == Geometry::Spherical {
        return (0.0, 0.0, 1.1);
    }
    let pts = scene.segments.iter().flatten().chain(&scene.bounces).chain(&scene.centers).chain(scene.walls.iter().flatten());
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in pts.filter(|p| p[0].is_finite() && p[1].is_finite()) {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    if lo[0] > hi[0] {
        return (0.0, 0.0, 1.0);
    }
    let extent = (hi[0] - lo[0]).max(hi[1] - lo[1]);
    let half = if extent > 1e-9 { 0.55 * extent } else { 1.0 };
    (0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1]), half)
}

fn polyline(svg: &mut String, pts: &[[f64; 2]], to_px: &dyn Fn([f64; 2]) -> (f64, f64), class: &str) {
    let coords: Vec<String> = pts
        .iter()
        .map(|p| to_px(*p))
        .map(|(x, y)| format!("{x:.3},{y:.3}"))
        .collect();
    let _ = writeln!(svg, r#"<polyline class="{class}" points="{}"/>"#, coords.join(" "));
}

/// Renders the SVG document.
fn render(mut scene: Scene, model: Option<&ValidatedModel>) -> String {
    let (cx, cy, half) = bounds(&scene);
    if let Some(WallGeometry::PlanarLine { level }) = model.map(|m| m.wall().geometry) {
        scene.walls.push(vec![[cx - half, level], [cx + half, level]]);
    }
    let scale = (SIZE - 2.0 * MARGIN) / (2.0 * half);
    let to_px = move |p: [f64; 2]| (MARGIN + (p[0] - cx + half) * scale, MARGIN + (cy + half - p[1]) * scale);

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#);
    let _ = writeln!(
        svg,
        "<style>.axis{{stroke:#999;stroke-width:1}} .wall{{stroke:#000;stroke-width:2;fill:none}} \
         .segment{{stroke:#1f77b4;stroke-width:1;fill:none}} .bounce{{fill:#d62728}} .center{{fill:#000}}</style>"
    );
    let (x0, _) = to_px([cx - half, 0.0]);
    let (x1, _) = to_px([cx + half, 0.0]);
    let (_, y0) = to_px([0.0, cy + half]);
    let (_, y1) = to_px([0.0, cy - half]);
    let (ox, oy) = to_px([0.0, 0.0]);
    let _ = writeln!(svg, r#"<line class="axis" x1="{x0:.3}" y1="{oy:.3}" x2="{x1:.3}" y2="{oy:.3}"/>"#);
    let _ = writeln!(svg, r#"<line class="axis" x1="{ox:.3}" y1="{y0:.3}" x2="{ox:.3}" y2="{y1:.3}"/>"#);
    for w in &scene.walls {
        polyline(&mut svg, w, &to_px, "wall");
    }
    for s in &scene.segments {
        polyline(&mut svg, s, &to_px, "segment");
    }
    for b in &scene.bounces {
        let (x, y) = to_px(*b);
        let _ = writeln!(svg, r#"<circle class="bounce" cx="{x:.3}" cy="{y:.3}" r="2.5"/>"#);
    }
    for c in &scene.centers {
        let (x, y) = to_px(*c);
        let _ = writeln!(svg, r#"<circle class="center" cx="{x:.3}" cy="{y:.3}" r="4"/>"#);
    }
    svg.push_str("</svg>\n");
    svg
}

/// Renders a run directory or trajectory file into `out`.
pub fn cmd_plot(input: &Path, out: &Path) -> Result<usize> {
    let inputs = read_inputs(input)?;
    let scene = scene(&inputs)?;
    let segments = scene.segments.len();
    std::fs::write(out, render(scene, inputs.model.as_ref())).with_context(|| format!("writing {}", out.display()))?;
    Ok(segments)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::PLANAR_HEADER;

    fn inputs(times: &[f64], hits: &[f64]) -> Inputs {
        let mut trajectory = Table::new(&PLANAR_HEADER);
        for &t in times {
            trajectory.push(vec![t, t, -t, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        }
        let mut bounces = Table::new(&["t", "xi", "eta"]);
        for &t in hits {
            bounces.push(vec![t, t, -t]);
        }
        Inputs { trajectory, bounces: Some(bounces), model: None }
    }

    #[test]
    fn one_segment_per_flight() {
        let s = scene(&inputs(&[0.0, 0.5, 1.0, 1.5, 2.0, 2.5], &[1.0, 2.0])).unwrap();
        assert_eq!(s.segments.len(), 3);
        assert_eq!(s.segments[1].first(), Some(&[1.0, -1.0]));
    }

    #[test]
    fn empty_trajectory_renders() {
        let s = scene(&inputs(&[], &[])).unwrap();
        assert!(s.segments.is_empty());
        let svg = render(s, None);
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
        assert!(!svg.contains("NaN"));
    }
}

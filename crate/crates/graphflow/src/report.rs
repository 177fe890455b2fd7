//! Run persistence: diagnostics CSV, machine-readable summary, snapshots
//! metadata and self-contained SVG plots of the diagnostic time series.

use crate::curvature::DiagnosticsRecord;
use crate::error::{Error, Result};
use crate::flow::Termination;
use crate::grid::MapState;
use crate::scenario::Hypotheses;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use std::path::Path;

pub const DIAGNOSTICS_HEADER: &str =
    "step,t,dt,min_star_omega,max_lambda,min_area_margin,min_S_diag,max_A_sq,max_H_norm,max_normal_defect,max_residual_34";

fn fmt(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else {
        format!("{v:.16e}")
    }
}

pub fn write_diagnostics_csv(path: &Path, records: &[DiagnosticsRecord]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "{DIAGNOSTICS_HEADER}")?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.step,
            fmt(r.t),
            fmt(r.dt),
            fmt(r.min_star_omega),
            fmt(r.max_lambda),
            fmt(r.min_area_margin),
            fmt(r.min_s_diag),
            fmt(r.max_a_sq),
            fmt(r.max_h_norm),
            fmt(r.max_normal_defect),
            r.max_residual_34.map(fmt).unwrap_or_else(|| "nan".into()),
        )?;
    }
    Ok(())
}

pub fn read_diagnostics_csv(path: &Path) -> Result<Vec<DiagnosticsRecord>> {
    let reader = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut lines = reader.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty diagnostics file".into()))??;
    if header.trim() != DIAGNOSTICS_HEADER {
        return Err(Error::Parse(format!("unexpected diagnostics header: {header}")));
    }
    let mut out = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 11 {
            return Err(Error::Parse(format!("bad diagnostics row: {line}")));
        }
        let f = |i: usize| -> Result<f64> {
            fields[i]
                .parse()
                .map_err(|e| Error::Parse(format!("bad float in diagnostics: {e}")))
        };
        let residual = f(10)?;
        out.push(DiagnosticsRecord {
            step: fields[0]
                .parse()
                .map_err(|e| Error::Parse(format!("bad step: {e}")))?,
            t: f(1)?,
            dt: f(2)?,
            min_star_omega: f(3)?,
            max_lambda: f(4)?,
            min_area_margin: f(5)?,
            min_s_diag: f(6)?,
            max_a_sq: f(7)?,
            max_h_norm: f(8)?,
            max_normal_defect: f(9)?,
            max_residual_34: if residual.is_nan() { None } else { Some(residual) },
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub termination: Termination,
    pub steps: usize,
    pub t_final: f64,
    pub final_max_lambda: f64,
    pub final_min_star_omega: f64,
    pub wall_seconds: f64,
    pub recenter_steps: Vec<usize>,
    pub convergence_radius: Option<f64>,
    pub hypotheses: Hypotheses,
}

pub fn write_summary(path: &Path, summary: &RunSummary) -> Result<()> {
    let text = serde_json::to_string_pretty(summary)?;
    std::fs::write(path, text)?;
    Ok(())
}

/// Geodesic radius of the image around its mean: the distance of the
/// farthest node image from the chordal mean point (circular mean per axis
/// on torus targets).
pub fn spread_radius(state: &MapState) -> f64 {
    let m = state.m();
    let nodes = state.node_count();
    let center: Vec<f64> = if state.target.is_sphere() {
        let mut mean = [0.0f64; 3];
        for node in 0..nodes {
            let p = state.target.embed(state.value(node));
            for (acc, v) in mean.iter_mut().zip(&p) {
                *acc += v;
            }
        }
        let norm = (mean[0] * mean[0] + mean[1] * mean[1] + mean[2] * mean[2]).sqrt();
        let r = state.target.radius().unwrap();
        if norm > 1e-12 {
            state
                .target
                .chart_of(&[mean[0] / norm * r, mean[1] / norm * r, mean[2] / norm * r])
        } else {
            state.value(0).to_vec()
        }
    } else {
        // Circular mean per periodic axis.
        (0..m)
            .map(|a| {
                let period = state.target.axis_period(a).unwrap_or(1.0);
                let (mut s, mut c) = (0.0, 0.0);
                for node in 0..nodes {
                    let ang = state.value(node)[a] / period * 2.0 * std::f64::consts::PI;
                    s += ang.sin();
                    c += ang.cos();
                }
                s.atan2(c) / (2.0 * std::f64::consts::PI) * period
            })
            .collect()
    };
    let mut radius: f64 = 0.0;
    for node in 0..nodes {
        radius = radius.max(state.target.geodesic_distance(state.value(node), &center));
    }
    radius
}

/// Minimal self-contained SVG line plot of one diagnostic column.
pub fn write_timeseries_svg(path: &Path, title: &str, points: &[(f64, f64)]) -> Result<()> {
    let w = 720.0;
    let h = 360.0;
    let ml = 70.0;
    let mr = 20.0;
    let mt = 36.0;
    let mb = 46.0;
    let finite: Vec<(f64, f64)> = points
        .iter()
        .copied()
        .filter(|(t, v)| t.is_finite() && v.is_finite())
        .collect();
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n"
    ));
    svg.push_str(&format!(
        "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n<text x=\"{}\" y=\"22\" font-family=\"monospace\" font-size=\"15\">{title}</text>\n",
        ml
    ));
    if finite.len() >= 2 {
        let (mut t0, mut t1) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut v0, mut v1) = (f64::INFINITY, f64::NEG_INFINITY);
        for (t, v) in &finite {
            t0 = t0.min(*t);
            t1 = t1.max(*t);
            v0 = v0.min(*v);
            v1 = v1.max(*v);
        }
        if (t1 - t0).abs() < 1e-300 {
            t1 = t0 + 1.0;
        }
        if (v1 - v0).abs() < 1e-300 {
            let pad = if v0 == 0.0 { 1.0 } else { v0.abs() * 0.1 };
            v0 -= pad;
            v1 += pad;
        }
        let sx = (w - ml - mr) / (t1 - t0);
        let sy = (h - mt - mb) / (v1 - v0);
        let mut d = String::new();
        for (i, (t, v)) in finite.iter().enumerate() {
            let x = ml + (t - t0) * sx;
            let y = h - mb - (v - v0) * sy;
            d.push_str(if i == 0 { "M" } else { "L" });
            d.push_str(&format!("{x:.2} {y:.2} "));
        }
        svg.push_str(&format!(
            "<path d=\"{d}\" fill=\"none\" stroke=\"#1965b0\" stroke-width=\"1.5\"/>\n"
        ));
        // Axes and extrema labels.
        svg.push_str(&format!(
            "<line x1=\"{ml}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
            h - mb,
            w - mr,
            h - mb
        ));
        svg.push_str(&format!(
            "<line x1=\"{ml}\" y1=\"{mt}\" x2=\"{ml}\" y2=\"{}\" stroke=\"black\"/>\n",
            h - mb
        ));
        svg.push_str(&format!(
            "<text x=\"{ml}\" y=\"{}\" font-family=\"monospace\" font-size=\"12\">t ∈ [{t0:.4e}, {t1:.4e}]</text>\n",
            h - 12.0
        ));
        svg.push_str(&format!(
            "<text x=\"4\" y=\"{mt}\" font-family=\"monospace\" font-size=\"12\">max {v1:.6e}</text>\n"
        ));
        svg.push_str(&format!(
            "<text x=\"4\" y=\"{}\" font-family=\"monospace\" font-size=\"12\">min {v0:.6e}</text>\n",
            h - mb
        ));
    } else {
        svg.push_str(&format!(
            "<text x=\"{ml}\" y=\"{}\" font-family=\"monospace\" font-size=\"13\">no finite samples</text>\n",
            h / 2.0
        ));
    }
    svg.push_str("</svg>\n");
    std::fs::write(path, svg)?;
    Ok(())
}

/// Render every diagnostic column of a record series into `dir/plots/`.
pub fn write_all_plots(dir: &Path, records: &[DiagnosticsRecord]) -> Result<()> {
    let plots = dir.join("plots");
    std::fs::create_dir_all(&plots)?;
    let series = |f: &dyn Fn(&DiagnosticsRecord) -> f64| -> Vec<(f64, f64)> {
        records.iter().map(|r| (r.t, f(r))).collect()
    };
    let columns: Vec<(&str, Vec<(f64, f64)>)> = vec![
        ("min_star_omega", series(&|r| r.min_star_omega)),
        ("max_lambda", series(&|r| r.max_lambda)),
        ("min_area_margin", series(&|r| r.min_area_margin)),
        ("min_S_diag", series(&|r| r.min_s_diag)),
        ("max_A_sq", series(&|r| r.max_a_sq)),
        ("max_H_norm", series(&|r| r.max_h_norm)),
        ("max_normal_defect", series(&|r| r.max_normal_defect)),
        (
            "max_residual_34",
            records
                .iter()
                .map(|r| (r.t, r.max_residual_34.unwrap_or(f64::NAN)))
                .collect(),
        ),
        ("dt", series(&|r| r.dt)),
    ];
    for (name, pts) in columns {
        write_timeseries_svg(&plots.join(format!("{name}.svg")), name, &pts)?;
    }
    Ok(())
}

/// Snapshot sidecar: everything resume needs besides the values.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SnapshotMeta {
    pub step: usize,
    pub t: f64,
}

pub fn write_snapshot_with_meta(dir: &Path, state: &MapState, step: usize) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let snap = dir.join(format!("step_{step:010}.csv"));
    crate::grid::write_snapshot(state, &snap)?;
    let meta = SnapshotMeta {
        step,
        t: state.time,
    };
    std::fs::write(
        dir.join(format!("step_{step:010}_meta.json")),
        serde_json::to_string_pretty(&meta)?,
    )?;
    Ok(())
}

pub fn read_snapshot_meta(path: &Path) -> Result<SnapshotMeta> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

//! Run artifacts: per-epoch solution CSV, RMSE and detection reports in CSV
//! and JSON, and SVG plots. Everything written here is deterministic for a
//! fixed run: no timestamps, shortest round-trip float formatting, stable
//! field order.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::Vector3;
use plotters::prelude::*;

use crate::dataset::AlignedPair;
use crate::error::{Error, Result};
use crate::eval::{DetectionReport, RmseReport};
use crate::pipeline::AttitudeSolution;

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn create(path: &Path) -> Result<fs::File> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::File::create(path).map_err(io_err(path))
}

/// Per-epoch navigation solution with diagnostics.
pub fn write_solutions_csv(path: &Path, solutions: &[AttitudeSolution]) -> Result<()> {
    let mut f = create(path)?;
    writeln!(
        f,
        "t,roll_deg,pitch_deg,yaw_deg,sigma_n_deg,sigma_e_deg,sigma_d_deg,\
         omega_x,omega_y,omega_z,omega_dot_x,omega_dot_y,omega_dot_z,\
         rotation_detected,update_applied,solver_converged"
    )
    .map_err(io_err(path))?;
    for s in solutions {
        let rpy = s.euler_deg();
        let sigma = Vector3::new(
            s.p[(0, 0)].max(0.0).sqrt().to_degrees(),
            s.p[(1, 1)].max(0.0).sqrt().to_degrees(),
            s.p[(2, 2)].max(0.0).sqrt().to_degrees(),
        );
        writeln!(
            f,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            s.t,
            rpy.x,
            rpy.y,
            rpy.z,
            sigma.x,
            sigma.y,
            sigma.z,
            s.omega.x,
            s.omega.y,
            s.omega.z,
            s.omega_dot.x,
            s.omega_dot.y,
            s.omega_dot.z,
            s.rotation_detected as u8,
            s.update_applied as u8,
            s.solver_converged as u8
        )
        .map_err(io_err(path))?;
    }
    Ok(())
}

/// A solution row read back from a solutions CSV; enough to re-score and
/// re-plot a finished run.
#[derive(Debug, Clone, Copy)]
pub struct SolutionRow {
    pub t: f64,
    pub rpy_deg: Vector3<f64>,
    /// Attitude-error standard deviations, degrees.
    pub sigma_deg: Vector3<f64>,
    pub rotation_detected: bool,
    pub update_applied: bool,
}

pub fn read_solutions_csv(path: &Path) -> Result<Vec<SolutionRow>> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::Reader::from_path(path).map_err(csv_err)?;
    let headers = reader.headers().map_err(csv_err)?.clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::SchemaMismatch {
                path: path.to_path_buf(),
                detail: format!("missing column `{name}`"),
            })
    };
    let (ct, cr, cp, cy) = (col("t")?, col("roll_deg")?, col("pitch_deg")?, col("yaw_deg")?);
    let (csn, cse, csd) = (col("sigma_n_deg")?, col("sigma_e_deg")?, col("sigma_d_deg")?);
    let (crd, cua) = (col("rotation_detected")?, col("update_applied")?);
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        let parse = |k: usize| -> Result<f64> {
            record[k].parse::<f64>().map_err(|e| Error::SchemaMismatch {
                path: path.to_path_buf(),
                detail: format!("row {}: {e}", i + 2),
            })
        };
        rows.push(SolutionRow {
            t: parse(ct)?,
            rpy_deg: Vector3::new(parse(cr)?, parse(cp)?, parse(cy)?),
            sigma_deg: Vector3::new(parse(csn)?, parse(cse)?, parse(csd)?),
            rotation_detected: parse(crd)? != 0.0,
            update_applied: parse(cua)? != 0.0,
        });
    }
    if rows.is_empty() {
        return Err(Error::EmptyPairing);
    }
    Ok(rows)
}

pub fn write_rmse_report(dir: &Path, report: &RmseReport) -> Result<()> {
    let csv_path = dir.join("rmse_report.csv");
    let mut f = create(&csv_path)?;
    writeln!(
        f,
        "trajectory,mode,roll_deg,pitch_deg,yaw_deg,attitude_deg,delta_abs_deg,delta_rel_pct"
    )
    .map_err(io_err(&csv_path))?;
    for r in &report.rows {
        writeln!(
            f,
            "{},{},{},{},{},{},{},{}",
            r.trajectory,
            r.mode,
            r.roll_deg,
            r.pitch_deg,
            r.yaw_deg,
            r.attitude_deg,
            r.delta_abs_deg.map_or(String::new(), |v| v.to_string()),
            r.delta_rel_pct.map_or(String::new(), |v| v.to_string()),
        )
        .map_err(io_err(&csv_path))?;
    }
    write_json(&dir.join("rmse_report.json"), report)
}

pub fn write_detection_report(dir: &Path, report: &DetectionReport) -> Result<()> {
    let csv_path = dir.join("detection_report.csv");
    let mut f = create(&csv_path)?;
    writeln!(
        f,
        "accuracy,true_positives,false_positives,true_negatives,false_negatives"
    )
    .map_err(io_err(&csv_path))?;
    writeln!(
        f,
        "{},{},{},{},{}",
        report.accuracy,
        report.true_positives,
        report.false_positives,
        report.true_negatives,
        report.false_negatives
    )
    .map_err(io_err(&csv_path))?;
    write_json(&dir.join("detection_report.json"), report)
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Config(format!("json serialization: {e}")))?;
    let mut f = create(path)?;
    f.write_all(text.as_bytes()).map_err(io_err(path))?;
    f.write_all(b"\n").map_err(io_err(path))?;
    Ok(())
}

fn plot_error(e: Error) -> Error {
    e
}

fn draw_error<E: std::fmt::Display>(path: &Path) -> impl Fn(E) -> Error + '_ {
    move |e| Error::Config(format!("plot {} failed: {e}", path.display()))
}

/// Roll/pitch error against truth over time.
pub fn plot_error_time(path: &Path, aligned: &[AlignedPair]) -> Result<()> {
    if aligned.is_empty() {
        return Err(Error::EmptyPairing);
    }
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir)).map_err(plot_error)?;
    }
    let t_max = aligned.last().unwrap().t.max(1e-9);
    let max_err = aligned
        .iter()
        .map(|p| p.error_deg.x.abs().max(p.error_deg.y.abs()))
        .fold(0.1, f64::max);
    let root = SVGBackend::new(path, (900, 480)).into_drawing_area();
    root.fill(&WHITE).map_err(draw_error(path))?;
    let mut chart = ChartBuilder::on(&root)
        .margin(12)
        .caption("attitude error vs time", ("sans-serif", 22))
        .x_label_area_size(36)
        .y_label_area_size(48)
        .build_cartesian_2d(0.0..t_max, -max_err * 1.1..max_err * 1.1)
        .map_err(draw_error(path))?;
    chart
        .configure_mesh()
        .x_desc("t [s]")
        .y_desc("error [deg]")
        .draw()
        .map_err(draw_error(path))?;
    chart
        .draw_series(LineSeries::new(
            aligned.iter().map(|p| (p.t, p.error_deg.x)),
            &RED,
        ))
        .map_err(draw_error(path))?
        .label("roll")
        .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], RED));
    chart
        .draw_series(LineSeries::new(
            aligned.iter().map(|p| (p.t, p.error_deg.y)),
            &BLUE,
        ))
        .map_err(draw_error(path))?
        .label("pitch")
        .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], BLUE));
    chart
        .configure_series_labels()
        .border_style(BLACK)
        .draw()
        .map_err(draw_error(path))?;
    root.present().map_err(draw_error(path))?;
    Ok(())
}

/// Tilt error with the filter's ±1σ envelope.
pub fn plot_covariance_envelope(
    path: &Path,
    solutions: &[AttitudeSolution],
    tilt_error_deg: &[(f64, f64)],
) -> Result<()> {
    if solutions.is_empty() {
        return Err(Error::EmptyPairing);
    }
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir)).map_err(plot_error)?;
    }
    let t_max = solutions.last().unwrap().t.max(1e-9);
    let sigma = |s: &AttitudeSolution| {
        (0.5 * (s.p[(0, 0)].max(0.0) + s.p[(1, 1)].max(0.0)))
            .sqrt()
            .to_degrees()
    };
    let y_max = solutions
        .iter()
        .map(sigma)
        .chain(tilt_error_deg.iter().map(|&(_, e)| e.abs()))
        .fold(0.05, f64::max);
    let root = SVGBackend::new(path, (900, 480)).into_drawing_area();
    root.fill(&WHITE).map_err(draw_error(path))?;
    let mut chart = ChartBuilder::on(&root)
        .margin(12)
        .caption("tilt error and 1-sigma envelope", ("sans-serif", 22))
        .x_label_area_size(36)
        .y_label_area_size(48)
        .build_cartesian_2d(0.0..t_max, -y_max * 1.2..y_max * 1.2)
        .map_err(draw_error(path))?;
    chart
        .configure_mesh()
        .x_desc("t [s]")
        .y_desc("tilt error [deg]")
        .draw()
        .map_err(draw_error(path))?;
    chart
        .draw_series(AreaSeries::new(
            solutions.iter().map(|s| (s.t, sigma(s))),
            0.0,
            RGBColor(180, 200, 255).mix(0.4),
        ))
        .map_err(draw_error(path))?;
    chart
        .draw_series(AreaSeries::new(
            solutions.iter().map(|s| (s.t, -sigma(s))),
            0.0,
            RGBColor(180, 200, 255).mix(0.4),
        ))
        .map_err(draw_error(path))?;
    chart
        .draw_series(LineSeries::new(tilt_error_deg.iter().copied(), &RED))
        .map_err(draw_error(path))?;
    root.present().map_err(draw_error(path))?;
    Ok(())
}

/// Detection regions: the true yaw rate with detected-rotation spans shaded.
pub fn plot_detection_regions(
    path: &Path,
    solutions: &[AttitudeSolution],
    truth_omega_z: &[(f64, f64)],
) -> Result<()> {
    if solutions.is_empty() {
        return Err(Error::EmptyPairing);
    }
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir)).map_err(plot_error)?;
    }
    let t_max = solutions.last().unwrap().t.max(1e-9);
    let w_max = truth_omega_z
        .iter()
        .map(|&(_, w)| w.abs())
        .fold(0.1, f64::max);
    let root = SVGBackend::new(path, (900, 480)).into_drawing_area();
    root.fill(&WHITE).map_err(draw_error(path))?;
    let mut chart = ChartBuilder::on(&root)
        .margin(12)
        .caption("rotation detection", ("sans-serif", 22))
        .x_label_area_size(36)
        .y_label_area_size(48)
        .build_cartesian_2d(0.0..t_max, -w_max * 1.2..w_max * 1.2)
        .map_err(draw_error(path))?;
    chart
        .configure_mesh()
        .x_desc("t [s]")
        .y_desc("yaw rate [rad/s]")
        .draw()
        .map_err(draw_error(path))?;
    // Shade contiguous detected spans.
    let mut spans: Vec<(f64, f64)> = Vec::new();
    let mut open: Option<f64> = None;
    for s in solutions {
        match (s.rotation_detected, open) {
            (true, None) => open = Some(s.t),
            (false, Some(start)) => {
                spans.push((start, s.t));
                open = None;
            }
            _ => {}
        }
    }
    if let Some(start) = open {
        spans.push((start, t_max));
    }
    chart
        .draw_series(spans.iter().map(|&(a, b)| {
            Rectangle::new(
                [(a, -w_max * 1.2), (b, w_max * 1.2)],
                RGBColor(170, 230, 170).mix(0.5).filled(),
            )
        }))
        .map_err(draw_error(path))?;
    chart
        .draw_series(LineSeries::new(truth_omega_z.iter().copied(), &BLACK))
        .map_err(draw_error(path))?;
    root.present().map_err(draw_error(path))?;
    Ok(())
}

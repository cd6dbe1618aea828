//! Session ingestion: per-IMU CSV logs, ground-truth attitude logs, manifest
//! parsing, clock alignment, and the matching export path used by the
//! simulator so synthetic and recorded data flow through one pipeline.
//!
//! CSV schemas (comma separated, `.` decimal, LF):
//! - IMU log: header `t,fx,fy,fz`, specific force in the sensor frame, m/s².
//! - Ground truth: header `t,roll,pitch,yaw`, degrees.
//! - Gyro log: header `t,wx,wy,wz`, rad/s.
//!
//! A session manifest is a TOML file listing the per-IMU logs with their
//! lever arms, sensor-to-body rotations and noise levels, plus the pairing
//! mode and optional truth/gyro logs. All paths are resolved relative to the
//! manifest location. Timestamps are normalized to seconds from session
//! start and all streams are linearly resampled onto the slowest stream's
//! clock.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{validate_and_pair, ArrayGeometry, Axis, ImuPlacement, SymmetryMode};
use crate::geometry::{SymmetryPairing, DEFAULT_SYMMETRY_EPS};
use crate::sim::{ImuFrameSample, TrajectoryEpoch};
use crate::so3::Dcm;

/// Maximum tolerated gap between consecutive samples, in sample periods.
pub const MAX_GAP_PERIODS: f64 = 5.0;

/// A raw per-IMU log in the sensor frame.
#[derive(Debug, Clone)]
pub struct RawImuLog {
    pub imu_id: u32,
    pub t: Vec<f64>,
    pub f: Vec<Vector3<f64>>,
}

/// Recorded attitude truth, degrees.
#[derive(Debug, Clone)]
pub struct GroundTruthLog {
    pub t: Vec<f64>,
    pub rpy_deg: Vec<Vector3<f64>>,
}

/// One estimate/truth pairing produced by [`align_truth`].
#[derive(Debug, Clone, Copy)]
pub struct AlignedPair {
    pub t: f64,
    pub est_rpy_deg: Vector3<f64>,
    pub truth_rpy_deg: Vector3<f64>,
    /// Per-angle error, wrapped to (−180, 180].
    pub error_deg: Vector3<f64>,
}

/// Everything a pipeline needs from one recorded or exported session.
#[derive(Debug, Clone)]
pub struct ArraySession {
    pub geometry: ArrayGeometry,
    pub pairing: SymmetryPairing,
    pub samples: Vec<ImuFrameSample>,
    pub rate_hz: f64,
    pub truth: Option<GroundTruthLog>,
    /// Optional recorded gyro stream resampled to the common clock, rad/s.
    pub gyro: Option<Vec<Vector3<f64>>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionManifest {
    pub array: ArraySection,
    #[serde(rename = "imu")]
    pub imus: Vec<ImuSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<FileSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gyro: Option<FileSection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArraySection {
    /// `full3d` or `planar2d`.
    pub mode: String,
    /// Plane normal for planar arrays: `x`, `y` or `z`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axis: Option<String>,
    #[serde(default = "default_eps_sym")]
    pub eps_sym: f64,
}

fn default_eps_sym() -> f64 {
    DEFAULT_SYMMETRY_EPS
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImuSection {
    pub id: u32,
    pub path: String,
    pub rho: [f64; 3],
    /// Row-major 3×3 sensor-to-body rotation; identity when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_s_to_b: Option<[f64; 9]>,
    pub sigma_f: f64,
    /// Declared sample rate; checked within 1% when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate_hz: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FileSection {
    pub path: String,
}

impl SessionManifest {
    pub fn symmetry_mode(&self) -> Result<SymmetryMode> {
        match self.array.mode.as_str() {
            "full3d" => Ok(SymmetryMode::Full3D),
            "planar2d" => {
                let axis = match self.array.axis.as_deref() {
                    Some("x") => Axis::X,
                    Some("y") => Axis::Y,
                    Some("z") | None => Axis::Z,
                    Some(other) => {
                        return Err(Error::Config(format!("unknown plane axis `{other}`")))
                    }
                };
                Ok(SymmetryMode::Planar2D(axis))
            }
            other => Err(Error::Config(format!("unknown array mode `{other}`"))),
        }
    }
}

fn read_to_string(path: &Path) -> Result<String> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Read a four-column CSV with the given exact header.
fn read_csv4(path: &Path, header: [&str; 4]) -> Result<(Vec<f64>, Vec<Vector3<f64>>)> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let mut reader = csv::Reader::from_path(path).map_err(|source| Error::Csv {
        path: path.to_path_buf(),
        source,
    })?;
    let got = reader.headers().map_err(|source| Error::Csv {
        path: path.to_path_buf(),
        source,
    })?;
    let expected: Vec<&str> = header.to_vec();
    if got.iter().collect::<Vec<_>>() != expected {
        return Err(Error::SchemaMismatch {
            path: path.to_path_buf(),
            detail: format!(
                "expected header `{}`, got `{}`",
                expected.join(","),
                got.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }
    let mut t = Vec::new();
    let mut v = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|source| Error::Csv {
            path: path.to_path_buf(),
            source,
        })?;
        if record.len() != 4 {
            return Err(Error::SchemaMismatch {
                path: path.to_path_buf(),
                detail: format!("row {} has {} fields", i + 2, record.len()),
            });
        }
        let parse = |k: usize| -> Result<f64> {
            record[k]
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::SchemaMismatch {
                    path: path.to_path_buf(),
                    detail: format!("row {} field {}: {e}", i + 2, k + 1),
                })
        };
        let ti = parse(0)?;
        if let Some(&last) = t.last() {
            if ti <= last {
                return Err(Error::SchemaMismatch {
                    path: path.to_path_buf(),
                    detail: format!("timestamps not strictly increasing at row {}", i + 2),
                });
            }
        }
        t.push(ti);
        v.push(Vector3::new(parse(1)?, parse(2)?, parse(3)?));
    }
    if t.len() < 2 {
        return Err(Error::SchemaMismatch {
            path: path.to_path_buf(),
            detail: "log needs at least two samples".into(),
        });
    }
    Ok((t, v))
}

pub fn read_imu_csv(path: &Path, imu_id: u32) -> Result<RawImuLog> {
    let (t, f) = read_csv4(path, ["t", "fx", "fy", "fz"])?;
    Ok(RawImuLog { imu_id, t, f })
}

pub fn read_truth_csv(path: &Path) -> Result<GroundTruthLog> {
    let (t, rpy_deg) = read_csv4(path, ["t", "roll", "pitch", "yaw"])?;
    for (i, v) in rpy_deg.iter().enumerate() {
        if v.iter().any(|a| !(-180.0..=180.0).contains(a)) {
            return Err(Error::SchemaMismatch {
                path: path.to_path_buf(),
                detail: format!("angles outside [-180, 180] at row {}", i + 2),
            });
        }
    }
    Ok(GroundTruthLog { t, rpy_deg })
}

fn median_dt(t: &[f64]) -> f64 {
    let mut dts: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).collect();
    dts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    dts[dts.len() / 2]
}

fn check_clock(stream: &str, t: &[f64], declared_rate: Option<f64>) -> Result<f64> {
    let dt = median_dt(t);
    for w in t.windows(2) {
        let gap = (w[1] - w[0]) / dt;
        if gap > MAX_GAP_PERIODS {
            return Err(Error::ClockGapExceeded {
                stream: stream.to_string(),
                gap_periods: gap,
                limit: MAX_GAP_PERIODS,
            });
        }
    }
    if let Some(declared) = declared_rate {
        let rate = 1.0 / dt;
        if (rate - declared).abs() / declared > 0.01 {
            return Err(Error::SchemaMismatch {
                path: PathBuf::from(stream),
                detail: format!(
                    "sample rate {rate:.3} Hz deviates from declared {declared} Hz by more than 1%"
                ),
            });
        }
    }
    Ok(dt)
}

/// Linear interpolation of a vector series at `t_query`; `t` must be
/// strictly increasing and bracket the query.
fn interp(t: &[f64], v: &[Vector3<f64>], t_query: f64) -> Vector3<f64> {
    match t.binary_search_by(|x| x.partial_cmp(&t_query).unwrap()) {
        Ok(i) => v[i],
        Err(i) => {
            let (i0, i1) = (i - 1, i);
            let alpha = (t_query - t[i0]) / (t[i1] - t[i0]);
            v[i0] + (v[i1] - v[i0]) * alpha
        }
    }
}

/// Load a recorded session: read every log, rotate to the body frame,
/// resample all streams to the slowest stream's clock, and validate pairing.
pub fn load_array_session(manifest_path: &Path) -> Result<ArraySession> {
    let manifest: SessionManifest =
        toml::from_str(&read_to_string(manifest_path)?).map_err(|e| Error::SchemaMismatch {
            path: manifest_path.to_path_buf(),
            detail: e.to_string(),
        })?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    load_session_with_manifest(&manifest, base)
}

pub fn load_session_with_manifest(
    manifest: &SessionManifest,
    base: &Path,
) -> Result<ArraySession> {
    if manifest.imus.is_empty() {
        return Err(Error::Config("manifest lists no IMUs".into()));
    }
    let mode = manifest.symmetry_mode()?;

    let mut placements = Vec::with_capacity(manifest.imus.len());
    let mut logs = Vec::with_capacity(manifest.imus.len());
    for imu in &manifest.imus {
        let r_s_to_b = match imu.r_s_to_b {
            Some(m) => Dcm::from_matrix(Matrix3::new(
                m[0], m[1], m[2], m[3], m[4], m[5], m[6], m[7], m[8],
            ))?,
            None => Dcm::identity(),
        };
        placements.push(ImuPlacement {
            id: imu.id,
            rho: Vector3::new(imu.rho[0], imu.rho[1], imu.rho[2]),
            r_s_to_b,
            sigma_f: imu.sigma_f,
        });
        let path = base.join(&imu.path);
        let mut log = read_imu_csv(&path, imu.id)?;
        check_clock(&imu.path, &log.t, imu.rate_hz)?;
        // Rotate into the body frame while still on the native clock.
        for f in &mut log.f {
            *f = r_s_to_b.to_nav(f);
        }
        logs.push(log);
    }

    let geometry = ArrayGeometry::new(placements)?;
    let pairing = validate_and_pair(&geometry, mode, manifest.array.eps_sym)?;

    // Reference clock: the slowest stream, clipped to the common overlap.
    let ref_idx = (0..logs.len())
        .max_by(|&a, &b| {
            median_dt(&logs[a].t)
                .partial_cmp(&median_dt(&logs[b].t))
                .unwrap()
        })
        .expect("non-empty");
    let t_start = logs.iter().map(|l| l.t[0]).fold(f64::NEG_INFINITY, f64::max);
    let t_end = logs
        .iter()
        .map(|l| *l.t.last().unwrap())
        .fold(f64::INFINITY, f64::min);
    if t_end <= t_start {
        return Err(Error::NoOverlap);
    }
    let ref_times: Vec<f64> = logs[ref_idx]
        .t
        .iter()
        .copied()
        .filter(|&t| (t_start..=t_end).contains(&t))
        .collect();
    if ref_times.is_empty() {
        return Err(Error::NoOverlap);
    }

    // Ids map onto geometry order (sorted by id).
    let order: Vec<usize> = geometry
        .placements()
        .iter()
        .map(|p| logs.iter().position(|l| l.imu_id == p.id).unwrap())
        .collect();

    let t0 = ref_times[0];
    let samples: Vec<ImuFrameSample> = ref_times
        .iter()
        .map(|&t| ImuFrameSample {
            t: t - t0,
            f_b: order
                .iter()
                .map(|&li| interp(&logs[li].t, &logs[li].f, t))
                .collect(),
        })
        .collect();

    let truth = match &manifest.truth {
        Some(section) => {
            let mut log = read_truth_csv(&base.join(&section.path))?;
            for t in &mut log.t {
                *t -= t0;
            }
            Some(log)
        }
        None => None,
    };

    let gyro = match &manifest.gyro {
        Some(section) => {
            let (t, w) = read_csv4(&base.join(&section.path), ["t", "wx", "wy", "wz"])?;
            Some(
                ref_times
                    .iter()
                    .map(|&tq| interp(&t, &w, tq.clamp(t[0], *t.last().unwrap())))
                    .collect(),
            )
        }
        None => None,
    };

    let rate_hz = 1.0 / median_dt(&ref_times);
    Ok(ArraySession {
        geometry,
        pairing,
        samples,
        rate_hz,
        truth,
        gyro,
    })
}

/// Wrap an angle difference to (−180, 180] degrees.
pub fn wrap_deg(x: f64) -> f64 {
    let mut r = x % 360.0;
    if r <= -180.0 {
        r += 360.0;
    } else if r > 180.0 {
        r -= 360.0;
    }
    r
}

/// Pair each truth epoch with the nearest estimate within half a truth
/// period; angle differences are wrapped.
pub fn align_truth(
    estimates: &[(f64, Vector3<f64>)],
    truth: &GroundTruthLog,
) -> Result<Vec<AlignedPair>> {
    if estimates.is_empty() || truth.t.len() < 2 {
        return Err(Error::NoOverlap);
    }
    let half_period = median_dt(&truth.t) * 0.5;
    let times: Vec<f64> = estimates.iter().map(|e| e.0).collect();
    let mut out = Vec::new();
    for (i, &tu) in truth.t.iter().enumerate() {
        let idx = match times.binary_search_by(|x| x.partial_cmp(&tu).unwrap()) {
            Ok(j) => j,
            Err(j) => {
                if j == 0 {
                    0
                } else if j >= times.len() {
                    times.len() - 1
                } else if (times[j] - tu).abs() < (tu - times[j - 1]).abs() {
                    j
                } else {
                    j - 1
                }
            }
        };
        if (times[idx] - tu).abs() > half_period {
            continue;
        }
        let est = estimates[idx].1;
        let tr = truth.rpy_deg[i];
        out.push(AlignedPair {
            t: tu,
            est_rpy_deg: est,
            truth_rpy_deg: tr,
            error_deg: Vector3::new(
                wrap_deg(est.x - tr.x),
                wrap_deg(est.y - tr.y),
                wrap_deg(est.z - tr.z),
            ),
        });
    }
    if out.is_empty() {
        return Err(Error::NoOverlap);
    }
    Ok(out)
}

fn create_file(path: &Path) -> Result<fs::File> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|source| Error::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    fs::File::create(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_csv4(
    path: &Path,
    header: [&str; 4],
    rows: impl Iterator<Item = (f64, Vector3<f64>)>,
) -> Result<()> {
    let mut file = create_file(path)?;
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    writeln!(file, "{}", header.join(",")).map_err(io_err)?;
    for (t, v) in rows {
        // Shortest round-trip float formatting keeps the export lossless.
        writeln!(file, "{},{},{},{}", t, v.x, v.y, v.z).map_err(io_err)?;
    }
    Ok(())
}

/// Export a synthetic session in the exact layout [`load_array_session`]
/// reads: one CSV per IMU, a truth CSV, and a `manifest.toml`.
pub fn export_session(
    dir: &Path,
    epochs: &[TrajectoryEpoch],
    samples: &[ImuFrameSample],
    geometry: &ArrayGeometry,
    mode: SymmetryMode,
) -> Result<PathBuf> {
    let mut imus = Vec::new();
    for (k, p) in geometry.placements().iter().enumerate() {
        let name = format!("imu_{:02}.csv", p.id);
        write_csv4(
            &dir.join(&name),
            ["t", "fx", "fy", "fz"],
            samples.iter().map(|s| (s.t, s.f_b[k])),
        )?;
        let m = p.r_s_to_b.matrix();
        imus.push(ImuSection {
            id: p.id,
            path: name,
            rho: [p.rho.x, p.rho.y, p.rho.z],
            r_s_to_b: Some([
                m[(0, 0)],
                m[(0, 1)],
                m[(0, 2)],
                m[(1, 0)],
                m[(1, 1)],
                m[(1, 2)],
                m[(2, 0)],
                m[(2, 1)],
                m[(2, 2)],
            ]),
            sigma_f: p.sigma_f,
            rate_hz: None,
        });
    }
    write_csv4(
        &dir.join("truth.csv"),
        ["t", "roll", "pitch", "yaw"],
        epochs.iter().map(|e| (e.t, e.dcm_true.euler_deg())),
    )?;
    let (mode_name, axis) = match mode {
        SymmetryMode::Full3D => ("full3d", None),
        SymmetryMode::Planar2D(Axis::X) => ("planar2d", Some("x".to_string())),
        SymmetryMode::Planar2D(Axis::Y) => ("planar2d", Some("y".to_string())),
        SymmetryMode::Planar2D(Axis::Z) => ("planar2d", Some("z".to_string())),
    };
    let manifest = SessionManifest {
        array: ArraySection {
            mode: mode_name.to_string(),
            axis,
            eps_sym: DEFAULT_SYMMETRY_EPS,
        },
        imus,
        truth: Some(FileSection {
            path: "truth.csv".into(),
        }),
        gyro: None,
    };
    let manifest_path = dir.join("manifest.toml");
    let text = toml::to_string_pretty(&manifest)
        .map_err(|e| Error::Config(format!("manifest serialization: {e}")))?;
    let mut file = create_file(&manifest_path)?;
    file.write_all(text.as_bytes()).map_err(|source| Error::Io {
        path: manifest_path.clone(),
        source,
    })?;
    Ok(manifest_path)
}

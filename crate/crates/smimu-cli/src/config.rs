//! Run configuration: one TOML file, CLI overrides on top.

use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::Deserialize;

use smimu::earth::EarthModel;
use smimu::error::{Error, Result};
use smimu::geometry::{
    cube_array, octahedron_array, planar_square_array, validate_and_pair, ArrayGeometry, Axis,
    ImuPlacement, SymmetryMode, SymmetryPairing, DEFAULT_SYMMETRY_EPS,
};
use smimu::pipeline::{FilterTuning, Mode};
use smimu::sim::{MotionProfile, Segment};
use smimu::so3::Dcm;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_mode")]
    pub mode: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub array: ArrayConfig,
    #[serde(default)]
    pub filter: FilterConfig,
    #[serde(default)]
    pub initial: Option<InitialConfig>,
    pub input: InputConfig,
}

fn default_mode() -> String {
    "smimu".into()
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayConfig {
    #[serde(default = "default_preset")]
    pub preset: String,
    #[serde(default = "default_radius")]
    pub radius: f64,
    #[serde(default = "default_sigma_f")]
    pub sigma_f: f64,
    /// Out-of-plane offset of the planar preset, m.
    #[serde(default)]
    pub z_offset: f64,
    #[serde(default = "default_eps_sym")]
    pub eps_sym: f64,
}

fn default_preset() -> String {
    "cube8".into()
}
fn default_radius() -> f64 {
    0.5
}
fn default_sigma_f() -> f64 {
    0.012
}
fn default_eps_sym() -> f64 {
    DEFAULT_SYMMETRY_EPS
}

impl Default for ArrayConfig {
    fn default() -> Self {
        Self {
            preset: default_preset(),
            radius: default_radius(),
            sigma_f: default_sigma_f(),
            z_offset: 0.0,
            eps_sym: default_eps_sym(),
        }
    }
}

impl ArrayConfig {
    pub fn build(&self) -> Result<(ArrayGeometry, SymmetryPairing)> {
        let (placements, mode): (Vec<ImuPlacement>, SymmetryMode) = match self.preset.as_str() {
            "cube8" => (cube_array(self.radius, self.sigma_f), SymmetryMode::Full3D),
            "octahedron6" => (
                octahedron_array(self.radius, self.sigma_f),
                SymmetryMode::Full3D,
            ),
            "planar4" => (
                planar_square_array(self.radius, self.z_offset, self.sigma_f),
                SymmetryMode::Planar2D(Axis::Z),
            ),
            other => {
                return Err(Error::Config(format!(
                    "unknown array preset `{other}` (expected cube8, octahedron6 or planar4)"
                )))
            }
        };
        let geometry = ArrayGeometry::new(placements)?;
        let pairing = validate_and_pair(&geometry, mode, self.eps_sym)?;
        Ok((geometry, pairing))
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterConfig {
    #[serde(default = "default_alpha_c")]
    pub alpha_c: f64,
    #[serde(default = "default_g_e")]
    pub g_e: f64,
    #[serde(default = "default_accel_threshold")]
    pub accel_threshold: f64,
    #[serde(default = "default_initial_p")]
    pub initial_p: f64,
    #[serde(default = "default_sigma_g")]
    pub sigma_g: f64,
    #[serde(default = "default_latitude")]
    pub latitude_deg: f64,
    /// Yaw-rate magnitude above which a truth epoch counts as rotating when
    /// scoring detection, rad/s.
    #[serde(default = "default_rotation_threshold")]
    pub rotation_threshold: f64,
}

fn default_alpha_c() -> f64 {
    smimu::gate::DEFAULT_ALPHA_C
}
fn default_g_e() -> f64 {
    smimu::earth::STANDARD_GRAVITY
}
fn default_accel_threshold() -> f64 {
    0.1
}
fn default_initial_p() -> f64 {
    smimu::ekf::DEFAULT_INITIAL_P
}
fn default_sigma_g() -> f64 {
    1.2e-3
}
fn default_latitude() -> f64 {
    smimu::earth::DEFAULT_LATITUDE_DEG
}
fn default_rotation_threshold() -> f64 {
    0.02
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            alpha_c: default_alpha_c(),
            g_e: default_g_e(),
            accel_threshold: default_accel_threshold(),
            initial_p: default_initial_p(),
            sigma_g: default_sigma_g(),
            latitude_deg: default_latitude(),
            rotation_threshold: default_rotation_threshold(),
        }
    }
}

impl FilterConfig {
    pub fn tuning(&self) -> FilterTuning {
        FilterTuning {
            alpha_c: self.alpha_c,
            g_e: self.g_e,
            accel_threshold: self.accel_threshold,
            initial_p: self.initial_p,
            sigma_g: self.sigma_g,
            ..FilterTuning::default()
        }
    }

    pub fn earth(&self) -> EarthModel {
        EarthModel::from_latitude_deg(self.latitude_deg)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    #[serde(default)]
    pub rpy_deg: [f64; 3],
    #[serde(default)]
    pub omega: [f64; 3],
}

impl InitialConfig {
    pub fn dcm(&self) -> Dcm {
        Dcm::from_euler_deg(self.rpy_deg[0], self.rpy_deg[1], self.rpy_deg[2])
    }

    pub fn omega(&self) -> Vector3<f64> {
        Vector3::new(self.omega[0], self.omega[1], self.omega[2])
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputConfig {
    #[serde(default)]
    pub simulate: Option<SimulateConfig>,
    /// Path to a recorded session manifest.
    #[serde(default)]
    pub dataset: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub profile: String,
    #[serde(default = "default_duration")]
    pub duration_s: f64,
    #[serde(default = "default_rate")]
    pub rate_hz: f64,
    #[serde(default = "default_noise")]
    pub noise: bool,
    /// Constant-rate profile, rad/s.
    #[serde(default)]
    pub omega: Option<[f64; 3]>,
    /// Sinusoid profile.
    #[serde(default)]
    pub axis: Option<String>,
    #[serde(default)]
    pub amplitude: Option<f64>,
    #[serde(default)]
    pub freq_hz: Option<f64>,
    /// Piecewise profile: path to a segment script (TOML), relative to the
    /// config file.
    #[serde(default)]
    pub script: Option<PathBuf>,
}

fn default_duration() -> f64 {
    60.0
}
fn default_rate() -> f64 {
    100.0
}
fn default_noise() -> bool {
    true
}

#[derive(Debug, Clone, Deserialize)]
struct ScriptFile {
    #[serde(rename = "segment")]
    segments: Vec<ScriptSegment>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScriptSegment {
    duration: f64,
    #[serde(default)]
    omega: [f64; 3],
    #[serde(default)]
    accel: [f64; 3],
    #[serde(default)]
    ramp_in: f64,
}

impl SimulateConfig {
    pub fn profile(&self, base: &Path) -> Result<MotionProfile> {
        match self.profile.as_str() {
            "static" => Ok(MotionProfile::Static),
            "constant_rate" => {
                let w = self.omega.ok_or_else(|| {
                    Error::Config("constant_rate profile needs `omega = [x, y, z]`".into())
                })?;
                Ok(MotionProfile::ConstantRate(Vector3::new(w[0], w[1], w[2])))
            }
            "sinusoid" => {
                let axis = match self.axis.as_deref() {
                    Some("x") => Axis::X,
                    Some("y") => Axis::Y,
                    Some("z") => Axis::Z,
                    Some(other) => {
                        return Err(Error::Config(format!("unknown sinusoid axis `{other}`")))
                    }
                    None => return Err(Error::Config("sinusoid profile needs `axis`".into())),
                };
                let amplitude = self
                    .amplitude
                    .ok_or_else(|| Error::Config("sinusoid profile needs `amplitude`".into()))?;
                let freq_hz = self
                    .freq_hz
                    .ok_or_else(|| Error::Config("sinusoid profile needs `freq_hz`".into()))?;
                Ok(MotionProfile::Sinusoid {
                    axis,
                    amplitude,
                    freq_hz,
                })
            }
            "piecewise" => {
                let script = self.script.as_ref().ok_or_else(|| {
                    Error::Config("piecewise profile needs `script = \"file.toml\"`".into())
                })?;
                let path = base.join(script);
                if !path.exists() {
                    return Err(Error::MissingFile(path));
                }
                let text = std::fs::read_to_string(&path).map_err(|source| Error::Io {
                    path: path.clone(),
                    source,
                })?;
                let file: ScriptFile =
                    toml::from_str(&text).map_err(|e| Error::SchemaMismatch {
                        path: path.clone(),
                        detail: e.to_string(),
                    })?;
                let segments = file
                    .segments
                    .into_iter()
                    .map(|s| {
                        Segment::new(s.duration, Vector3::new(s.omega[0], s.omega[1], s.omega[2]))
                            .with_accel(Vector3::new(s.accel[0], s.accel[1], s.accel[2]))
                            .with_ramp(s.ramp_in)
                    })
                    .collect();
                Ok(MotionProfile::Piecewise(segments))
            }
            other => Err(Error::InvalidProfile(format!(
                "unknown profile `{other}` (expected static, constant_rate, sinusoid or piecewise)"
            ))),
        }
    }
}

/// Load a config file and apply CLI overrides. The output directory can
/// also be overridden by `SMIMU_OUTPUT_DIR`.
pub fn load_config(
    path: &Path,
    mode_override: Option<&str>,
    seed_override: Option<u64>,
    out_override: Option<&Path>,
) -> Result<RunConfig> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut cfg: RunConfig = toml::from_str(&text).map_err(|e| Error::SchemaMismatch {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })?;
    if let Some(mode) = mode_override {
        cfg.mode = mode.to_string();
    }
    if let Some(seed) = seed_override {
        cfg.seed = seed;
    }
    if let Some(out) = out_override {
        cfg.output_dir = out.to_path_buf();
    }
    if let Ok(dir) = std::env::var("SMIMU_OUTPUT_DIR") {
        cfg.output_dir = PathBuf::from(dir);
    }
    if cfg.input.simulate.is_some() == cfg.input.dataset.is_some() {
        return Err(Error::Config(
            "exactly one of [input.simulate] and input.dataset must be set".into(),
        ));
    }
    cfg.mode.parse::<Mode>()?;
    Ok(cfg)
}

//! Subcommand implementations.

use std::path::{Path, PathBuf};

use nalgebra::Vector3;

use smimu::dataset::{
    align_truth, export_session, load_array_session, GroundTruthLog,
};
use smimu::error::{Error, Result};
use smimu::eval::{derive_yaw_rate, detection_accuracy, rmse, RmseReport};
use smimu::geometry::{ArrayGeometry, SymmetryPairing};
use smimu::pipeline::{run_pipeline, AttitudeSolution, InitialState, Mode, RunInput};
use smimu::report;
use smimu::sim::{generate_session, make_trajectory, synth_gyro, TrajectoryConfig};
use smimu::so3::Dcm;

use crate::config::{RunConfig, SimulateConfig};

/// Everything one estimation run consumes.
struct PreparedInput {
    geometry: ArrayGeometry,
    pairing: SymmetryPairing,
    samples: Vec<smimu::sim::ImuFrameSample>,
    gyro: Option<Vec<Vector3<f64>>>,
    truth: Option<GroundTruthLog>,
    truth_omega: Option<Vec<Vector3<f64>>>,
    initial: InitialState,
    dt: f64,
}

fn prepare(cfg: &RunConfig, config_dir: &Path, need_gyro: bool) -> Result<PreparedInput> {
    let tuning = cfg.filter.tuning();
    if let Some(sim_cfg) = &cfg.input.simulate {
        let (geometry, pairing) = cfg.array.build()?;
        let profile = sim_cfg.profile(config_dir)?;
        let mut traj_cfg = TrajectoryConfig::new(profile, sim_cfg.duration_s, sim_cfg.rate_hz);
        traj_cfg.earth = cfg.filter.earth();
        if let Some(initial) = &cfg.initial {
            traj_cfg.initial_attitude = initial.dcm();
        }
        let epochs = make_trajectory(&traj_cfg)?;
        let samples = generate_session(&epochs, &geometry, sim_cfg.noise, cfg.seed);
        let gyro = need_gyro.then(|| {
            synth_gyro(
                &epochs,
                if sim_cfg.noise { tuning.sigma_g } else { 0.0 },
                cfg.seed.wrapping_add(1),
            )
        });
        let truth = GroundTruthLog {
            t: epochs.iter().map(|e| e.t).collect(),
            rpy_deg: epochs.iter().map(|e| e.dcm_true.euler_deg()).collect(),
        };
        let truth_omega = epochs.iter().map(|e| e.omega_true).collect();
        // Initial conditions are assumed known: default to the truth.
        let initial = match &cfg.initial {
            Some(init) => InitialState {
                dcm: init.dcm(),
                omega: init.omega(),
            },
            None => InitialState {
                dcm: epochs[0].dcm_true,
                omega: epochs[0].omega_true,
            },
        };
        Ok(PreparedInput {
            geometry,
            pairing,
            samples,
            gyro,
            truth: Some(truth),
            truth_omega: Some(truth_omega),
            initial,
            dt: 1.0 / sim_cfg.rate_hz,
        })
    } else {
        let manifest = cfg.input.dataset.as_ref().expect("validated");
        let session = load_array_session(&config_dir.join(manifest))?;
        if need_gyro && session.gyro.is_none() {
            return Err(Error::Config(
                "single_imu mode on a dataset requires a [gyro] log in the manifest".into(),
            ));
        }
        let initial = match &cfg.initial {
            Some(init) => InitialState {
                dcm: init.dcm(),
                omega: init.omega(),
            },
            None => match &session.truth {
                Some(truth) => InitialState {
                    dcm: Dcm::from_euler_deg(
                        truth.rpy_deg[0].x,
                        truth.rpy_deg[0].y,
                        truth.rpy_deg[0].z,
                    ),
                    omega: Vector3::zeros(),
                },
                None => InitialState::default(),
            },
        };
        Ok(PreparedInput {
            dt: 1.0 / session.rate_hz,
            geometry: session.geometry,
            pairing: session.pairing,
            samples: session.samples,
            gyro: session.gyro,
            truth: session.truth,
            truth_omega: None,
            initial,
        })
    }
}

fn run_mode(input: &PreparedInput, mode: Mode, cfg: &RunConfig) -> Result<Vec<AttitudeSolution>> {
    run_pipeline(
        mode,
        &input.geometry,
        Some(&input.pairing),
        &RunInput {
            samples: &input.samples,
            gyro: input.gyro.as_deref(),
            dt: input.dt,
        },
        &input.initial,
        cfg.filter.tuning(),
        cfg.filter.earth(),
    )
}

fn euler_series(solutions: &[AttitudeSolution]) -> Vec<(f64, Vector3<f64>)> {
    solutions.iter().map(|s| (s.t, s.euler_deg())).collect()
}

fn score_and_write(
    dir: &Path,
    trajectory: &str,
    mode: Mode,
    solutions: &[AttitudeSolution],
    input: &PreparedInput,
    rotation_threshold: f64,
) -> Result<()> {
    report::write_solutions_csv(&dir.join("solutions.csv"), solutions)?;
    let Some(truth) = &input.truth else {
        return Ok(());
    };

    let aligned = align_truth(&euler_series(solutions), truth)?;
    let score = rmse(&aligned)?;
    let mut rmse_report = RmseReport::default();
    rmse_report.push(trajectory, mode.as_str(), &score);
    report::write_rmse_report(dir, &rmse_report)?;
    report::plot_error_time(&dir.join("error_time.svg"), &aligned)?;

    let tilt: Vec<(f64, f64)> = aligned
        .iter()
        .map(|p| {
            let e = p.error_deg;
            (p.t, (0.5 * (e.x * e.x + e.y * e.y)).sqrt())
        })
        .collect();
    report::plot_covariance_envelope(&dir.join("covariance.svg"), solutions, &tilt)?;

    if mode == Mode::Smimu {
        let flags: Vec<bool> = solutions.iter().map(|s| s.rotation_detected).collect();
        let (det, yaw_rate_series) = match &input.truth_omega {
            Some(omega) => {
                let series: Vec<(f64, f64)> = solutions
                    .iter()
                    .zip(omega)
                    .map(|(s, w)| (s.t, w.z))
                    .collect();
                (detection_accuracy(&flags, omega, rotation_threshold)?, series)
            }
            None => {
                // Recorded sessions carry attitude truth only: derive the
                // yaw rate and align it to the solution epochs.
                let derived = derive_yaw_rate(truth);
                let omega: Vec<Vector3<f64>> = solutions
                    .iter()
                    .map(|s| {
                        let wz = nearest_value(&derived, s.t);
                        Vector3::new(0.0, 0.0, wz)
                    })
                    .collect();
                (detection_accuracy(&flags, &omega, rotation_threshold)?, derived)
            }
        };
        report::write_detection_report(dir, &det)?;
        report::plot_detection_regions(&dir.join("detection.svg"), solutions, &yaw_rate_series)?;
    }
    Ok(())
}

fn nearest_value(series: &[(f64, f64)], t: f64) -> f64 {
    match series.binary_search_by(|(x, _)| x.partial_cmp(&t).unwrap()) {
        Ok(i) => series[i].1,
        Err(0) => series[0].1,
        Err(i) if i >= series.len() => series[series.len() - 1].1,
        Err(i) => {
            if (series[i].0 - t).abs() < (t - series[i - 1].0).abs() {
                series[i].1
            } else {
                series[i - 1].1
            }
        }
    }
}

/// `run`: one mode over one input source, artifacts into the output dir.
pub fn run(cfg: &RunConfig, config_dir: &Path) -> Result<()> {
    let mode: Mode = cfg.mode.parse()?;
    validate_mode(cfg, mode)?;
    let input = prepare(cfg, config_dir, mode == Mode::SingleImu)?;
    let solutions = run_mode(&input, mode, cfg)?;
    let trajectory = trajectory_name(cfg);
    score_and_write(
        &cfg.output_dir,
        &trajectory,
        mode,
        &solutions,
        &input,
        cfg.filter.rotation_threshold,
    )?;
    println!(
        "run: mode {} over {} epochs -> {}",
        mode,
        solutions.len(),
        cfg.output_dir.display()
    );
    Ok(())
}

fn validate_mode(cfg: &RunConfig, mode: Mode) -> Result<()> {
    // Surface mode requirements before any heavy work.
    if cfg.input.simulate.is_some() {
        let (geometry, pairing) = cfg.array.build()?;
        match mode {
            Mode::GfBaseline if geometry.len() < 6 => {
                return Err(Error::TooFewImus(geometry.len()));
            }
            Mode::Smimu if pairing.pairs.is_empty() => {
                return Err(Error::Config("smimu mode requires a valid pairing".into()));
            }
            _ => {}
        }
    }
    Ok(())
}

fn trajectory_name(cfg: &RunConfig) -> String {
    match (&cfg.input.simulate, &cfg.input.dataset) {
        (Some(sim), _) => sim.profile.clone(),
        (_, Some(path)) => path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "dataset".into()),
        _ => "input".into(),
    }
}

/// `compare`: several modes over the identical input, one joint report with
/// delta columns against the first listed mode.
pub fn compare(cfg: &RunConfig, config_dir: &Path, modes: &[String]) -> Result<()> {
    if modes.len() < 2 {
        return Err(Error::Config("compare needs at least two modes".into()));
    }
    let parsed: Vec<Mode> = modes
        .iter()
        .map(|m| m.parse::<Mode>())
        .collect::<Result<_>>()?;
    let need_gyro = parsed.contains(&Mode::SingleImu);
    let input = prepare(cfg, config_dir, need_gyro)?;
    let trajectory = trajectory_name(cfg);

    // Fan out; results are collected by listed order so the report layout
    // is independent of scheduling.
    let mut results: Vec<Option<Result<Vec<AttitudeSolution>>>> =
        (0..parsed.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for &mode in &parsed {
            let input_ref = &input;
            handles.push(scope.spawn(move || run_mode(input_ref, mode, cfg)));
        }
        for (slot, handle) in results.iter_mut().zip(handles) {
            *slot = Some(handle.join().expect("pipeline thread panicked"));
        }
    });

    let mut report_out = RmseReport::default();
    for (mode, result) in parsed.iter().zip(results) {
        let solutions = result.expect("filled")?;
        let mode_dir = cfg.output_dir.join(mode.as_str());
        score_and_write(
            &mode_dir,
            &trajectory,
            *mode,
            &solutions,
            &input,
            cfg.filter.rotation_threshold,
        )?;
        if let Some(truth) = &input.truth {
            let aligned = align_truth(&euler_series(&solutions), truth)?;
            report_out.push(&trajectory, mode.as_str(), &rmse(&aligned)?);
        }
    }
    report_out.fill_deltas(parsed[0].as_str());
    report::write_rmse_report(&cfg.output_dir, &report_out)?;

    println!("compare: {} over `{trajectory}`", cfg.mode);
    for row in &report_out.rows {
        let delta = match (row.delta_abs_deg, row.delta_rel_pct) {
            (Some(a), Some(r)) => format!("  delta {}", smimu::eval::format_delta(a, r)),
            _ => String::new(),
        };
        println!(
            "  {:<12} roll {:.3}  pitch {:.3}  yaw {:.3}  attitude {:.3} deg{delta}",
            row.mode, row.roll_deg, row.pitch_deg, row.yaw_deg, row.attitude_deg
        );
    }
    Ok(())
}

/// `simulate`: write a synthetic session to disk in the ingestion layout.
pub fn simulate(cfg: &RunConfig, config_dir: &Path, out: &Path) -> Result<()> {
    let sim_cfg: &SimulateConfig = cfg.input.simulate.as_ref().ok_or_else(|| {
        Error::Config("simulate requires an [input.simulate] section".into())
    })?;
    let (geometry, pairing) = cfg.array.build()?;
    let profile = sim_cfg.profile(config_dir)?;
    let mut traj_cfg = TrajectoryConfig::new(profile, sim_cfg.duration_s, sim_cfg.rate_hz);
    traj_cfg.earth = cfg.filter.earth();
    if let Some(initial) = &cfg.initial {
        traj_cfg.initial_attitude = initial.dcm();
    }
    let epochs = make_trajectory(&traj_cfg)?;
    let samples = generate_session(&epochs, &geometry, sim_cfg.noise, cfg.seed);
    let manifest = export_session(out, &epochs, &samples, &geometry, pairing.mode)?;
    println!(
        "simulate: {} epochs ({} IMUs) -> {}",
        epochs.len(),
        geometry.len(),
        manifest.display()
    );
    Ok(())
}

/// `eval`: score an existing solutions CSV against a truth CSV.
pub fn eval(solutions_path: &Path, truth_path: &Path, out: &Path) -> Result<()> {
    let rows = report::read_solutions_csv(solutions_path)?;
    let truth = smimu::dataset::read_truth_csv(truth_path)?;
    let series: Vec<(f64, Vector3<f64>)> = rows.iter().map(|r| (r.t, r.rpy_deg)).collect();
    let aligned = align_truth(&series, &truth)?;
    let score = rmse(&aligned)?;
    let mut rmse_report = RmseReport::default();
    let name = solutions_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "solutions".into());
    rmse_report.push(&name, "eval", &score);
    report::write_rmse_report(out, &rmse_report)?;
    println!(
        "eval: roll {:.3}  pitch {:.3}  yaw {:.3}  attitude {:.3} deg over {} pairs -> {}",
        score.roll_deg,
        score.pitch_deg,
        score.yaw_deg,
        score.attitude_deg,
        aligned.len(),
        out.display()
    );
    Ok(())
}

/// `plot`: re-render the SVG plots from a finished run directory.
pub fn plot(run_dir: &Path, truth_path: Option<&Path>) -> Result<()> {
    let rows = report::read_solutions_csv(&run_dir.join("solutions.csv"))?;
    let truth = match truth_path {
        Some(path) => Some(smimu::dataset::read_truth_csv(path)?),
        None => {
            let default = run_dir.join("session").join("truth.csv");
            if default.exists() {
                Some(smimu::dataset::read_truth_csv(&default)?)
            } else {
                None
            }
        }
    };
    let Some(truth) = truth else {
        return Err(Error::Config(
            "plot needs a truth CSV (pass --truth or keep session/truth.csv in the run dir)"
                .into(),
        ));
    };
    let series: Vec<(f64, Vector3<f64>)> = rows.iter().map(|r| (r.t, r.rpy_deg)).collect();
    let aligned = align_truth(&series, &truth)?;
    report::plot_error_time(&run_dir.join("error_time.svg"), &aligned)?;

    // Rebuild lightweight solutions for the envelope/detection plots.
    let solutions: Vec<AttitudeSolution> = rows
        .iter()
        .map(|r| AttitudeSolution {
            t: r.t,
            dcm: Dcm::from_euler_deg(r.rpy_deg.x, r.rpy_deg.y, r.rpy_deg.z),
            p: nalgebra::Matrix3::from_diagonal(&Vector3::new(
                r.sigma_deg.x.to_radians().powi(2),
                r.sigma_deg.y.to_radians().powi(2),
                r.sigma_deg.z.to_radians().powi(2),
            )),
            omega: Vector3::zeros(),
            omega_dot: Vector3::zeros(),
            gate_axes: [r.rotation_detected; 3],
            rotation_detected: r.rotation_detected,
            update_applied: r.update_applied,
            solver_converged: true,
        })
        .collect();
    let tilt: Vec<(f64, f64)> = aligned
        .iter()
        .map(|p| {
            let e = p.error_deg;
            (p.t, (0.5 * (e.x * e.x + e.y * e.y)).sqrt())
        })
        .collect();
    report::plot_covariance_envelope(&run_dir.join("covariance.svg"), &solutions, &tilt)?;
    let yaw_rate = derive_yaw_rate(&truth);
    report::plot_detection_regions(&run_dir.join("detection.svg"), &solutions, &yaw_rate)?;
    println!("plot: 3 figures -> {}", run_dir.display());
    Ok(())
}

/// Resolve a run configuration for a pure-CLI invocation (no config file):
/// used by integration tests and quick starts.
pub fn config_dir_of(path: &Path) -> PathBuf {
    path.parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."))
}

//! End-to-end drive of the binary: simulate a session, run every mode over
//! it as a recorded dataset, compare, score, plot, and check exit codes.

use std::fs;
use std::path::Path;
use std::process::Command;

fn smimu() -> Command {
    Command::new(env!("CARGO_BIN_EXE_smimu"))
}

fn write_run_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let path = dir.join("run.toml");
    fs::write(&path, body).unwrap();
    path
}

const SIM_CONFIG: &str = r#"
mode = "smimu"
seed = 11

[array]
preset = "cube8"
radius = 0.5
sigma_f = 0.012

[input.simulate]
profile = "piecewise"
script = "script.toml"
duration_s = 20.0
rate_hz = 100.0
noise = true
"#;

const SCRIPT: &str = r#"
[[segment]]
duration = 8.0
omega = [0.0, 0.0, 0.0]

[[segment]]
duration = 12.0
omega = [0.0, 0.0, 0.5]
accel = [2.0, 0.0, 0.0]
ramp_in = 1.0
"#;

#[test]
fn full_cli_workflow() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_run_config(dir.path(), SIM_CONFIG);
    fs::write(dir.path().join("script.toml"), SCRIPT).unwrap();

    // simulate: export a session.
    let session_dir = dir.path().join("session");
    let status = smimu()
        .args(["simulate", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&session_dir)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(session_dir.join("manifest.toml").exists());
    assert!(session_dir.join("imu_00.csv").exists());
    assert!(session_dir.join("truth.csv").exists());

    // run: consume the exported session as a recorded dataset.
    let dataset_config = format!(
        r#"
mode = "smimu"
seed = 11
output_dir = "{out}"

[input]
dataset = "session/manifest.toml"
"#,
        out = dir.path().join("run_out").display()
    );
    let config2 = dir.path().join("run_dataset.toml");
    fs::write(&config2, dataset_config).unwrap();
    let status = smimu()
        .args(["run", "--config"])
        .arg(&config2)
        .status()
        .unwrap();
    assert!(status.success());
    let run_out = dir.path().join("run_out");
    for artifact in [
        "solutions.csv",
        "rmse_report.csv",
        "rmse_report.json",
        "detection_report.csv",
        "error_time.svg",
        "covariance.svg",
        "detection.svg",
    ] {
        assert!(run_out.join(artifact).exists(), "missing {artifact}");
    }

    // compare: all three modes over the identical simulated input.
    let compare_out = dir.path().join("compare_out");
    let status = smimu()
        .args(["compare", "--config"])
        .arg(&config)
        .args(["--modes", "single_imu,gf_baseline,smimu", "--out"])
        .arg(&compare_out)
        .status()
        .unwrap();
    assert!(status.success());
    let report = fs::read_to_string(compare_out.join("rmse_report.csv")).unwrap();
    assert_eq!(report.lines().count(), 4, "3 mode rows expected:\n{report}");
    for mode in ["single_imu", "gf_baseline", "smimu"] {
        assert!(report.contains(mode));
        assert!(compare_out.join(mode).join("solutions.csv").exists());
    }
    // Delta columns present for the non-baseline rows.
    let smimu_row = report.lines().find(|l| l.contains("smimu,")).unwrap();
    assert!(!smimu_row.ends_with(",,"), "delta columns missing: {smimu_row}");

    // eval: score the run's solutions against the session truth.
    let eval_out = dir.path().join("eval_out");
    let status = smimu()
        .args(["eval", "--solutions"])
        .arg(run_out.join("solutions.csv"))
        .arg("--truth")
        .arg(session_dir.join("truth.csv"))
        .arg("--out")
        .arg(&eval_out)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(eval_out.join("rmse_report.csv").exists());

    // plot: re-render from artifacts.
    let status = smimu()
        .args(["plot", "--run-dir"])
        .arg(&run_out)
        .arg("--truth")
        .arg(session_dir.join("truth.csv"))
        .status()
        .unwrap();
    assert!(status.success());

    // Determinism across invocations: re-run into a second directory and
    // compare solution bytes.
    let rerun_out = dir.path().join("rerun_out");
    let status = smimu()
        .args(["run", "--config"])
        .arg(&config2)
        .arg("--out")
        .arg(&rerun_out)
        .status()
        .unwrap();
    assert!(status.success());
    assert_eq!(
        fs::read(run_out.join("solutions.csv")).unwrap(),
        fs::read(rerun_out.join("solutions.csv")).unwrap()
    );
}

#[test]
fn static_run_self_test() {
    // A noisy 60 s static run must land well under half a degree of
    // roll/pitch RMSE.
    let dir = tempfile::tempdir().unwrap();
    let config = write_run_config(
        dir.path(),
        r#"
mode = "smimu"
seed = 7

[input.simulate]
profile = "static"
duration_s = 60.0
rate_hz = 100.0
noise = true
"#,
    );
    let out = dir.path().join("out");
    let status = smimu()
        .args(["run", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let report = fs::read_to_string(out.join("rmse_report.json")).unwrap();
    let json: serde_json::Value = serde_json::from_str(&report).unwrap();
    let attitude = json["rows"][0]["attitude_deg"].as_f64().unwrap();
    assert!(
        attitude < 0.5,
        "static roll/pitch RMSE {attitude:.3}° exceeds 0.5°"
    );
}

#[test]
fn config_errors_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();

    // gf_baseline on a 4-IMU array: too few sensors.
    let bad = write_run_config(
        dir.path(),
        r#"
mode = "gf_baseline"

[array]
preset = "planar4"

[input.simulate]
profile = "static"
duration_s = 1.0
"#,
    );
    let output = smimu()
        .args(["run", "--config"])
        .arg(&bad)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("6"), "unexpected message: {stderr}");

    // Unknown mode.
    let output = smimu()
        .args(["run", "--config"])
        .arg(&bad)
        .args(["--mode", "bogus"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));

    // Missing config file.
    let output = smimu()
        .args(["run", "--config"])
        .arg(dir.path().join("absent.toml"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));

    // Invalid profile parameters.
    let invalid = write_run_config(
        dir.path(),
        r#"
[input.simulate]
profile = "sinusoid"
duration_s = 1.0
"#,
    );
    let output = smimu()
        .args(["run", "--config"])
        .arg(&invalid)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn output_dir_env_override() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_run_config(
        dir.path(),
        r#"
mode = "smimu"
seed = 3
output_dir = "ignored"

[input.simulate]
profile = "static"
duration_s = 2.0
noise = true
"#,
    );
    let env_out = dir.path().join("env_out");
    let status = smimu()
        .args(["run", "--config"])
        .arg(&config)
        .env("SMIMU_OUTPUT_DIR", &env_out)
        .current_dir(dir.path())
        .status()
        .unwrap();
    assert!(status.success());
    assert!(env_out.join("solutions.csv").exists());
    assert!(!dir.path().join("ignored").exists());
}

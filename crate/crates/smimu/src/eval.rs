//! Scoring: attitude RMSE against ground truth and rotation-detection
//! accuracy.

use nalgebra::Vector3;
use serde::Serialize;

use crate::dataset::AlignedPair;
use crate::error::{Error, Result};

/// Per-angle RMSE of one run, degrees.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct AngleRmse {
    pub roll_deg: f64,
    pub pitch_deg: f64,
    pub yaw_deg: f64,
    /// Mean of roll and pitch. Yaw is reported separately: it is not
    /// observable from gravity updates and would drown the aggregate.
    pub attitude_deg: f64,
}

/// RMSE over aligned estimate/truth pairs.
pub fn rmse(aligned: &[AlignedPair]) -> Result<AngleRmse> {
    if aligned.is_empty() {
        return Err(Error::EmptyPairing);
    }
    let n = aligned.len() as f64;
    let mut sq = Vector3::zeros();
    for p in aligned {
        sq += p.error_deg.component_mul(&p.error_deg);
    }
    let r = (sq / n).map(f64::sqrt);
    Ok(AngleRmse {
        roll_deg: r.x,
        pitch_deg: r.y,
        yaw_deg: r.z,
        attitude_deg: 0.5 * (r.x + r.y),
    })
}

/// Absolute and relative RMSE reduction of `proposed` against `baseline`.
/// Positive values mean the proposed run is better.
pub fn rmse_delta(baseline: f64, proposed: f64) -> (f64, f64) {
    let abs = baseline - proposed;
    (abs, abs / baseline * 100.0)
}

/// Table-style cell for a comparison row: absolute delta to one decimal,
/// relative delta truncated to whole percent.
pub fn format_delta(delta_abs: f64, delta_rel_pct: f64) -> String {
    format!("{:.1} ({}%)", delta_abs, delta_rel_pct.trunc() as i64)
}

/// One row of a comparison report.
#[derive(Debug, Clone, Serialize)]
pub struct RmseEntry {
    pub trajectory: String,
    pub mode: String,
    pub roll_deg: f64,
    pub pitch_deg: f64,
    pub yaw_deg: f64,
    pub attitude_deg: f64,
    /// Absolute reduction against the baseline mode, degrees.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_abs_deg: Option<f64>,
    /// Relative reduction against the baseline mode, percent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_rel_pct: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct RmseReport {
    pub rows: Vec<RmseEntry>,
}

impl RmseReport {
    pub fn push(&mut self, trajectory: &str, mode: &str, rmse: &AngleRmse) {
        self.rows.push(RmseEntry {
            trajectory: trajectory.to_string(),
            mode: mode.to_string(),
            roll_deg: rmse.roll_deg,
            pitch_deg: rmse.pitch_deg,
            yaw_deg: rmse.yaw_deg,
            attitude_deg: rmse.attitude_deg,
            delta_abs_deg: None,
            delta_rel_pct: None,
        });
    }

    /// Fill the delta columns of every row against the given baseline mode,
    /// trajectory by trajectory.
    pub fn fill_deltas(&mut self, baseline_mode: &str) {
        let baselines: Vec<(String, f64)> = self
            .rows
            .iter()
            .filter(|r| r.mode == baseline_mode)
            .map(|r| (r.trajectory.clone(), r.attitude_deg))
            .collect();
        for row in &mut self.rows {
            if row.mode == baseline_mode {
                continue;
            }
            if let Some((_, base)) = baselines.iter().find(|(t, _)| *t == row.trajectory) {
                let (abs, rel) = rmse_delta(*base, row.attitude_deg);
                row.delta_abs_deg = Some(abs);
                row.delta_rel_pct = Some(rel);
            }
        }
    }
}

/// Confusion counts of per-epoch rotation detection against truth labels.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DetectionReport {
    pub accuracy: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub true_negatives: usize,
    pub false_negatives: usize,
}

impl DetectionReport {
    pub fn total(&self) -> usize {
        self.true_positives + self.false_positives + self.true_negatives + self.false_negatives
    }
}

/// Score per-epoch rotation flags against truth-derived labels: an epoch is
/// truly rotating when the yaw rate magnitude exceeds `omega_threshold`.
pub fn detection_accuracy(
    gate_flags: &[bool],
    truth_omega: &[Vector3<f64>],
    omega_threshold: f64,
) -> Result<DetectionReport> {
    if gate_flags.len() != truth_omega.len() {
        return Err(Error::MismatchedInputs(format!(
            "{} detection flags vs {} truth epochs",
            gate_flags.len(),
            truth_omega.len()
        )));
    }
    if gate_flags.is_empty() {
        return Err(Error::EmptyPairing);
    }
    let mut tp = 0;
    let mut fp = 0;
    let mut tn = 0;
    let mut fna = 0;
    for (&flag, w) in gate_flags.iter().zip(truth_omega) {
        let rotating = w.z.abs() > omega_threshold;
        match (flag, rotating) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fna += 1,
        }
    }
    Ok(DetectionReport {
        accuracy: (tp + tn) as f64 / gate_flags.len() as f64,
        true_positives: tp,
        false_positives: fp,
        true_negatives: tn,
        false_negatives: fna,
    })
}

/// Yaw rate series derived from a recorded truth log by wrapped finite
/// differences; lets detection be scored when only attitude truth exists.
pub fn derive_yaw_rate(truth: &crate::dataset::GroundTruthLog) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(truth.t.len().saturating_sub(1));
    for k in 1..truth.t.len() {
        let dt = truth.t[k] - truth.t[k - 1];
        if dt <= 0.0 {
            continue;
        }
        let dyaw = crate::dataset::wrap_deg(truth.rpy_deg[k].z - truth.rpy_deg[k - 1].z);
        out.push((truth.t[k], dyaw.to_radians() / dt));
    }
    out
}

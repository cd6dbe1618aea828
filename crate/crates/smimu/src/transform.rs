//! Half-sum / half-difference decomposition of mirrored IMU pairs.
//!
//! For a pair with lever arms `ρ_j = −ρ_i`, the half-sum of the two specific
//! forces isolates the shared linear part `a_b − g_b` while the
//! half-difference isolates the rotational part `ω×(ω×ρ) + ω̇×ρ`. The
//! transform is orthogonal, so equal-grade sensors stay uncorrelated after
//! decomposition: each output axis has variance `σ²/2` with zero cross
//! terms. Mixed-grade pairs keep the `(σ_i² − σ_j²)/4` cross covariance and
//! are flagged, since downstream filtering assumes independence.

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::geometry::{ArrayGeometry, SymmetryPairing};
use crate::sim::ImuFrameSample;

#[derive(Debug, Clone)]
pub struct SymmetricPairMeasurement {
    pub pair_id: usize,
    /// Linear component `(f_i + f_j)/2`, m/s².
    pub f_bar: Vector3<f64>,
    /// Rotational component `(f_i − f_j)/2`, m/s².
    pub f_breve: Vector3<f64>,
    /// Per-axis standard deviation of `f_bar`.
    pub sigma_bar: f64,
    /// Per-axis standard deviation of `f_breve`.
    pub sigma_breve: f64,
    /// Per-axis covariance between the two components, `(σ_i² − σ_j²)/4`.
    pub cov_cross: f64,
    /// Effective lever arm `(ρ_i − ρ_j)/2` driving the rotational model.
    pub rho_eff: Vector3<f64>,
    /// True when the pair comes from a planar array, where the rotational
    /// model only sees the in-plane lever arm.
    pub planar: bool,
    /// True when the pair mixes sensor grades (`σ_i ≠ σ_j`).
    pub grade_mismatch: bool,
}

fn decompose_impl(
    f_i: &Vector3<f64>,
    f_j: &Vector3<f64>,
    sigma_i: f64,
    sigma_j: f64,
    planar: bool,
) -> SymmetricPairMeasurement {
    let var_diag = (sigma_i * sigma_i + sigma_j * sigma_j) / 4.0;
    let cov_cross = (sigma_i * sigma_i - sigma_j * sigma_j) / 4.0;
    let grade_mismatch = sigma_i != sigma_j;
    if grade_mismatch {
        log::warn!(
            "mixed-grade pair (sigma {sigma_i} vs {sigma_j}): components stay correlated \
             (cross covariance {cov_cross:.3e}), downstream independence assumption violated"
        );
    }
    SymmetricPairMeasurement {
        pair_id: 0,
        f_bar: (f_i + f_j) * 0.5,
        f_breve: (f_i - f_j) * 0.5,
        sigma_bar: var_diag.sqrt(),
        sigma_breve: var_diag.sqrt(),
        cov_cross,
        rho_eff: Vector3::zeros(),
        planar,
        grade_mismatch,
    }
}

/// Decompose one full-3D mirror pair.
pub fn decompose(
    f_i: &Vector3<f64>,
    f_j: &Vector3<f64>,
    sigma_i: f64,
    sigma_j: f64,
) -> SymmetricPairMeasurement {
    decompose_impl(f_i, f_j, sigma_i, sigma_j, false)
}

/// Decompose one planar pair. The arithmetic is identical; the result is
/// flagged so the angular solver applies the reduced in-plane model.
pub fn decompose_2d(
    f_i: &Vector3<f64>,
    f_j: &Vector3<f64>,
    sigma_i: f64,
    sigma_j: f64,
) -> SymmetricPairMeasurement {
    decompose_impl(f_i, f_j, sigma_i, sigma_j, true)
}

/// Decompose a whole frame sample according to the array pairing, filling in
/// pair ids and effective lever arms. Pairs are kept separate rather than
/// averaged so the angular solver sees all 3N/2 equations.
pub fn decompose_array(
    sample: &ImuFrameSample,
    geometry: &ArrayGeometry,
    pairing: &SymmetryPairing,
) -> Result<Vec<SymmetricPairMeasurement>> {
    if sample.f_b.len() != geometry.len() {
        return Err(Error::Config(format!(
            "frame sample has {} vectors but the array has {} IMUs",
            sample.f_b.len(),
            geometry.len()
        )));
    }
    let planar = pairing.mode.is_planar();
    let mut out = Vec::with_capacity(pairing.pairs.len());
    for (pair_id, &(id_i, id_j)) in pairing.pairs.iter().enumerate() {
        let idx_i = index_of(geometry, id_i)?;
        let idx_j = index_of(geometry, id_j)?;
        let sigma_i = geometry.placements()[idx_i].sigma_f;
        let sigma_j = geometry.placements()[idx_j].sigma_f;
        let mut m = decompose_impl(
            &sample.f_b[idx_i],
            &sample.f_b[idx_j],
            sigma_i,
            sigma_j,
            planar,
        );
        m.pair_id = pair_id;
        m.rho_eff = geometry.pair_lever_arm((id_i, id_j))?;
        out.push(m);
    }
    Ok(out)
}

fn index_of(geometry: &ArrayGeometry, id: u32) -> Result<usize> {
    geometry
        .placements()
        .iter()
        .position(|p| p.id == id)
        .ok_or(Error::UnpairedImu { id, eps: 0.0 })
}

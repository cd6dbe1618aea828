//! IMU array layout: lever arms, mirror-symmetry validation, and the stacked
//! design matrix of the joint gyro-free least squares.

use nalgebra::{DMatrix, Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::so3::{skew, Dcm};

/// Upper bound on lever arm length accepted by [`ArrayGeometry::new`], m.
pub const MAX_LEVER_ARM: f64 = 10.0;

/// Default mirror-symmetry tolerance, m. One order below typical mounting
/// precision.
pub const DEFAULT_SYMMETRY_EPS: f64 = 1e-4;

/// A single IMU in the array.
#[derive(Debug, Clone, Copy)]
pub struct ImuPlacement {
    pub id: u32,
    /// Lever arm from the body center of mass, body frame, m.
    pub rho: Vector3<f64>,
    /// Constant sensor-to-body rotation.
    pub r_s_to_b: Dcm,
    /// Accelerometer white-noise standard deviation per axis, m/s².
    pub sigma_f: f64,
}

impl ImuPlacement {
    pub fn new(id: u32, rho: Vector3<f64>, sigma_f: f64) -> Self {
        Self {
            id,
            rho,
            r_s_to_b: Dcm::identity(),
            sigma_f,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn index(&self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }
}

/// Pairing discipline of the array.
///
/// `Full3D` requires `ρ_j = −ρ_i` for every pair. `Planar2D(n)` requires the
/// in-plane components to mirror while the component along the plane normal
/// `n` is shared.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SymmetryMode {
    Full3D,
    Planar2D(Axis),
}

impl SymmetryMode {
    /// Position of the mirror partner implied by the mode.
    pub fn mirror(&self, rho: &Vector3<f64>) -> Vector3<f64> {
        match self {
            SymmetryMode::Full3D => -rho,
            SymmetryMode::Planar2D(axis) => {
                let mut m = -rho;
                m[axis.index()] = rho[axis.index()];
                m
            }
        }
    }

    pub fn is_planar(&self) -> bool {
        matches!(self, SymmetryMode::Planar2D(_))
    }
}

/// A validated complete pairing of the array.
#[derive(Debug, Clone)]
pub struct SymmetryPairing {
    pub pairs: Vec<(u32, u32)>,
    pub mode: SymmetryMode,
}

/// Immutable array layout. Placements are sorted by id on construction and
/// ids must be unique.
#[derive(Debug, Clone)]
pub struct ArrayGeometry {
    placements: Vec<ImuPlacement>,
}

impl ArrayGeometry {
    pub fn new(mut placements: Vec<ImuPlacement>) -> Result<Self> {
        if placements.is_empty() {
            return Err(Error::EmptyInput("array geometry"));
        }
        placements.sort_by_key(|p| p.id);
        for w in placements.windows(2) {
            if w[0].id == w[1].id {
                return Err(Error::InvalidPlacement {
                    id: w[0].id,
                    detail: "duplicate id".into(),
                });
            }
        }
        for p in &placements {
            if !p.rho.iter().all(|c| c.is_finite()) || p.rho.norm() > MAX_LEVER_ARM {
                return Err(Error::InvalidPlacement {
                    id: p.id,
                    detail: format!("lever arm {:?} outside bound {MAX_LEVER_ARM} m", p.rho),
                });
            }
            if p.sigma_f.is_nan() || p.sigma_f <= 0.0 {
                return Err(Error::InvalidPlacement {
                    id: p.id,
                    detail: format!("sigma_f must be positive, got {}", p.sigma_f),
                });
            }
        }
        Ok(Self { placements })
    }

    pub fn placements(&self) -> &[ImuPlacement] {
        &self.placements
    }

    pub fn len(&self) -> usize {
        self.placements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.placements.is_empty()
    }

    pub fn by_id(&self, id: u32) -> Option<&ImuPlacement> {
        self.placements
            .binary_search_by_key(&id, |p| p.id)
            .ok()
            .map(|i| &self.placements[i])
    }

    /// Effective lever arm driving the rotational component of a pair:
    /// `(ρ_i − ρ_j) / 2`. Equals `ρ_i` for a full-3D pair and the in-plane
    /// part of `ρ_i` for a planar pair.
    pub fn pair_lever_arm(&self, pair: (u32, u32)) -> Result<Vector3<f64>> {
        let a = self.by_id(pair.0).ok_or(Error::UnpairedImu {
            id: pair.0,
            eps: 0.0,
        })?;
        let b = self.by_id(pair.1).ok_or(Error::UnpairedImu {
            id: pair.1,
            eps: 0.0,
        })?;
        Ok((a.rho - b.rho) * 0.5)
    }
}

/// Match every IMU with its mirror partner.
///
/// Greedy and deterministic: the lowest unpaired id is matched first, against
/// the candidate with the smallest mirror residual (ties broken by lowest
/// id). Fails if any IMU lacks a partner within `eps_sym`.
pub fn validate_and_pair(
    geometry: &ArrayGeometry,
    mode: SymmetryMode,
    eps_sym: f64,
) -> Result<SymmetryPairing> {
    if eps_sym.is_nan() || eps_sym <= 0.0 {
        return Err(Error::Config(format!(
            "symmetry tolerance must be positive, got {eps_sym}"
        )));
    }
    let placements = geometry.placements();
    if !placements.len().is_multiple_of(2) {
        return Err(Error::OddArraySize(placements.len()));
    }

    let mut used = vec![false; placements.len()];
    let mut pairs = Vec::with_capacity(placements.len() / 2);
    for i in 0..placements.len() {
        if used[i] {
            continue;
        }
        used[i] = true;
        let target = mode.mirror(&placements[i].rho);
        let mut best: Option<(usize, f64)> = None;
        for (j, candidate) in placements.iter().enumerate() {
            if used[j] {
                continue;
            }
            let residual = (candidate.rho - target).norm();
            if residual <= eps_sym {
                let better = match best {
                    None => true,
                    Some((_, best_res)) => residual < best_res,
                };
                if better {
                    best = Some((j, residual));
                }
            }
        }
        match best {
            Some((j, _)) => {
                used[j] = true;
                pairs.push((placements[i].id, placements[j].id));
            }
            None => {
                return Err(Error::UnpairedImu {
                    id: placements[i].id,
                    eps: eps_sym,
                })
            }
        }
    }
    Ok(SymmetryPairing { pairs, mode })
}

/// Stacked design matrix of the joint least squares, one 3×6 block per IMU:
/// `[−[ρ_i×] | I₃]`, so that `H·[ω̇; c]` stacks `ω̇×ρ_i + c`.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    pub h: DMatrix<f64>,
    /// Numeric rank of `HᵀH`.
    pub rank: usize,
    /// Condition number of `HᵀH`; infinite when rank-deficient.
    pub cond: f64,
}

pub fn design_matrix(geometry: &ArrayGeometry) -> DesignMatrix {
    let n = geometry.len();
    let mut h = DMatrix::zeros(3 * n, 6);
    for (i, p) in geometry.placements().iter().enumerate() {
        let block = -skew(&p.rho);
        h.view_mut((3 * i, 0), (3, 3)).copy_from(&block);
        h.view_mut((3 * i, 3), (3, 3))
            .copy_from(&Matrix3::identity());
    }
    let normal = h.transpose() * &h;
    let svd = normal.svd(false, false);
    let max_sv = svd.singular_values.max();
    let tol = max_sv * 1e-10;
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    let min_sv = svd.singular_values.min();
    let cond = if min_sv > 0.0 && rank == 6 {
        max_sv / min_sv
    } else {
        f64::INFINITY
    };
    DesignMatrix { h, rank, cond }
}

/// Eight IMUs on the vertices of a cube with circumradius `radius`, forming
/// four mirror pairs.
pub fn cube_array(radius: f64, sigma_f: f64) -> Vec<ImuPlacement> {
    let a = radius / 3.0_f64.sqrt();
    let signs = [
        [1.0, 1.0, 1.0],
        [1.0, 1.0, -1.0],
        [1.0, -1.0, 1.0],
        [1.0, -1.0, -1.0],
        [-1.0, -1.0, -1.0],
        [-1.0, -1.0, 1.0],
        [-1.0, 1.0, -1.0],
        [-1.0, 1.0, 1.0],
    ];
    signs
        .iter()
        .enumerate()
        .map(|(i, s)| {
            ImuPlacement::new(i as u32, Vector3::new(s[0] * a, s[1] * a, s[2] * a), sigma_f)
        })
        .collect()
}

/// Six IMUs on the axes at distance `radius`, forming three mirror pairs.
pub fn octahedron_array(radius: f64, sigma_f: f64) -> Vec<ImuPlacement> {
    let axes = [
        Vector3::new(radius, 0.0, 0.0),
        Vector3::new(-radius, 0.0, 0.0),
        Vector3::new(0.0, radius, 0.0),
        Vector3::new(0.0, -radius, 0.0),
        Vector3::new(0.0, 0.0, radius),
        Vector3::new(0.0, 0.0, -radius),
    ];
    axes.iter()
        .enumerate()
        .map(|(i, rho)| ImuPlacement::new(i as u32, *rho, sigma_f))
        .collect()
}

/// Four IMUs on a square of circumradius `radius` in the plane `z =
/// z_offset`, forming two planar pairs.
pub fn planar_square_array(radius: f64, z_offset: f64, sigma_f: f64) -> Vec<ImuPlacement> {
    let a = radius / 2.0_f64.sqrt();
    [
        Vector3::new(a, a, z_offset),
        Vector3::new(a, -a, z_offset),
        Vector3::new(-a, -a, z_offset),
        Vector3::new(-a, a, z_offset),
    ]
    .iter()
    .enumerate()
    .map(|(i, rho)| ImuPlacement::new(i as u32, *rho, sigma_f))
    .collect()
}

//! Final-value extraction from Hankel matrices of trajectory differences.
//!
//! Dimension `k` uses the `(k+1) x k` difference Hankel: `k` columns plus one
//! confirmation row. It needs `2k+1` raw samples and yields `D_j = k - 1`.

pub mod exact;

use crate::error::{Error, Result};
use nalgebra::DMatrix;

pub const DEFAULT_RANK_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub samples: Vec<f64>,
}

impl Trajectory {
    pub fn new(samples: Vec<f64>) -> Self {
        Self { samples }
    }

    pub fn push(&mut self, x: f64) {
        self.samples.push(x);
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Minimal-polynomial data of one node.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyCoefficients {
    pub degree: usize,
    /// Unit norm, first significant entry positive.
    pub beta: Vec<f64>,
    /// Raw samples consumed when the defect was found (`2D+3`).
    pub defect_round: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DefectScan {
    Found(PolyCoefficients),
    NotYet,
}

/// Raw samples needed to test dimension `k`.
pub fn samples_for_dimension(k: usize) -> usize {
    2 * k + 1
}

pub fn difference_sequence(samples: &[f64]) -> Result<Vec<f64>> {
    if samples.len() < 2 {
        return Err(Error::TrajectoryTooShort {
            needed: 2,
            have: samples.len(),
        });
    }
    Ok(samples.windows(2).map(|w| w[1] - w[0]).collect())
}

/// Square `(k+1) x (k+1)` Hankel matrix with entry `(r, c) = s[r + c]`.
pub fn hankel_matrix(s: &[f64], k: usize) -> Result<DMatrix<f64>> {
    let needed = 2 * k + 1;
    if s.len() < needed {
        return Err(Error::InsufficientData {
            k,
            needed,
            have: s.len(),
        });
    }
    Ok(DMatrix::from_fn(k + 1, k + 1, |r, c| s[r + c]))
}

/// Tall `(k+1) x k` Hankel matrix used for the defect test.
pub fn defect_hankel(s: &[f64], k: usize) -> Result<DMatrix<f64>> {
    let needed = 2 * k;
    if k == 0 || s.len() < needed {
        return Err(Error::InsufficientData {
            k,
            needed,
            have: s.len(),
        });
    }
    Ok(DMatrix::from_fn(k + 1, k, |r, c| s[r + c]))
}

/// Smallest over largest singular value below `tol`; an all-zero matrix counts as deficient.
pub fn is_rank_deficient(m: &DMatrix<f64>, tol: f64) -> bool {
    let sv = m.singular_values();
    let max = sv.max();
    max == 0.0 || sv.min() / max < tol
}

/// Unit norm with the first significant entry positive.
pub fn canonicalize(v: &[f64]) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return v.to_vec();
    }
    let lead = v.iter().copied().find(|x| x.abs() > 1e-12 * norm).unwrap_or(1.0);
    let sign = if lead < 0.0 { -1.0 } else { 1.0 };
    v.iter().map(|x| sign * x / norm).collect()
}

/// Right singular vector of the smallest singular value.
pub fn kernel_vector(m: &DMatrix<f64>) -> Vec<f64> {
    let svd = m.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let (idx, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("nonempty matrix");
    canonicalize(&v_t.row(idx).iter().copied().collect::<Vec<_>>())
}

/// Tests dimension `k` on every value trajectory and the mass trajectory of one node.
///
/// `Ok(None)` means not yet. A value trajectory that loses rank before the
/// mass, or value trajectories that disagree, are degenerate.
pub fn test_dimension(
    values: &[&[f64]],
    mass: &[f64],
    k: usize,
    tol: f64,
    node: usize,
) -> Result<Option<PolyCoefficients>> {
    let needed = samples_for_dimension(k);
    for s in values.iter().copied().chain([mass]) {
        if s.len() < needed {
            return Err(Error::TrajectoryTooShort {
                needed,
                have: s.len(),
            });
        }
    }
    let mats = values
        .iter()
        .map(|s| defect_hankel(&difference_sequence(&s[..needed])?, k))
        .collect::<Result<Vec<_>>>()?;
    let flags: Vec<bool> = mats.iter().map(|m| is_rank_deficient(m, tol)).collect();
    let mass_def = is_rank_deficient(&defect_hankel(&difference_sequence(&mass[..needed])?, k)?, tol);
    let any = flags.iter().any(|&f| f);
    let all = flags.iter().all(|&f| f);
    match (any, all && mass_def) {
        (false, _) => Ok(None),
        (true, true) => Ok(Some(PolyCoefficients {
            degree: k - 1,
            beta: kernel_vector(&mats[0]),
            defect_round: needed,
        })),
        (true, false) => Err(Error::Degenerate {
            node,
            reason: format!("value and mass trajectories disagree at dimension {k}"),
        }),
    }
}

/// Scans dimensions `1, 2, ...` until both trajectories lose rank.
pub fn first_defect(t1: &Trajectory, t2: &Trajectory, tol: f64) -> Result<DefectScan> {
    let len = t1.len().min(t2.len());
    let mut k = 1;
    while samples_for_dimension(k) <= len {
        if let Some(p) = test_dimension(&[&t1.samples], &t2.samples, k, tol, 0)? {
            return Ok(DefectScan::Found(p));
        }
        k += 1;
    }
    Ok(DefectScan::NotYet)
}

/// `(x_1 · β) / (x_2 · β)` over the first `D+1` samples.
pub fn final_value(t1: &Trajectory, t2: &Trajectory, p: &PolyCoefficients) -> Result<f64> {
    final_value_slices(&t1.samples, &t2.samples, &p.beta, 0)
}

pub(crate) fn final_value_slices(x1: &[f64], x2: &[f64], beta: &[f64], node: usize) -> Result<f64> {
    let m = beta.len();
    let have = x1.len().min(x2.len());
    if have < m {
        return Err(Error::TrajectoryTooShort { needed: m, have });
    }
    let dot = |x: &[f64]| x.iter().zip(beta).map(|(a, b)| a * b).sum::<f64>();
    let num = dot(&x1[..m]);
    let den = dot(&x2[..m]);
    let scale: f64 = x2.iter().zip(beta).map(|(a, b)| (a * b).abs()).sum();
    if den == 0.0 || den.abs() <= f64::EPSILON * scale {
        return Err(Error::DivideByZero { node });
    }
    Ok(num / den)
}

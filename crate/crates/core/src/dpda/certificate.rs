//! Positive-semidefiniteness certificate for the saddle-point operator
//!
//! ```text
//!     ⎡ D_τ  -Aᵀ   -Bᵀ  ⎤
//! Q = ⎢ -A   D_κ    0   ⎥ ,  D_τ = diag(1/τ), D_κ = diag(1/κ), D_γ = I/γ,
//!     ⎣ -B    0    D_γ  ⎦
//! ```
//!
//! whose semidefiniteness is what the convergence argument needs.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::steps::StepSizes;
use crate::geometry::{eig_sym, GeometryError, Matrix};
use crate::problem::Instance;

pub const DEFAULT_MAX_DIM: usize = 600;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CertificateError {
    #[error("Q would have dimension {dim}, above the cap {cap}")]
    TooLarge { dim: usize, cap: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub dimension: usize,
    pub min_eigenvalue: f64,
    /// Minimum eigenvalue of `D_τ - γBᵀB - Aᵀ diag(κ) A`, the Schur
    /// complement of the dual blocks.
    pub schur_min_eigenvalue: f64,
    /// Unit vector `v` with `vᵀQv < 0` when `Q` is indefinite.
    pub witness: Option<Vec<f64>>,
}

impl Certificate {
    pub fn is_psd(&self, tol: f64) -> bool {
        self.min_eigenvalue >= -tol
    }
}

pub fn assemble_q(inst: &Instance, ss: &StepSizes) -> Matrix {
    let n = inst.dim();
    let na = inst.a.nrows();
    let nb = inst.b.nrows();
    let mut q = Matrix::zeros(n + na + nb, n + na + nb);
    for k in 0..n {
        q[(k, k)] = 1.0 / ss.tau_of(inst, k);
    }
    for r in 0..na {
        q[(n + r, n + r)] = 1.0 / ss.kappa[r];
        for &(k, c) in &inst.a.rows[r] {
            q[(n + r, k)] -= c;
            q[(k, n + r)] -= c;
        }
    }
    for r in 0..nb {
        q[(n + na + r, n + na + r)] = 1.0 / ss.gamma;
        for &(k, c) in &inst.b.rows[r] {
            q[(n + na + r, k)] -= c;
            q[(k, n + na + r)] -= c;
        }
    }
    q
}

pub fn schur_complement(inst: &Instance, ss: &StepSizes) -> Matrix {
    let n = inst.dim();
    let mut s = Matrix::zeros(n, n);
    for k in 0..n {
        s[(k, k)] = 1.0 / ss.tau_of(inst, k);
    }
    for row in &inst.b.rows {
        for &(j, cj) in row {
            for &(k, ck) in row {
                s[(j, k)] -= ss.gamma * cj * ck;
            }
        }
    }
    for (r, row) in inst.a.rows.iter().enumerate() {
        for &(j, cj) in row {
            for &(k, ck) in row {
                s[(j, k)] -= ss.kappa[r] * cj * ck;
            }
        }
    }
    s
}

pub fn q_certificate(
    inst: &Instance,
    ss: &StepSizes,
    max_dim: usize,
) -> Result<Certificate, CertificateError> {
    let q = assemble_q(inst, ss);
    if q.nrows() > max_dim {
        return Err(CertificateError::TooLarge {
            dim: q.nrows(),
            cap: max_dim,
        });
    }
    let e = eig_sym(&q)?;
    let min = e.min_value();
    let witness = (min < 0.0).then(|| e.vectors.column(e.values.len() - 1));
    let schur = eig_sym(&schur_complement(inst, ss))?.min_value();
    Ok(Certificate {
        dimension: q.nrows(),
        min_eigenvalue: min,
        schur_min_eigenvalue: schur,
        witness,
    })
}

//! Polynomial-like utilities in `r^{1/ℓ}`, moment vectors of the lifted
//! variable `y = r^{1/ℓ}`, their Hankel matrices, and the even-order test for
//! a representing measure supported on `[-√β, √β]`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{eig_sym, sets::pow_frac, GeometryError, Matrix};

pub const DEFAULT_PSD_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MomentError {
    #[error("rate {0} is negative")]
    NegativeRate(f64),
    #[error(
        "Hankel block M({k}, {k}+2·{h}) needs moments up to {needed}, only {available} available"
    )]
    IndexOverflow {
        k: usize,
        h: usize,
        needed: usize,
        available: usize,
    },
    #[error("moment order {0} must be a positive even integer")]
    OddOrder(usize),
    #[error("m_0 = {0} is not 1")]
    Unnormalized(f64),
    #[error("utility has {got} coefficients, order {order} needs {}", order + 1)]
    CoefficientCount { got: usize, order: usize },
    #[error("invalid rate bounds: {0}")]
    Bounds(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// `U(r) = Σ_{j=0}^{ℓ} p_j r^{j/ℓ}` together with the rate window
/// `[ξ, ζ]` and the moment-domain bound `β` on `y²`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UtilitySpec {
    pub coefficients: Vec<f64>,
    pub order: usize,
    pub xi: f64,
    pub zeta: f64,
    pub beta: f64,
}

impl UtilitySpec {
    /// `beta = None` picks `ζ^{2/ℓ}`, the smallest bound keeping every
    /// lifted rate in `[0, ζ]` feasible.
    pub fn new(
        coefficients: Vec<f64>,
        xi: f64,
        zeta: f64,
        beta: Option<f64>,
    ) -> Result<UtilitySpec, MomentError> {
        if coefficients.len() < 3 {
            return Err(MomentError::OddOrder(coefficients.len().saturating_sub(1)));
        }
        let order = coefficients.len() - 1;
        if order % 2 != 0 {
            return Err(MomentError::OddOrder(order));
        }
        if let Some(c) = coefficients.iter().find(|c| !c.is_finite()) {
            return Err(MomentError::Bounds(format!(
                "coefficient {c} is not finite"
            )));
        }
        if !(xi >= 0.0 && zeta >= xi && zeta > 0.0 && zeta.is_finite()) {
            return Err(MomentError::Bounds(format!(
                "need 0 ≤ ξ ≤ ζ and ζ > 0, got ξ={xi}, ζ={zeta}"
            )));
        }
        let floor = default_beta(zeta, order);
        let beta = beta.unwrap_or(floor);
        if !(beta > 0.0) || beta < floor * (1.0 - 1e-12) {
            return Err(MomentError::Bounds(format!(
                "β={beta} must be at least ζ^(2/ℓ)={floor}"
            )));
        }
        Ok(UtilitySpec {
            coefficients,
            order,
            xi,
            zeta,
            beta,
        })
    }

    pub fn step_like() -> UtilitySpec {
        UtilitySpec::new(STEP_LIKE.to_vec(), 0.0, 10.0, None).expect("valid built-in utility")
    }
}

/// Degree-6 step-like utility used by the reference scenario (`p_0 = 0`).
pub const STEP_LIKE: [f64; 7] = [0.0, 1.763, -20.718, 88.568, -169.102, 145.167, -44.677];

pub fn default_beta(zeta: f64, order: usize) -> f64 {
    zeta.powf(2.0 / order as f64)
}

pub fn eval_utility(u: &UtilitySpec, r: f64) -> Result<f64, MomentError> {
    if r < 0.0 || r.is_nan() {
        return Err(MomentError::NegativeRate(r));
    }
    let ell = u.order as f64;
    Ok(u.coefficients
        .iter()
        .enumerate()
        .map(|(j, &p)| p * pow_frac(r, j as f64 / ell))
        .sum())
}

/// `m_0..m_ℓ`.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentVector(pub Vec<f64>);

impl MomentVector {
    pub fn order(&self) -> usize {
        self.0.len() - 1
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Moments of the point mass at `y`: `m_j = y^j`.
pub fn dirac_moments(y: f64, order: usize) -> MomentVector {
    let mut m = Vec::with_capacity(order + 1);
    let mut p = 1.0;
    for _ in 0..=order {
        m.push(p);
        p *= y;
    }
    MomentVector(m)
}

/// `M(k, k+2h, m)`: the `(h+1)×(h+1)` matrix with entry `(a, b) = m_{k+a+b}`.
pub fn hankel(m: &MomentVector, k: usize, h: usize) -> Result<Matrix, MomentError> {
    let needed = k + 2 * h;
    if needed > m.order() {
        return Err(MomentError::IndexOverflow {
            k,
            h,
            needed,
            available: m.order(),
        });
    }
    let mut out = Matrix::zeros(h + 1, h + 1);
    for a in 0..=h {
        for b in 0..=h {
            out[(a, b)] = m.0[k + a + b];
        }
    }
    Ok(out)
}

/// `β M(0, ℓ-2, m) - M(2, ℓ, m)`.
pub fn localizing(m: &MomentVector, beta: f64) -> Result<Matrix, MomentError> {
    let ell = m.order();
    if ell < 2 || ell % 2 != 0 {
        return Err(MomentError::OddOrder(ell));
    }
    let h = ell / 2 - 1;
    Ok(hankel(m, 0, h)?.scale(beta).sub(&hankel(m, 2, h)?))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MomentConstraint {
    /// `M(0, ℓ, m) ⪰ 0`.
    Hankel,
    /// `β M(0, ℓ-2, m) - M(2, ℓ, m) ⪰ 0`.
    Localizing,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Feasibility {
    Feasible,
    Infeasible {
        constraint: MomentConstraint,
        matrix: Matrix,
        min_eigenvalue: f64,
    },
}

impl Feasibility {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Feasibility::Feasible)
    }
}

/// Tests whether `m` is the moment sequence of a probability measure on
/// `[-√β, √β]` (even order): both Hankel conditions must hold with minimum
/// eigenvalue at least `-tol`.
pub fn check_moment_feasible(
    m: &MomentVector,
    beta: f64,
    tol: f64,
) -> Result<Feasibility, MomentError> {
    let ell = m.order();
    if ell == 0 || ell % 2 != 0 {
        return Err(MomentError::OddOrder(ell));
    }
    if (m.0[0] - 1.0).abs() > tol {
        return Err(MomentError::Unnormalized(m.0[0]));
    }
    let checks = [
        (MomentConstraint::Hankel, hankel(m, 0, ell / 2)?),
        (MomentConstraint::Localizing, localizing(m, beta)?),
    ];
    for (constraint, matrix) in checks {
        let min_eigenvalue = eig_sym(&matrix)?.min_value();
        if min_eigenvalue < -tol {
            return Ok(Feasibility::Infeasible {
                constraint,
                matrix,
                min_eigenvalue,
            });
        }
    }
    Ok(Feasibility::Feasible)
}

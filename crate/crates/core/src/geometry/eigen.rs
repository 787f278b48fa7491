//! Cyclic Jacobi eigensolver for small dense symmetric matrices.

use super::{GeometryError, Matrix};

const MAX_SWEEPS: usize = 100;
const OFF_TOLERANCE: f64 = 1e-12;
// Loose enough for round-off from projection iterates.
const SYMMETRY_TOLERANCE: f64 = 1e-9;

/// Eigenvalues in descending order with matching orthonormal eigenvectors
/// stored as columns.
#[derive(Clone, Debug)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

impl SymmetricEigen {
    pub fn min_value(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }

    pub fn reconstruct(&self) -> Matrix {
        self.reconstruct_with(|v| v)
    }

    /// `V diag(f(λ)) Vᵀ`.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> Matrix {
        let n = self.values.len();
        let mut out = Matrix::zeros(n, n);
        for (k, &lam) in self.values.iter().enumerate() {
            let w = f(lam);
            if w == 0.0 {
                continue;
            }
            for r in 0..n {
                let vr = self.vectors[(r, k)] * w;
                if vr == 0.0 {
                    continue;
                }
                for c in 0..n {
                    out[(r, c)] += vr * self.vectors[(c, k)];
                }
            }
        }
        out
    }
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Sweeps stop once the off-diagonal Frobenius mass drops below
/// `1e-12 · ‖M‖_F` (or is exactly zero).
pub fn eig_sym(m: &Matrix) -> Result<SymmetricEigen, GeometryError> {
    if !m.is_square() {
        return Err(GeometryError::NotSymmetric(f64::INFINITY));
    }
    let asym = m.asymmetry();
    let scale = m.frobenius_norm().max(1.0);
    if asym > SYMMETRY_TOLERANCE * scale {
        return Err(GeometryError::NotSymmetric(asym));
    }
    let n = m.nrows();
    let mut a = m.clone();
    // symmetrize exactly so rotations see a symmetric input
    for r in 0..n {
        for c in r + 1..n {
            let v = 0.5 * (a[(r, c)] + a[(c, r)]);
            a[(r, c)] = v;
            a[(c, r)] = v;
        }
    }
    let mut v = Matrix::identity(n);
    let norm = a.frobenius_norm();
    let threshold = OFF_TOLERANCE * norm;

    let mut converged = n <= 1;
    for _ in 0..MAX_SWEEPS {
        let off = off_diagonal_norm(&a);
        if off <= threshold || off == 0.0 {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = a[(p, p)];
                let aqq = a[(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                rotate(&mut a, &mut v, p, q, c, s);
            }
        }
    }
    if !converged {
        if off_diagonal_norm(&a) <= threshold {
            converged = true;
        }
    }
    if !converged {
        return Err(GeometryError::NoConvergence(MAX_SWEEPS));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(j, j)].total_cmp(&a[(i, i)]));
    let values = order.iter().map(|&k| a[(k, k)]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        for r in 0..n {
            vectors[(r, dst)] = v[(r, src)];
        }
    }
    Ok(SymmetricEigen { values, vectors })
}

fn off_diagonal_norm(a: &Matrix) -> f64 {
    let n = a.nrows();
    let mut s = 0.0;
    for r in 0..n {
        for c in 0..n {
            if r != c {
                s += a[(r, c)] * a[(r, c)];
            }
        }
    }
    s.sqrt()
}

/// Applies the rotation `Jᵀ A J` zeroing `A[p][q]`, and accumulates `V J`.
fn rotate(a: &mut Matrix, v: &mut Matrix, p: usize, q: usize, c: f64, s: f64) {
    let n = a.nrows();
    for k in 0..n {
        let akp = a[(k, p)];
        let akq = a[(k, q)];
        a[(k, p)] = c * akp - s * akq;
        a[(k, q)] = s * akp + c * akq;
    }
    for k in 0..n {
        let apk = a[(p, k)];
        let aqk = a[(q, k)];
        a[(p, k)] = c * apk - s * aqk;
        a[(q, k)] = s * apk + c * aqk;
    }
    a[(p, q)] = 0.0;
    a[(q, p)] = 0.0;
    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = c * vkp - s * vkq;
        v[(k, q)] = s * vkp + c * vkq;
    }
}

/// Smallest eigenvalue, or `-inf` if the solver fails.
pub fn min_eigenvalue(m: &Matrix) -> f64 {
    eig_sym(m)
        .map(|e| e.min_value())
        .unwrap_or(f64::NEG_INFINITY)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_symmetric(rng: &mut impl Rng, n: usize) -> Matrix {
        let mut m = Matrix::zeros(n, n);
        for r in 0..n {
            for c in r..n {
                let v = rng.gen_range(-1.0..1.0);
                m[(r, c)] = v;
                m[(c, r)] = v;
            }
        }
        m
    }

    #[test]
    fn identity_and_swap() {
        let e = eig_sym(&Matrix::identity(3)).unwrap();
        assert_eq!(e.values, vec![1.0, 1.0, 1.0]);
        let e = eig_sym(&Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]])).unwrap();
        assert!((e.values[0] - 1.0).abs() < 1e-15);
        assert!((e.values[1] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn reconstruction_and_orthonormality() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in [1, 2, 3, 5, 8] {
            for _ in 0..20 {
                let m = random_symmetric(&mut rng, n);
                let e = eig_sym(&m).unwrap();
                assert!(e.reconstruct().sub(&m).frobenius_norm() < 1e-9);
                let vtv = e.vectors.transpose().matmul(&e.vectors);
                assert!(vtv.sub(&Matrix::identity(n)).frobenius_norm() < 1e-9);
                assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
            }
        }
    }

    #[test]
    fn rejects_asymmetric_input() {
        let m = Matrix::from_rows(&[vec![0.0, 1.0], vec![0.0, 0.0]]);
        assert!(matches!(eig_sym(&m), Err(GeometryError::NotSymmetric(_))));
    }
}

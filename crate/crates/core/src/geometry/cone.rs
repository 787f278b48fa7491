//! PSD-cone projections, including the pull-back of a PSD constraint on a
//! Hankel-structured matrix to moment coordinates.

use super::{cholesky_solve, eig_sym, GeometryError, Matrix};

const RHO_MIN: f64 = 1e-4;
const RHO_MAX: f64 = 1e4;

/// Frobenius-nearest positive semidefinite matrix (eigenvalue clamp).
pub fn project_psd(m: &Matrix) -> Result<Matrix, GeometryError> {
    let e = eig_sym(m)?;
    if e.min_value() >= 0.0 {
        return Ok(m.clone());
    }
    Ok(e.reconstruct_with(|v| v.max(0.0)))
}

/// Affine map `m ↦ Σ_j m_j E_j` from a moment vector to a symmetric
/// matrix, where every `E_j` has entries on whole anti-diagonals.
#[derive(Clone, Debug)]
pub struct MomentMap {
    size: usize,
    len: usize,
    /// For every matrix entry `(a, b)` the `(j, weight)` terms.
    terms: Vec<Vec<(usize, f64)>>,
}

impl MomentMap {
    /// `M(k, k+2h, m)`: entry `(a, b)` equals `m_{k+a+b}`.
    pub fn hankel(len: usize, k: usize, h: usize) -> MomentMap {
        assert!(k + 2 * h < len, "Hankel block exceeds moment vector");
        let size = h + 1;
        let terms = (0..size * size)
            .map(|e| vec![(k + e / size + e % size, 1.0)])
            .collect();
        MomentMap { size, len, terms }
    }

    /// `β M(0, ℓ-2, m) - M(2, ℓ, m)` for even `ℓ = len - 1 ≥ 2`.
    pub fn localizing(len: usize, beta: f64) -> MomentMap {
        let order = len - 1;
        assert!(
            order >= 2 && order % 2 == 0,
            "localizing map needs an even order"
        );
        let size = order / 2;
        let terms = (0..size * size)
            .map(|e| {
                let s = e / size + e % size;
                vec![(s, beta), (s + 2, -1.0)]
            })
            .collect();
        MomentMap { size, len, terms }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn apply(&self, m: &[f64]) -> Matrix {
        debug_assert_eq!(m.len(), self.len);
        let mut out = Matrix::zeros(self.size, self.size);
        for (e, t) in self.terms.iter().enumerate() {
            out[(e / self.size, e % self.size)] = t.iter().map(|&(j, w)| w * m[j]).sum();
        }
        out
    }

    /// Adjoint restricted to the free coordinates `m_1..`: `(T* S)_j`.
    fn adjoint_free(&self, s: &Matrix, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (e, t) in self.terms.iter().enumerate() {
            let v = s[(e / self.size, e % self.size)];
            for &(j, w) in t {
                if j > 0 {
                    out[j - 1] += w * v;
                }
            }
        }
    }

    /// Gram matrix `T_fᵀ T_f` over the free coordinates.
    fn gram_free(&self) -> Matrix {
        let n = self.len - 1;
        let mut g = Matrix::zeros(n, n);
        for t in &self.terms {
            for &(j, wj) in t {
                for &(k, wk) in t {
                    if j > 0 && k > 0 {
                        g[(j - 1, k - 1)] += wj * wk;
                    }
                }
            }
        }
        g
    }
}

/// Euclidean projection onto `{m : m_0 = 1, T(m) ⪰ 0}` in moment
/// coordinates, computed by ADMM on the splitting `T(m) = Y, Y ⪰ 0`.
///
/// The solver keeps its splitting state between calls; consecutive calls on
/// nearby inputs converge in a handful of iterations.
#[derive(Clone, Debug)]
pub struct MomentConeProjector {
    map: MomentMap,
    rho: f64,
    tol: f64,
    max_iter: usize,
    /// `(I + ρ G)` over free coordinates.
    system: Matrix,
    y: Option<Matrix>,
    u: Option<Matrix>,
    pub last_iterations: usize,
}

impl MomentConeProjector {
    pub fn new(map: MomentMap, tol: f64, max_iter: usize) -> MomentConeProjector {
        let rho = 1.0;
        let g = map.gram_free();
        let system = Matrix::identity(g.nrows()).add(&g.scale(rho));
        MomentConeProjector {
            map,
            rho,
            tol,
            max_iter,
            system,
            y: None,
            u: None,
            last_iterations: 0,
        }
    }

    pub fn map(&self) -> &MomentMap {
        &self.map
    }

    /// Returns the projection of `a` (whose `m_0` is replaced by 1).
    pub fn project(&mut self, a: &[f64]) -> Result<Vec<f64>, GeometryError> {
        let mut m = a.to_vec();
        m[0] = 1.0;
        let t = self.map.apply(&m);
        let e = eig_sym(&t)?;
        if e.min_value() >= 0.0 {
            self.last_iterations = 0;
            return Ok(m);
        }
        if self.map.size() == 1 {
            // one linear inequality g·m_f + g0 ≥ 0: halfspace projection
            self.last_iterations = 0;
            return Ok(self.halfspace(&m));
        }

        let n = m.len() - 1;
        let size = self.map.size();
        let mut y = self
            .y
            .take()
            .filter(|y| y.nrows() == size)
            .unwrap_or_else(|| e.reconstruct_with(|v| v.max(0.0)));
        let mut u = self
            .u
            .take()
            .filter(|u| u.nrows() == size)
            .unwrap_or_else(|| Matrix::zeros(size, size));
        let mut base = vec![0.0; m.len()];
        base[0] = 1.0;
        let t0 = self.map.apply(&base);
        let mut rhs = vec![0.0; n];
        let mut it = 0;
        let scale = 1.0 + a.iter().map(|v| v * v).sum::<f64>().sqrt();
        let gram = self.map.gram_free();
        loop {
            it += 1;
            // m-step: (I + ρG) m_f = a_f + ρ T_f*(Y - U - T_0)
            let target = y.sub(&u).sub(&t0);
            self.map.adjoint_free(&target, &mut rhs);
            for j in 0..n {
                rhs[j] = a[j + 1] + self.rho * rhs[j];
            }
            let mf = cholesky_solve(&self.system, &rhs).ok_or(GeometryError::NoConvergence(it))?;
            m[1..].copy_from_slice(&mf);
            let tm = self.map.apply(&m);
            let v = tm.add(&u);
            let ev = eig_sym(&v)?;
            let y_new = if ev.min_value() >= 0.0 {
                v.clone()
            } else {
                ev.reconstruct_with(|x| x.max(0.0))
            };
            let primal = tm.sub(&y_new);
            let dual = y_new.sub(&y).scale(self.rho);
            u = u.add(&primal);
            y = y_new;
            let rp = primal.frobenius_norm();
            let rd = dual.frobenius_norm();
            if (rp <= self.tol * scale && rd <= self.tol * scale) || it >= self.max_iter {
                break;
            }
            // residual balancing; U is the scaled dual, so it rescales with ρ
            let factor = if rp > 10.0 * rd {
                2.0
            } else if rd > 10.0 * rp {
                0.5
            } else {
                1.0
            };
            if factor != 1.0 && (RHO_MIN..=RHO_MAX).contains(&(self.rho * factor)) {
                self.rho *= factor;
                u = u.scale(1.0 / factor);
                self.system = Matrix::identity(n).add(&gram.scale(self.rho));
            }
        }
        self.last_iterations = it;
        self.y = Some(y);
        self.u = Some(u);
        // an unconverged iterate is still returned; the outer loop measures
        // the remaining violation itself
        Ok(m)
    }

    fn halfspace(&self, m: &[f64]) -> Vec<f64> {
        let t = &self.map.terms[0];
        let mut g = vec![0.0; m.len()];
        let mut g0 = 0.0;
        for &(j, w) in t {
            if j == 0 {
                g0 += w;
            } else {
                g[j] += w;
            }
        }
        let val: f64 = g0 + (1..m.len()).map(|j| g[j] * m[j]).sum::<f64>();
        let nn: f64 = g.iter().map(|v| v * v).sum();
        let mut out = m.to_vec();
        if val < 0.0 && nn > 0.0 {
            for j in 1..m.len() {
                out[j] -= val / nn * g[j];
            }
        }
        out
    }
}

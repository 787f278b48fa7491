//! Closed-form and one-dimensional projections onto the elementary sets
//! making up a source's feasible region.

use super::GeometryError;

const BISECTION_STEPS: usize = 200;

/// Projection of `(m_j, r)` onto `{(a, b) : a ≤ b^{j/ℓ}, 0 ≤ b ≤ ζ}`.
pub fn project_hypograph(
    mj: f64,
    r: f64,
    j: usize,
    order: usize,
    zeta: f64,
) -> Result<(f64, f64), GeometryError> {
    let mut m = [mj];
    let r = project_hypographs(&mut m, &[j], r, order, zeta)?;
    Ok((m[0], r))
}

/// Joint projection of `(m_{j_1}, …, m_{j_q}, r)` onto the set where every
/// `m_j ≤ r^{j/ℓ}` and `0 ≤ r ≤ ζ`. Updates `m` in place and returns `r`.
///
/// For a fixed `r` the optimal `m_j` is `min(m_j, r^{j/ℓ})`, and the
/// remaining distance is convex in `r`, so the projection reduces to a root
/// of its monotone derivative on `[0, ζ]`.
pub fn project_hypographs(
    m: &mut [f64],
    js: &[usize],
    r: f64,
    order: usize,
    zeta: f64,
) -> Result<f64, GeometryError> {
    debug_assert_eq!(m.len(), js.len());
    debug_assert!(js.iter().all(|&j| j >= 1 && j <= order));
    let ell = order as f64;
    let feasible = (0.0..=zeta).contains(&r)
        && m.iter()
            .zip(js)
            .all(|(&a, &j)| a <= pow_frac(r, j as f64 / ell));
    if feasible {
        return Ok(r);
    }
    // derivative / 2 of  (b - r)^2 + Σ (m_j - b^q)_+^2
    let slope = |b: f64| -> f64 {
        let mut g = b - r;
        for (&a, &j) in m.iter().zip(js) {
            let q = j as f64 / ell;
            let gap = a - pow_frac(b, q);
            if gap > 0.0 {
                if b == 0.0 {
                    if q < 1.0 {
                        return f64::NEG_INFINITY;
                    }
                    g -= gap;
                } else {
                    g -= gap * q * b.powf(q - 1.0);
                }
            }
        }
        g
    };
    let b = if slope(zeta) <= 0.0 {
        zeta
    } else if slope(0.0) >= 0.0 {
        0.0
    } else {
        let (mut lo, mut hi) = (0.0, zeta);
        for _ in 0..BISECTION_STEPS {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if slope(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let b = 0.5 * (lo + hi);
        if !b.is_finite() {
            return Err(GeometryError::NoRoot);
        }
        b
    };
    for (a, &j) in m.iter_mut().zip(js) {
        *a = a.min(pow_frac(b, j as f64 / ell));
    }
    Ok(b)
}

/// `b^q` for `b ≥ 0`, with `0^q = 0` for `q > 0`.
pub(crate) fn pow_frac(b: f64, q: f64) -> f64 {
    if b <= 0.0 {
        if q == 0.0 {
            1.0
        } else {
            0.0
        }
    } else if q == 1.0 {
        b
    } else {
        b.powf(q)
    }
}

/// Projection onto `{x ≥ 0, ξ ≤ r ≤ ζ, r = Σ x}`.
pub fn project_xs(x: &[f64], r: f64, xi: f64, zeta: f64) -> (Vec<f64>, f64) {
    project_xs_capped(x, r, xi, zeta, None)
}

/// Projection onto `{0 ≤ x ≤ c, ξ ≤ r ≤ ζ, r = Σ x}`; `caps = None` drops
/// the upper bounds on `x`. The set must be nonempty (`ξ ≤ Σ c`).
///
/// KKT: `x_l = clamp(x0_l - ν, 0, c_l)` and `r = clamp(r0 + ν, ξ, ζ)`; the
/// multiplier `ν` is the root of the nonincreasing map `Σ x(ν) - r(ν)`.
pub fn project_xs_capped(
    x: &[f64],
    r: f64,
    xi: f64,
    zeta: f64,
    caps: Option<&[f64]>,
) -> (Vec<f64>, f64) {
    let cap = |l: usize| caps.map_or(f64::INFINITY, |c| c[l]);
    let xs = |nu: f64| -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(l, &v)| (v - nu).clamp(0.0, cap(l)))
            .collect()
    };
    let rs = |nu: f64| (r + nu).clamp(xi, zeta);
    let excess = |nu: f64| xs(nu).iter().sum::<f64>() - rs(nu);

    let e0 = excess(0.0);
    if e0 == 0.0 {
        let xv = xs(0.0);
        let rv = xv.iter().sum();
        return (xv, rv);
    }
    // bracket the root
    let span = 1.0 + zeta.abs() + r.abs() + x.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let (mut lo, mut hi) = if e0 > 0.0 { (0.0, span) } else { (-span, 0.0) };
    while excess(hi) > 0.0 {
        hi *= 2.0;
    }
    while excess(lo) < 0.0 {
        lo *= 2.0;
    }
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if excess(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let nu = 0.5 * (lo + hi);
    let xv = xs(nu);
    let sum: f64 = xv.iter().sum();
    // the root pins r to Σx up to rounding
    let rv = sum.clamp(xi, zeta);
    (xv, rv)
}

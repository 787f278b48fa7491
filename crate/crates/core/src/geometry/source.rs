//! Projection onto a source's feasible set `A_s`: first-hop rates `x`,
//! moments `m_0..m_ℓ` and aggregate rate `r` subject to
//!
//! * `m_0 = 1`, `M(0, ℓ, m) ⪰ 0`, `β M(0, ℓ-2, m) - M(2, ℓ, m) ⪰ 0`,
//! * `m_j ≤ r^{j/ℓ}` for `j = 1..ℓ`,
//! * `0 ≤ x_l ≤ c_l`, `ξ ≤ r ≤ ζ`, `r = Σ x_l`.
//!
//! Dykstra's algorithm cycles over four convex pieces, each of which has an
//! exact (or tolerance-exact) projection.

use super::cone::{MomentConeProjector, MomentMap};
use super::sets::{pow_frac, project_hypographs, project_xs_capped};
use super::{eig_sym, GeometryError};
use serde::{Deserialize, Serialize};

use crate::moments::UtilitySpec;

#[derive(Clone, Debug, PartialEq)]
pub struct SourcePoint {
    pub rates: Vec<f64>,
    pub moments: Vec<f64>,
    pub aggregate: f64,
}

impl SourcePoint {
    pub fn new(rates: Vec<f64>, moments: Vec<f64>, aggregate: f64) -> SourcePoint {
        SourcePoint {
            rates,
            moments,
            aggregate,
        }
    }

    /// `[x, m, r]`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.rates.len() + self.moments.len() + 1);
        v.extend_from_slice(&self.rates);
        v.extend_from_slice(&self.moments);
        v.push(self.aggregate);
        v
    }

    pub fn from_slice(v: &[f64], links: usize) -> SourcePoint {
        let last = v.len() - 1;
        SourcePoint {
            rates: v[..links].to_vec(),
            moments: v[links..last].to_vec(),
            aggregate: v[last],
        }
    }

    pub fn distance(&self, other: &SourcePoint) -> f64 {
        self.to_vec()
            .iter()
            .zip(other.to_vec())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DykstraConfig {
    pub tol: f64,
    pub max_cycles: usize,
    pub inner_tol: f64,
    pub inner_max: usize,
}

impl Default for DykstraConfig {
    fn default() -> Self {
        DykstraConfig {
            tol: 1e-8,
            max_cycles: 2000,
            inner_tol: 1e-10,
            inner_max: 2000,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionReport {
    pub result: SourcePoint,
    pub iterations: usize,
    pub max_constraint_violation: f64,
}

/// Reusable projector for one source. Keeps the inner PSD solvers warm
/// between calls, which matters inside an iterative algorithm.
#[derive(Clone, Debug)]
pub struct SourceProjector {
    order: usize,
    xi: f64,
    zeta: f64,
    caps: Vec<f64>,
    cfg: DykstraConfig,
    hankel: MomentConeProjector,
    localizing: MomentConeProjector,
    js: Vec<usize>,
}

impl SourceProjector {
    pub fn new(
        u: &UtilitySpec,
        caps: &[f64],
        cfg: DykstraConfig,
    ) -> Result<SourceProjector, GeometryError> {
        if caps.is_empty() {
            return Err(GeometryError::DimensionMismatch(
                "source without first-hop links".into(),
            ));
        }
        let total: f64 = caps.iter().sum();
        if total < u.xi {
            return Err(GeometryError::DimensionMismatch(format!(
                "first-hop capacity {total} cannot carry the minimum rate {}",
                u.xi
            )));
        }
        let len = u.order + 1;
        Ok(SourceProjector {
            order: u.order,
            xi: u.xi,
            zeta: u.zeta,
            caps: caps.to_vec(),
            cfg,
            hankel: MomentConeProjector::new(
                MomentMap::hankel(len, 0, u.order / 2),
                cfg.inner_tol,
                cfg.inner_max,
            ),
            localizing: MomentConeProjector::new(
                MomentMap::localizing(len, u.beta),
                cfg.inner_tol,
                cfg.inner_max,
            ),
            js: (1..=u.order).collect(),
        })
    }

    pub fn config(&self) -> &DykstraConfig {
        &self.cfg
    }

    fn check_dims(&self, p: &SourcePoint) -> Result<(), GeometryError> {
        if p.rates.len() != self.caps.len() || p.moments.len() != self.order + 1 {
            return Err(GeometryError::DimensionMismatch(format!(
                "point has {} rates and {} moments, set expects {} and {}",
                p.rates.len(),
                p.moments.len(),
                self.caps.len(),
                self.order + 1
            )));
        }
        Ok(())
    }

    /// Largest violation of any constraint of `A_s` at `p`.
    pub fn violation(&self, p: &SourcePoint) -> f64 {
        let len = self.order + 1;
        let m = &p.moments;
        let r = p.aggregate;
        let mut v = (m[0] - 1.0).abs();
        for map in [self.hankel.map(), self.localizing.map()] {
            let lam = eig_sym(&map.apply(m))
                .map(|e| e.min_value())
                .unwrap_or(f64::NEG_INFINITY);
            v = v.max(-lam);
        }
        let ell = self.order as f64;
        for (j, &mj) in m.iter().enumerate().take(len).skip(1) {
            v = v.max(mj - pow_frac(r.max(0.0), j as f64 / ell));
        }
        v = v.max(self.xi - r).max(r - self.zeta);
        let mut sum = 0.0;
        for (x, c) in p.rates.iter().zip(&self.caps) {
            v = v.max(-x).max(x - c);
            sum += x;
        }
        v.max((r - sum).abs()).max(0.0)
    }

    fn project_piece(
        &mut self,
        k: usize,
        w: &mut [f64],
        links: usize,
    ) -> Result<(), GeometryError> {
        let len = self.order + 1;
        let last = w.len() - 1;
        match k {
            0 => {
                let m = self.hankel.project(&w[links..links + len])?;
                w[links..links + len].copy_from_slice(&m);
            }
            1 => {
                let m = self.localizing.project(&w[links..links + len])?;
                w[links..links + len].copy_from_slice(&m);
            }
            2 => {
                let r = w[last];
                w[last] = project_hypographs(
                    &mut w[links + 1..links + len],
                    &self.js,
                    r,
                    self.order,
                    self.zeta,
                )?;
            }
            _ => {
                let (x, r) =
                    project_xs_capped(&w[..links], w[last], self.xi, self.zeta, Some(&self.caps));
                w[..links].copy_from_slice(&x);
                w[last] = r;
            }
        }
        Ok(())
    }

    /// Euclidean projection of `p` onto `A_s`.
    ///
    /// Stops once the constraint violation and the change over a full cycle
    /// are both below the tolerance. At the cycle cap the last iterate is
    /// returned inside [`GeometryError::MaxIterationsExceeded`].
    pub fn project(&mut self, p: &SourcePoint) -> Result<ProjectionReport, GeometryError> {
        self.check_dims(p)?;
        let v0 = self.violation(p);
        if v0 <= self.cfg.tol {
            return Ok(ProjectionReport {
                result: p.clone(),
                iterations: 0,
                max_constraint_violation: v0,
            });
        }
        let links = p.rates.len();
        let mut y = p.to_vec();
        let n = y.len();
        let mut incr = vec![vec![0.0; n]; 4];
        let mut w = vec![0.0; n];
        let mut prev = vec![0.0; n];
        for cycle in 1..=self.cfg.max_cycles {
            prev.copy_from_slice(&y);
            for (k, pk) in incr.iter_mut().enumerate() {
                for t in 0..n {
                    w[t] = y[t] + pk[t];
                }
                self.project_piece(k, &mut w, links)?;
                for t in 0..n {
                    pk[t] = y[t] + pk[t] - w[t];
                }
                std::mem::swap(&mut y, &mut w);
            }
            let change = y
                .iter()
                .zip(&prev)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            if change > self.cfg.tol {
                continue;
            }
            let point = SourcePoint::from_slice(&y, links);
            let violation = self.violation(&point);
            if violation <= self.cfg.tol {
                return Ok(ProjectionReport {
                    result: point,
                    iterations: cycle,
                    max_constraint_violation: violation,
                });
            }
        }
        let violation = self.violation(&SourcePoint::from_slice(&y, links));
        Err(GeometryError::MaxIterationsExceeded(Box::new(
            ProjectionReport {
                result: SourcePoint::from_slice(&y, links),
                iterations: self.cfg.max_cycles,
                max_constraint_violation: violation,
            },
        )))
    }
}

/// One-shot projection onto `A_s`; see [`SourceProjector::project`].
pub fn project_as(
    p: &SourcePoint,
    u: &UtilitySpec,
    caps: &[f64],
    cfg: DykstraConfig,
) -> Result<ProjectionReport, GeometryError> {
    SourceProjector::new(u, caps, cfg)?.project(p)
}

/// Largest violation of any `A_s` constraint at `p`.
pub fn source_violation(
    p: &SourcePoint,
    u: &UtilitySpec,
    caps: &[f64],
) -> Result<f64, GeometryError> {
    let proj = SourceProjector::new(u, caps, DykstraConfig::default())?;
    proj.check_dims(p)?;
    Ok(proj.violation(p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moments::dirac_moments;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn utility(order: usize, xi: f64, zeta: f64) -> UtilitySpec {
        UtilitySpec::new(vec![0.0; order + 1], xi, zeta, None).unwrap()
    }

    fn dirac_point(x: &[f64], order: usize) -> SourcePoint {
        let r: f64 = x.iter().sum();
        SourcePoint::new(
            x.to_vec(),
            dirac_moments(r.powf(1.0 / order as f64), order).0,
            r,
        )
    }

    /// Random point of `A_s`: a mixture of Diracs below `r^{1/ℓ}` and a
    /// random split of `r` under the caps.
    pub(crate) fn sample_feasible(
        rng: &mut impl Rng,
        u: &UtilitySpec,
        caps: &[f64],
    ) -> Option<SourcePoint> {
        let hi = u.zeta.min(caps.iter().sum());
        let r = rng.gen_range(u.xi..=hi);
        let w: Vec<f64> = caps.iter().map(|_| rng.gen_range(0.0..1.0)).collect();
        let tw: f64 = w.iter().sum();
        let x: Vec<f64> = w.iter().map(|v| v / tw * r).collect();
        if x.iter().zip(caps).any(|(a, c)| a > c) {
            return None;
        }
        let top = r.powf(1.0 / u.order as f64);
        let atoms = rng.gen_range(1..4);
        let mut m = vec![0.0; u.order + 1];
        let mut weights: Vec<f64> = (0..atoms).map(|_| rng.gen_range(0.05..1.0)).collect();
        let t: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|v| *v /= t);
        for wk in weights {
            let y = rng.gen_range(-top..=top);
            for (j, v) in dirac_moments(y, u.order).0.into_iter().enumerate() {
                m[j] += wk * v;
            }
        }
        m[0] = 1.0;
        Some(SourcePoint::new(x, m, r))
    }

    #[test]
    fn feasible_dirac_point_is_fixed() {
        let u = utility(4, 0.0, 10.0);
        let p = dirac_point(&[1.0, 2.0], 4);
        let rep = project_as(&p, &u, &[5.0, 5.0], DykstraConfig::default()).unwrap();
        assert!(rep.result.distance(&p) < 1e-8);
        assert_eq!(rep.iterations, 0);
    }

    #[test]
    fn unnormalized_mass_is_restored() {
        let u = utility(6, 0.0, 10.0);
        let mut p = dirac_point(&[3.0], 6);
        p.moments[0] = 0.5;
        let rep = project_as(&p, &u, &[10.0], DykstraConfig::default()).unwrap();
        assert!((rep.result.moments[0] - 1.0).abs() < 1e-12);
        assert!(rep.max_constraint_violation < 1e-8);
        assert!(source_violation(&rep.result, &u, &[10.0]).unwrap() < 1e-8);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let u = utility(2, 0.0, 10.0);
        let p = SourcePoint::new(vec![1.0], vec![1.0, 0.0], 1.0);
        assert!(matches!(
            project_as(&p, &u, &[1.0], DykstraConfig::default()),
            Err(GeometryError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn projection_beats_sampled_feasible_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for case in 0..5 {
            let order = [2, 4, 6][case % 3];
            let u = utility(order, 0.5, 10.0);
            let caps = [6.0, 4.0];
            let p = SourcePoint::new(
                (0..2).map(|_| rng.gen_range(-3.0..8.0)).collect(),
                (0..=order).map(|_| rng.gen_range(-2.0..3.0)).collect(),
                rng.gen_range(-2.0..12.0),
            );
            let rep = project_as(&p, &u, &caps, DykstraConfig::default()).unwrap();
            assert!(rep.max_constraint_violation <= 1e-8);
            let d0 = rep.result.distance(&p);
            let mut seen = 0;
            while seen < 2000 {
                if let Some(q) = sample_feasible(&mut rng, &u, &caps) {
                    seen += 1;
                    assert!(q.distance(&p) >= d0 - 1e-7, "case {case}: sample closer");
                }
            }
        }
    }

    #[test]
    fn projection_is_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let u = utility(4, 0.0, 10.0);
        for _ in 0..10 {
            let p = SourcePoint::new(
                vec![rng.gen_range(-2.0..8.0)],
                (0..5).map(|_| rng.gen_range(-2.0..3.0)).collect(),
                rng.gen_range(-2.0..12.0),
            );
            let a = project_as(&p, &u, &[8.0], DykstraConfig::default())
                .unwrap()
                .result;
            let b = project_as(&a, &u, &[8.0], DykstraConfig::default())
                .unwrap()
                .result;
            assert!(a.distance(&b) < 1e-8);
        }
    }
}

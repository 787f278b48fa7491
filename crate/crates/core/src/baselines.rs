//! Reference solutions: a centralized primal-dual solver for the relaxation
//! and an exhaustive grid search over path rates for the original problem.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dpda::{auto_step_sizes, StepSizes};
use crate::geometry::{DykstraConfig, GeometryError, SourceProjector};
use crate::moments::{eval_utility, MomentError};
use crate::problem::Instance;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BaselineError {
    #[error(
        "centralized solver stopped after {iterations} iterations with residuals {residuals:?}"
    )]
    NotConverged {
        iterations: usize,
        residuals: SolverResiduals,
        partial: Box<ReferenceSolution>,
    },
    #[error("instance too large for exhaustive search: {0}")]
    TooLarge(String),
    #[error("grid step must be positive, got {0}")]
    BadGridStep(f64),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Moment(#[from] MomentError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CentralConfig {
    pub gamma: f64,
    pub margin: f64,
    pub max_iterations: usize,
    /// Stop when no primal or dual entry moves by more than this.
    pub tol: f64,
    /// Acceptance threshold for the primal feasibility residuals.
    pub feasibility_tol: f64,
    /// Acceptance threshold for complementary slackness.
    pub slackness_tol: f64,
    pub dykstra: DykstraConfig,
}

impl Default for CentralConfig {
    fn default() -> Self {
        CentralConfig {
            gamma: 0.1,
            margin: 0.9,
            max_iterations: 200_000,
            tol: 1e-9,
            feasibility_tol: 1e-6,
            slackness_tol: 1e-5,
            dykstra: DykstraConfig {
                tol: 1e-10,
                ..DykstraConfig::default()
            },
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverResiduals {
    /// `‖Bx‖₂`.
    pub conservation: f64,
    /// `Σ max(Ax - c, 0)`.
    pub capacity: f64,
    /// `Σ |λ_r (A_r x - c_r)|`.
    pub slackness: f64,
    /// Largest entry change over the final iteration.
    pub step: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSolution {
    pub x: Vec<f64>,
    pub lambda: Vec<f64>,
    pub theta: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub residuals: SolverResiduals,
}

/// Solves the relaxation with the primal-dual iteration on global state,
/// keeping the conservation multipliers `θ` explicitly, and returns the last
/// iterate.
pub fn centralized_solve(
    inst: &Instance,
    cfg: &CentralConfig,
) -> Result<ReferenceSolution, BaselineError> {
    let ss = auto_step_sizes(inst, cfg.gamma, cfg.margin);
    centralized_solve_with(inst, &ss, cfg)
}

pub fn centralized_solve_with(
    inst: &Instance,
    ss: &StepSizes,
    cfg: &CentralConfig,
) -> Result<ReferenceSolution, BaselineError> {
    let n = inst.dim();
    let mut projectors: Vec<SourceProjector> = (0..inst.source_count())
        .map(|o| SourceProjector::new(&inst.utilities[o], &inst.source_caps(o), cfg.dykstra))
        .collect::<Result<_, _>>()?;
    let tau: Vec<f64> = (0..n).map(|k| ss.tau_of(inst, k)).collect();
    let fwd = inst.layout.forward_range();
    let mut x = inst.initial_point();
    let mut theta = vec![0.0; inst.b.nrows()];
    let mut lambda = vec![0.0; inst.a.nrows()];
    let mut grad = vec![0.0; n];
    let mut step = f64::INFINITY;
    let mut iterations = 0;
    for it in 1..=cfg.max_iterations {
        iterations = it;
        grad.iter_mut().for_each(|g| *g = 0.0);
        inst.b.add_transpose_mul(&theta, &mut grad);
        inst.a.add_transpose_mul(&lambda, &mut grad);
        let mut next = x.clone();
        for (o, proj) in projectors.iter_mut().enumerate() {
            let blk = inst.layout.block(o);
            let t = ss.tau_source[o];
            for k in blk.rates() {
                next[k] = x[k] - t * grad[k];
            }
            for (k, p) in blk.moments().zip(&inst.utilities[o].coefficients) {
                next[k] = x[k] + t * p;
            }
            let pre = inst.source_point(o, &next);
            let rep = match proj.project(&pre) {
                Ok(rep) => rep,
                Err(GeometryError::MaxIterationsExceeded(rep)) => *rep,
                Err(e) => return Err(e.into()),
            };
            inst.set_source_point(o, &mut next, &rep.result);
        }
        for k in fwd.clone() {
            next[k] = (x[k] - tau[k] * grad[k]).max(0.0);
        }
        let extrapolated: Vec<f64> = next.iter().zip(&x).map(|(a, b)| 2.0 * a - b).collect();
        let bx = inst.b.mul_vec(&extrapolated);
        let ax = inst.a.mul_vec(&extrapolated);
        step = next
            .iter()
            .zip(&x)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        for (t, v) in theta.iter_mut().zip(bx) {
            let new = *t + ss.gamma * v;
            step = step.max((new - *t).abs());
            *t = new;
        }
        for (r, (l, v)) in lambda.iter_mut().zip(ax).enumerate() {
            let new = (*l + ss.kappa[r] * (v - inst.capacities[r])).max(0.0);
            step = step.max((new - *l).abs());
            *l = new;
        }
        x = next;
        if step <= cfg.tol {
            break;
        }
    }
    let residuals = solver_residuals(inst, &x, &lambda, step);
    let sol = ReferenceSolution {
        objective: inst.objective(&x),
        x,
        lambda,
        theta,
        iterations,
        residuals,
    };
    if residuals.conservation > cfg.feasibility_tol
        || residuals.capacity > cfg.feasibility_tol
        || residuals.slackness > cfg.slackness_tol
    {
        return Err(BaselineError::NotConverged {
            iterations,
            residuals,
            partial: Box::new(sol),
        });
    }
    Ok(sol)
}

pub fn solver_residuals(inst: &Instance, x: &[f64], lambda: &[f64], step: f64) -> SolverResiduals {
    let ax = inst.a.mul_vec(x);
    SolverResiduals {
        conservation: inst.conservation_residual(x),
        capacity: inst.capacity_distance(x),
        slackness: ax
            .iter()
            .zip(&inst.capacities)
            .zip(lambda)
            .map(|((v, c), l)| (l * (v - c)).abs())
            .sum(),
        step,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleSolution {
    /// Aggregate rate per source.
    pub rates: Vec<f64>,
    /// Rate per path, per source (paths in [`crate::net::Network::paths`]
    /// order).
    pub path_rates: Vec<Vec<f64>>,
    /// Flattened rate vector (moments and aggregates left at zero).
    pub x: Vec<f64>,
    /// `Σ_s U_s(r_s)`.
    pub objective: f64,
    pub grid_step: f64,
    pub evaluated: u64,
}

pub const MAX_ORACLE_SOURCES: usize = 3;
pub const MAX_ORACLE_PATHS: usize = 2;
pub const MAX_ORACLE_COMBINATIONS: f64 = 5e8;

/// One candidate allocation for a single source.
struct Choice {
    paths: Vec<f64>,
    utility: f64,
}

/// Grid values `lo, lo+h, …` up to `hi`, with `hi` itself always included.
fn grid(lo: f64, hi: f64, h: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut k = 0u64;
    loop {
        let v = lo + k as f64 * h;
        if v >= hi - 1e-12 * hi.abs().max(1.0) {
            break;
        }
        out.push(v);
        k += 1;
    }
    out.push(hi);
    out
}

/// Exhaustive search over per-path rates on a grid of step `h`.
///
/// Every source's aggregate rate ranges over `ξ, ξ+h, …, ζ`; with two
/// paths the first path's share ranges over `0, h, …, r`. Allocations that
/// overload any capacity row or first-hop link are pruned.
pub fn brute_force_nonconvex(inst: &Instance, h: f64) -> Result<OracleSolution, BaselineError> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(BaselineError::BadGridStep(h));
    }
    let ns = inst.source_count();
    if ns > MAX_ORACLE_SOURCES {
        return Err(BaselineError::TooLarge(format!(
            "{ns} sources, at most {MAX_ORACLE_SOURCES}"
        )));
    }
    for o in 0..ns {
        let count = inst.net.path_count(inst.net.source_flow(o));
        if count > MAX_ORACLE_PATHS as u64 {
            return Err(BaselineError::TooLarge(format!(
                "source `{}` has {count} paths, at most {MAX_ORACLE_PATHS}",
                inst.net.node_id(inst.net.sources()[o]),
            )));
        }
    }
    let paths: Vec<Vec<Vec<usize>>> = (0..ns)
        .map(|o| inst.net.paths(inst.net.source_flow(o)))
        .collect();

    // every path as a list of flattened rate variables it loads
    let path_vars: Vec<Vec<Vec<usize>>> = paths
        .iter()
        .enumerate()
        .map(|(o, ps)| {
            let flow = inst.net.source_flow(o);
            ps.iter()
                .map(|links| {
                    let mut at = inst.net.sources()[o];
                    links
                        .iter()
                        .map(|&l| {
                            let k = inst
                                .layout
                                .sent_var(&inst.net, at, l, flow)
                                .expect("path variable");
                            at = inst.net.other_end(l, at);
                            k
                        })
                        .collect()
                })
                .collect()
        })
        .collect();

    // size check before anything is allocated
    let estimate: f64 = inst
        .utilities
        .iter()
        .enumerate()
        .map(|(o, u)| {
            let hi = u.zeta.min(inst.source_caps(o).iter().sum());
            let n = ((hi - u.xi).max(0.0) / h).floor() + 2.0;
            if path_vars[o].len() == 1 {
                n
            } else {
                n * (n + 1.0) / 2.0
            }
        })
        .product();
    if estimate > 2.0 * MAX_ORACLE_COMBINATIONS {
        return Err(BaselineError::TooLarge(format!(
            "about {estimate:.3e} grid combinations"
        )));
    }

    let mut choices: Vec<Vec<Choice>> = Vec::with_capacity(ns);
    for (o, u) in inst.utilities.iter().enumerate() {
        let hi = u.zeta.min(inst.source_caps(o).iter().sum());
        let mut cs = Vec::new();
        if hi + 1e-12 >= u.xi {
            for r in grid(u.xi, hi.max(u.xi), h) {
                let utility = eval_utility(u, r)?;
                if path_vars[o].len() == 1 {
                    cs.push(Choice {
                        paths: vec![r],
                        utility,
                    });
                } else {
                    for a in grid(0.0, r, h) {
                        cs.push(Choice {
                            paths: vec![a, r - a],
                            utility,
                        });
                    }
                }
            }
        }
        choices.push(cs);
    }
    let combos: f64 = choices.iter().map(|c| c.len() as f64).product();
    if combos > MAX_ORACLE_COMBINATIONS {
        return Err(BaselineError::TooLarge(format!(
            "{combos:.3e} grid combinations"
        )));
    }

    let search = Search {
        inst,
        path_vars: &path_vars,
        choices: &choices,
    };
    let first = choices.first().map_or(0, Vec::len);
    let best = (0..first)
        .into_par_iter()
        .map(|c0| {
            let mut x = vec![0.0; inst.dim()];
            let mut pick = vec![0usize; ns];
            let mut best = Best::default();
            if search.place(0, c0, &mut x, 1.0) {
                pick[0] = c0;
                search.dfs(1, &mut x, &mut pick, choices[0][c0].utility, &mut best);
            }
            best
        })
        .reduce(Best::default, Best::better);

    let pick = best
        .pick
        .ok_or_else(|| BaselineError::TooLarge("no feasible grid point".into()))?;
    let mut x = vec![0.0; inst.dim()];
    for (o, &c) in pick.iter().enumerate() {
        search.place(o, c, &mut x, 1.0);
    }
    Ok(OracleSolution {
        rates: pick
            .iter()
            .enumerate()
            .map(|(o, &c)| choices[o][c].paths.iter().sum())
            .collect(),
        path_rates: pick
            .iter()
            .enumerate()
            .map(|(o, &c)| choices[o][c].paths.clone())
            .collect(),
        x,
        objective: best.objective,
        grid_step: h,
        evaluated: best.evaluated,
    })
}

#[derive(Clone, Debug)]
struct Best {
    objective: f64,
    pick: Option<Vec<usize>>,
    evaluated: u64,
}

impl Default for Best {
    fn default() -> Self {
        Best {
            objective: f64::NEG_INFINITY,
            pick: None,
            evaluated: 0,
        }
    }
}

impl Best {
    /// Higher objective wins; ties go to the lexicographically smaller pick
    /// so the result does not depend on scheduling.
    fn better(a: Best, b: Best) -> Best {
        let evaluated = a.evaluated + b.evaluated;
        let a_wins = match (&a.pick, &b.pick) {
            (None, _) => false,
            (_, None) => true,
            (Some(pa), Some(pb)) => {
                a.objective > b.objective || (a.objective == b.objective && pa < pb)
            }
        };
        let mut w = if a_wins { a } else { b };
        w.evaluated = evaluated;
        w
    }
}

struct Search<'a> {
    inst: &'a Instance,
    path_vars: &'a [Vec<Vec<usize>>],
    choices: &'a [Vec<Choice>],
}

impl Search<'_> {
    /// Adds (`sign = 1`) or removes (`sign = -1`) choice `c` of source `o`;
    /// when adding, reports whether every touched constraint still holds.
    fn place(&self, o: usize, c: usize, x: &mut [f64], sign: f64) -> bool {
        for (vars, &rate) in self.path_vars[o].iter().zip(&self.choices[o][c].paths) {
            for &k in vars {
                x[k] += sign * rate;
            }
        }
        if sign < 0.0 {
            return true;
        }
        self.feasible(o, x)
    }

    fn feasible(&self, o: usize, x: &[f64]) -> bool {
        let inst = self.inst;
        let eps = 1e-9;
        for vars in &self.path_vars[o] {
            let first = vars[0];
            let (_, link) = match inst.layout.var(first) {
                crate::net::Var::SourceRate { source, link } => (source, link),
                _ => unreachable!("paths start at a source"),
            };
            if x[first] > inst.net.capacity(link) + eps {
                return false;
            }
            for &k in vars {
                for &(r, _) in inst.a_col(k) {
                    if inst.a.row_dot(r, x) > inst.capacities[r] + eps {
                        return false;
                    }
                }
            }
        }
        true
    }

    fn dfs(&self, o: usize, x: &mut [f64], pick: &mut [usize], acc: f64, best: &mut Best) {
        if o == self.choices.len() {
            best.evaluated += 1;
            let cand = Best {
                objective: acc,
                pick: Some(pick.to_vec()),
                evaluated: 0,
            };
            let prev = std::mem::take(best);
            *best = Best::better(prev, cand);
            return;
        }
        for c in 0..self.choices[o].len() {
            if self.place(o, c, x, 1.0) {
                pick[o] = c;
                self.dfs(o + 1, x, pick, acc + self.choices[o][c].utility, best);
            }
            self.place(o, c, x, -1.0);
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub relaxation: f64,
    pub oracle: f64,
    /// `relaxation - oracle`.
    pub gap: f64,
    /// `gap ≥ -tol`: the relaxation bounds the original problem from above.
    pub upper_bound_holds: bool,
}

pub fn relaxation_gap(
    reference: &ReferenceSolution,
    oracle: &OracleSolution,
    tol: f64,
) -> GapReport {
    let gap = reference.objective - oracle.objective;
    GapReport {
        relaxation: reference.objective,
        oracle: oracle.objective,
        gap,
        upper_bound_holds: gap >= -tol,
    }
}

//! Step sizes and their validity conditions.

use serde::{Deserialize, Serialize};

use crate::net::{omega, Var};
use crate::problem::Instance;

const REL_TOL: f64 = 1e-12;

/// Step sizes of the primal-dual iteration. Forwarding entries are indexed
/// by position inside the forwarding part of the layout, prices by capacity
/// row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepSizes {
    pub gamma: f64,
    pub tau_source: Vec<f64>,
    pub d_source: Vec<f64>,
    pub tau: Vec<f64>,
    pub d: Vec<f64>,
    pub kappa: Vec<f64>,
}

impl StepSizes {
    /// `τ` for flattened variable `k`.
    pub fn tau_of(&self, inst: &Instance, k: usize) -> f64 {
        match inst.layout.var(k) {
            Var::SourceRate { source, .. }
            | Var::Moment { source, .. }
            | Var::Aggregate { source } => self.tau_source[source],
            Var::Forward { .. } => self.tau[k - inst.layout.forward_range().start],
        }
    }

    pub fn d_of(&self, inst: &Instance, k: usize) -> f64 {
        match inst.layout.var(k) {
            Var::SourceRate { source, .. }
            | Var::Moment { source, .. }
            | Var::Aggregate { source } => self.d_source[source],
            Var::Forward { .. } => self.d[k - inst.layout.forward_range().start],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Condition {
    /// `1/τ_s - γ(4 + d_s) ≥ 0`.
    Source,
    /// `(1/κ_{b,l})(1/τ_{i,b,l} - γ(4 + d_{i,b,l})) ≥ m_l + 1`.
    Forward,
    /// `ω_v + d_v ≥ Σ_{w≠v} |(BᵀB)_{vw}|`: the diagonal shift covers the
    /// off-diagonal mass of `BᵀB`.
    Gershgorin,
    /// `1/τ_v - γ(4 + d_v) ≥ Σ_{r∋v} κ_r n_r` with `n_r` the number of
    /// variables in capacity row `r`.
    Coupling,
    /// A step size is not a positive finite number.
    Positive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub condition: Condition,
    /// Flattened variable index (or capacity row for `Positive` on κ).
    pub index: usize,
    pub lhs: f64,
    pub rhs: f64,
}

/// Off-diagonal row sums of `|BᵀB|`, one per variable.
pub fn gram_off_diagonal(inst: &Instance) -> Vec<f64> {
    let mut out = vec![0.0; inst.dim()];
    for (k, slot) in out.iter_mut().enumerate() {
        let mut acc = std::collections::BTreeMap::<usize, f64>::new();
        for &(r, bv) in inst.b_col(k) {
            for &(w, bw) in &inst.b.rows[r] {
                if w != k {
                    *acc.entry(w).or_default() += bv * bw;
                }
            }
        }
        *slot = acc.values().map(|v| v.abs()).sum();
    }
    out
}

/// `Σ_{r∋k} κ_r n_r` for variable `k`.
pub fn coupling_load(inst: &Instance, kappa: &[f64], k: usize) -> f64 {
    inst.a_col(k)
        .iter()
        .map(|&(r, _)| kappa[r] * inst.a.rows[r].len() as f64)
        .sum()
}

/// `m_l` of the link carried by forwarding variable `k`.
fn link_of(inst: &Instance, k: usize) -> Option<(usize, usize)> {
    match inst.layout.var(k) {
        Var::Forward { node, link, .. } => Some((node, link)),
        _ => None,
    }
}

fn cap_row(inst: &Instance, node: usize, link: usize) -> usize {
    inst.cap_rows
        .iter()
        .position(|&(b, l)| b == node && l == link)
        .expect("every forwarding variable has a capacity row")
}

fn geq(lhs: f64, rhs: f64) -> bool {
    lhs >= rhs - REL_TOL * rhs.abs().max(1.0)
}

/// Checks the step-size conditions. Returns every violation found.
///
/// Besides the per-source and per-forwarding-variable bounds, two further
/// conditions are checked because the bounds alone do not make the
/// saddle-point operator positive semidefinite when a variable enters
/// several capacity rows or conservation rows share many variables.
pub fn validate_step_sizes(inst: &Instance, ss: &StepSizes) -> Result<(), Vec<Violation>> {
    let mut out = Vec::new();
    let fwd = inst.layout.forward_range();
    let shape_ok = ss.tau_source.len() == inst.source_count()
        && ss.d_source.len() == inst.source_count()
        && ss.tau.len() == fwd.len()
        && ss.d.len() == fwd.len()
        && ss.kappa.len() == inst.cap_rows.len();
    if !shape_ok {
        out.push(Violation {
            condition: Condition::Positive,
            index: usize::MAX,
            lhs: f64::NAN,
            rhs: f64::NAN,
        });
        return Err(out);
    }
    let positive = |v: f64| v > 0.0 && v.is_finite();
    if !positive(ss.gamma) {
        out.push(Violation {
            condition: Condition::Positive,
            index: usize::MAX,
            lhs: ss.gamma,
            rhs: 0.0,
        });
        return Err(out);
    }
    for (r, &k) in ss.kappa.iter().enumerate() {
        if !positive(k) {
            out.push(Violation {
                condition: Condition::Positive,
                index: r,
                lhs: k,
                rhs: 0.0,
            });
        }
    }
    let gram = gram_off_diagonal(inst);
    for (o, blk) in inst.layout.blocks().iter().enumerate() {
        let (tau, d) = (ss.tau_source[o], ss.d_source[o]);
        if !positive(tau) || !positive(d) {
            out.push(Violation {
                condition: Condition::Positive,
                index: blk.start,
                lhs: tau.min(d),
                rhs: 0.0,
            });
            continue;
        }
        let lhs = 1.0 / tau - ss.gamma * (4.0 + d);
        if !geq(lhs, 0.0) {
            out.push(Violation {
                condition: Condition::Source,
                index: blk.start,
                lhs,
                rhs: 0.0,
            });
        }
        for k in blk.rates() {
            extra_checks(inst, ss, &gram, k, tau, d, &mut out);
        }
    }
    for k in fwd.clone() {
        let (tau, d) = (ss.tau[k - fwd.start], ss.d[k - fwd.start]);
        if !positive(tau) || !positive(d) {
            out.push(Violation {
                condition: Condition::Positive,
                index: k,
                lhs: tau.min(d),
                rhs: 0.0,
            });
            continue;
        }
        let (b, l) = link_of(inst, k).expect("forwarding variable");
        let kappa = ss.kappa[cap_row(inst, b, l)];
        let lhs = (1.0 / tau - ss.gamma * (4.0 + d)) / kappa;
        let rhs = inst.net.flows_on_link(l) as f64 + 1.0;
        if !geq(lhs, rhs) {
            out.push(Violation {
                condition: Condition::Forward,
                index: k,
                lhs,
                rhs,
            });
        }
        extra_checks(inst, ss, &gram, k, tau, d, &mut out);
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

fn extra_checks(
    inst: &Instance,
    ss: &StepSizes,
    gram: &[f64],
    k: usize,
    tau: f64,
    d: f64,
    out: &mut Vec<Violation>,
) {
    let w = omega(&inst.net, &inst.layout, k);
    if !geq(w + d, gram[k]) {
        out.push(Violation {
            condition: Condition::Gershgorin,
            index: k,
            lhs: w + d,
            rhs: gram[k],
        });
    }
    let lhs = 1.0 / tau - ss.gamma * (4.0 + d);
    let rhs = coupling_load(inst, &ss.kappa, k);
    if !geq(lhs, rhs) {
        out.push(Violation {
            condition: Condition::Coupling,
            index: k,
            lhs,
            rhs,
        });
    }
}

/// Step sizes from local information only: `κ = 1`, the smallest diagonal
/// shift `d ≥ 4` that covers the Gram off-diagonal mass, and `τ` at
/// `margin` times the boundary of every condition.
pub fn auto_step_sizes(inst: &Instance, gamma: f64, margin: f64) -> StepSizes {
    assert!(
        gamma > 0.0 && margin > 0.0 && margin <= 1.0,
        "need γ > 0 and margin in (0, 1]"
    );
    let gram = gram_off_diagonal(inst);
    let kappa = vec![1.0; inst.cap_rows.len()];
    let shift = |k: usize| (gram[k] - omega(&inst.net, &inst.layout, k)).max(4.0);
    let mut tau_source = Vec::new();
    let mut d_source = Vec::new();
    for blk in inst.layout.blocks() {
        let d = blk.rates().map(shift).fold(4.0, f64::max);
        let load = blk
            .rates()
            .map(|k| coupling_load(inst, &kappa, k))
            .fold(0.0, f64::max);
        d_source.push(d);
        tau_source.push(margin / (gamma * (4.0 + d) + load));
    }
    let mut tau = Vec::new();
    let mut d = Vec::new();
    for k in inst.layout.forward_range() {
        let dk = shift(k);
        let (b, l) = link_of(inst, k).expect("forwarding variable");
        let own = kappa[cap_row(inst, b, l)] * (inst.net.flows_on_link(l) as f64 + 1.0);
        let load = coupling_load(inst, &kappa, k).max(own);
        d.push(dk);
        tau.push(margin / (gamma * (4.0 + dk) + load));
    }
    StepSizes {
        gamma,
        tau_source,
        d_source,
        tau,
        d,
        kappa,
    }
}

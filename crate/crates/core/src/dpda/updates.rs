//! Node-local update rules. Each function works on the values a node holds
//! or has read from its neighbours; the engine does the bookkeeping.

use crate::geometry::{GeometryError, ProjectionReport, SourcePoint, SourceProjector};

/// Gradient step of a source before projection: rates move against their
/// coupling term `γ(Bᵀu)_l + (Aᵀλ)_l`, moments move along the utility
/// coefficients, the aggregate rate is passed through.
pub fn source_pre_projection(
    current: &SourcePoint,
    coupling: &[f64],
    tau: f64,
    coefficients: &[f64],
) -> SourcePoint {
    SourcePoint {
        rates: current
            .rates
            .iter()
            .zip(coupling)
            .map(|(x, g)| x - tau * g)
            .collect(),
        moments: current
            .moments
            .iter()
            .zip(coefficients)
            .map(|(m, p)| m + tau * p)
            .collect(),
        aggregate: current.aggregate,
    }
}

/// Source step: gradient step followed by the projection onto `A_s`.
/// A projection that stops at its cycle cap still yields its last iterate;
/// the flag in the second slot reports it.
pub fn source_update(
    current: &SourcePoint,
    coupling: &[f64],
    tau: f64,
    coefficients: &[f64],
    projector: &mut SourceProjector,
) -> Result<(ProjectionReport, bool), GeometryError> {
    let pre = source_pre_projection(current, coupling, tau, coefficients);
    match projector.project(&pre) {
        Ok(rep) => Ok((rep, false)),
        Err(GeometryError::MaxIterationsExceeded(rep)) => Ok((*rep, true)),
        Err(e) => Err(e),
    }
}

/// Forwarding step `P_{R+}(x - τ g)` with `g = Σ λ + γ(u_own - u_next)`.
pub fn forward_update(x: f64, tau: f64, coupling: f64) -> f64 {
    (x - tau * coupling).max(0.0)
}

/// Price step `P_{R+}(λ + κ(2·load_new - load_old - c))`.
pub fn price_update(lambda: f64, kappa: f64, load_new: f64, load_old: f64, capacity: f64) -> f64 {
    (lambda + kappa * (2.0 * load_new - load_old - capacity)).max(0.0)
}

/// `z ← z - x^k + 2x^{k+1}`.
pub fn z_update(z: f64, x_old: f64, x_new: f64) -> f64 {
    z - x_old + 2.0 * x_new
}

/// `u_{i,b} = Σ_{out} z - Σ_{in} z`, given a conservation row's entries.
pub fn divergence(entries: impl IntoIterator<Item = (f64, f64)>) -> f64 {
    entries.into_iter().map(|(coef, z)| coef * z).sum()
}

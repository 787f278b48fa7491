//! Non-concave network utility maximization through a truncated moment
//! relaxation, solved by a distributed primal-dual iteration.

pub mod baselines;
pub mod dpda;
pub mod geometry;
pub mod harness;
pub mod moments;
pub mod net;
pub mod problem;

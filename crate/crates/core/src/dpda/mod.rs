//! Distributed primal-dual iteration: step sizes, node-local updates, the
//! round-synchronous engine and the step-size certificate.

mod certificate;
mod engine;
mod steps;
pub mod updates;

pub use certificate::{
    assemble_q, q_certificate, schur_complement, Certificate, CertificateError, DEFAULT_MAX_DIM,
};
pub use engine::{
    implied_theta, residuals, run, ExecutionOrder, MessageLog, Read, ResidualRow, RunError,
    RunOptions, RunTrace, State, TraceRow, VarRef,
};
pub use steps::{
    auto_step_sizes, coupling_load, gram_off_diagonal, validate_step_sizes, Condition, StepSizes,
    Violation,
};

//! Dense linear algebra and the convex projections used by the source update.

mod cone;
mod eigen;
mod matrix;
pub mod sets;
mod source;

use thiserror::Error;

pub use cone::{project_psd, MomentConeProjector, MomentMap};
pub use eigen::{eig_sym, min_eigenvalue, SymmetricEigen};
pub use matrix::{cholesky_solve, Matrix};
pub use sets::{project_hypograph, project_hypographs, project_xs, project_xs_capped};
pub use source::{
    project_as, source_violation, DykstraConfig, ProjectionReport, SourcePoint, SourceProjector,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("matrix is not symmetric (asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("no convergence after {0} iterations")]
    NoConvergence(usize),
    #[error("root bracket failed")]
    NoRoot,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("projection stopped at the cycle cap with violation {:e}", .0.max_constraint_violation)]
    MaxIterationsExceeded(Box<ProjectionReport>),
}

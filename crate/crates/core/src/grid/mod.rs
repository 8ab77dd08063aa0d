//! Grid model: case files, DC susceptance, the reduced linear dynamics, and
//! the eigenvalue stability screen.

mod builtin;
mod case;
mod dynamics;
mod eigen;
mod params;
mod stability;
mod susceptance;

pub use builtin::CaseName;
pub use case::{parse_case, Branch, BusTopology};
pub use dynamics::{assemble_dynamics, GridModel, StateSpaceModel};
pub use eigen::{eigen_residual, eigenvalues, eigenvector};
pub use params::{CaseParams, DynamicParams};
pub use stability::{classify_stability, StabilityClass, StabilityReport, SEMI_UNSTABLE_MAX_DAMPING, SEMI_UNSTABLE_WN_RANGE, UNSTABLE_REAL_TOL};
pub use susceptance::{build_susceptance, susceptance_matrix, SusceptancePartition};

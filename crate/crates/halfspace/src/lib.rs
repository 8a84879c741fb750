//! Solver library for one-dimensional linear half-space kinetic equations
//! (linearized BGK and isotropic neutron transport) on `x in [0, inf)` with
//! incoming data at `x = 0`.
//!
//! The method is a damped spectral Galerkin scheme: a damping perturbation
//! makes the collision operator strictly coercive, the damped equation is
//! reduced to a generalized symmetric eigenvalue problem over an even/odd
//! velocity basis, and the solution of the original (undamped) equation plus
//! its end-state at infinity are then recovered algebraically from a handful
//! of auxiliary damped solves.
//!
//! Module map:
//! - [`orthopoly`]: recurrence tables and Gauss rules for shifted half-range
//!   Hermite and shifted Legendre weights.
//! - [`basis`]: the `2N+1` even/odd extended orthonormal velocity basis.
//! - [`model`]: the kinetic models, their null spaces, and the damped operator.
//! - [`assembly`]: Galerkin matrices, boundary rows, incoming data, flux moments.
//! - [`spectral`]: the generalized eigensolve and the damped half-space solve.
//! - [`recovery`]: auxiliary solves and recovery of the undamped solution.
//! - [`postprocess`]: coefficient filtering, extrapolation length, the
//!   Chandrasekhar H-function oracle, and profile sampling.
//! - [`oracle`]: independent verification quadratures used by tests and the
//!   self-test suites.
//! - [`selftest`]: desk-scale invariant suites shared by the CLI self-test.

mod extended;

pub mod assembly;
pub mod basis;
pub mod model;
pub mod oracle;
pub mod orthopoly;
pub mod postprocess;
pub mod recovery;
pub mod selftest;
pub mod spectral;

pub use assembly::{AssemblyError, BuiltinPhi, GalerkinSystem, IncomingData};
pub use basis::{BasisError, BasisKind, BasisSet, ParityPair};
pub use model::{DampedOperator, KineticModel, ModelError, ModelKind, NullSpaceDecomposition};
pub use orthopoly::{OrthoError, PrecisionMode, QuadratureRule, RecurrenceTable};
pub use postprocess::{FilterKind, FilterSpec, HFunctionTable, PostprocessError};
pub use recovery::{AuxiliarySet, RecoveredSolution, RecoveryError};
pub use spectral::{DampedSolution, EigenDecomposition, HalfSpaceSolver, SpectralError};

/// Any error the solver pipeline can produce.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Ortho(#[from] OrthoError),
    #[error(transparent)]
    Basis(#[from] BasisError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Recovery(#[from] RecoveryError),
    #[error(transparent)]
    Postprocess(#[from] PostprocessError),
}

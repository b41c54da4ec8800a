//! Quantum-limited linewidth of a single-mode laser, computed two ways.
//!
//! The field mode is described by its density matrix in the photon-number
//! basis. Gain (a beam of excited two-level atoms crossing the cavity) and
//! loss (a thermal bath at occupation `n_b`) drive two decoupled sectors:
//!
//! * the populations `p_n` (diagonal), whose stationary point fixes the
//!   photon statistics, and
//! * the first off-diagonal coefficients `c_n = sigma_{n-1,n}`, whose slowest
//!   decay rate is half the full width at half maximum of the emission line.
//!
//! Both sectors reduce to real tridiagonal generators ([`kernels`]). The
//! stationary state follows from detailed balance ([`steady`]); the two-time
//! field correlation `g(t)` is obtained either by stiff time integration or
//! by an inverse-iteration eigenvalue solve ([`dynamics`]); the closed-form
//! linewidth expressions and their validity region live in [`analytics`].
//! [`report`] chains the pieces into a single comparison record per operating
//! point and [`config`] parses the plain-text run configuration.

pub mod analytics;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod kernels;
pub mod model;
pub mod report;
pub mod steady;

pub use error::QlwError;
pub use kernels::{GainForm, Sector, TridiagGenerator};
pub use model::{
    CorrelationTrace, LaserParams, OffDiagState, PhotonDistribution, TraceMethod, Truncation,
    TruncationSpec,
};
pub use report::{LinewidthReport, PipelineOptions};

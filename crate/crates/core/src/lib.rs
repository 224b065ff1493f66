//! Phase-averaged displacement sensing in a truncated Fock space.
//!
//! A displacement `D(alpha, phi)` of unknown phase `phi ~ p(phi)` acts on a
//! probe state; the crate computes the resulting channel, quantum and
//! classical Fisher information for `alpha`, measurement statistics,
//! Monte-Carlo estimation experiments and Wigner functions.

pub mod channel;
pub mod error;
pub mod estimation;
pub mod fisher;
pub mod fock;
pub mod measurement;
pub mod special;
pub mod states;
pub mod wigner;

pub use channel::{apply_channel, displacement, ChannelSpec, Displacer, PhaseDistribution};
pub use error::{Error, Result};
pub use fock::{DensityOperator, FockDim, Operator, StateVector, C64};
pub use states::{build_state, QuantumState, StateSpec};

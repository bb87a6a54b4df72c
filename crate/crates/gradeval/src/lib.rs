//! Desk-scale simulation and verification of a gradient-based quantum
//! algorithm that estimates M expectation values <psi|O_j|psi> at once.
//!
//! The crate is organized bottom-up:
//!
//! - [`simcore`]: dense state-vector engine (registers, gates, shifted-grid
//!   Fourier transform, sampling, seeded randomness).
//! - [`operators`]: observables with norm bounds and their evolution
//!   exponentials.
//! - [`oracles`]: state-preparation oracle, Hadamard-test circuit, the
//!   index-controlled probability oracle, the (idealized) phase oracle, and
//!   the resource ledger.
//! - [`gradient`]: parameter planning, central-difference coefficients, the
//!   Fourier gradient-read-out routine, decode, and median aggregation.
//! - [`pipelines`]: end-to-end estimators for expectation values, dynamic
//!   correlation functions, and the sign-matrix fixture.
//! - [`costmodel`]: closed-form query/space/time cost calculators.

pub mod costmodel;
pub mod gradient;
pub mod operators;
pub mod oracles;
pub mod pipelines;
pub mod simcore;

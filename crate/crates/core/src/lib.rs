//! Finite-dimensional toolkit for comonotone inclusion problems `0 in A(x)`.
//!
//! The crate represents operators through their resolvent, provides the
//! Yosida regularization and the operator-calculus checks that go with it,
//! implements an inertial discrete scheme with extrapolated regularization
//! evaluations alongside three anchored baselines, integrates the matching
//! second-order dynamics with an adaptive embedded Runge-Kutta pair, and
//! ships convergence-rate diagnostics (anchored energies, tail log-log
//! slopes, summability summaries) for both the discrete and continuous
//! sides.
//!
//! Entry points:
//!
//! * [`problems`] — shipped instances and seeded generators.
//! * [`operator`] — resolvent, regularization, modulus, property checks.
//! * [`algo`] — parameter validation, single steps, and [`algo::run`].
//! * [`ode`] — vector fields and [`ode::integrate`].
//! * [`diagnostics`] — energies and rate reports over finished runs.

pub mod algo;
pub mod diagnostics;
pub mod error;
pub mod linalg;
pub mod ode;
pub mod operator;
pub mod problems;

pub use error::{Error, Result};
pub use linalg::{LinearMap, Vector};

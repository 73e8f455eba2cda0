//! Derivative-free global optimization driven by state-dependent noise.
//!
//! The iterate performs a random walk on a periodic hypercube whose step
//! variance shrinks with the objective value, so the walk anneals itself
//! toward low objective regions without ever comparing function values or
//! requiring gradients. The crate bundles three layers:
//!
//! * [`optimizer`] — the iteration kernels (pure noise-driven, and a
//!   gradient-assisted variant using secant or analytic gradients) together
//!   with the variance policies in [`noise`] and the benchmark landscapes in
//!   [`objective`];
//! * [`ensemble`] — a deterministic, parallel Monte-Carlo harness producing
//!   convergence-probability curves, algebraic-rate fits, basin statistics,
//!   and policy comparisons;
//! * [`fp`] — a conservative finite-difference solver for the associated
//!   degenerate diffusion equation on the same periodic domain, with
//!   equilibrium, partition-constant, concentration, and decay diagnostics.
//!
//! Everything is bit-reproducible: each run owns a counter-seeded RNG stream
//! derived from a master seed and run index (see [`seed`]), so ensembles give
//! identical results under any parallel schedule.

pub mod domain;
pub mod ensemble;
pub mod error;
pub mod fp;
pub mod noise;
pub mod objective;
pub mod optimizer;
pub mod seed;
pub mod stats;

pub use domain::DomainSpec;
pub use error::{Error, Result};
pub use objective::Objective;

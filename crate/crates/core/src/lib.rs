//! Numerical laboratory for one-dimensional Schrödinger operators
//! `H = -d²/dx² + U + V_per + V_ω` with a background potential `U`, a
//! 1-periodic potential `V_per` and an alloy-type random potential
//! `V_ω(x) = Σ_k q_k f(x - k)`.
//!
//! The crate is organised bottom-up:
//!
//! * [`potentials`] describes and samples the potential ingredients.
//! * [`discretize`] assembles finite-difference Hamiltonians on boxes with
//!   Dirichlet or Neumann ends.
//! * [`eigencount`] counts eigenvalues by Sturm sequences and extracts a few
//!   eigenpairs.
//! * [`bands`] computes band spectra of periodic operators from the Floquet
//!   discriminant, and [`spectra`] combines them into essential-spectrum
//!   predictions.
//! * [`ids`] estimates the integrated density of states and checks
//!   Dirichlet–Neumann bracketing.
//! * [`localization`] measures Lyapunov exponents and eigenfunction decay.
//! * [`experiment`] runs reproducible, file-producing experiments.

pub mod bands;
pub mod discretize;
pub mod eigencount;
mod error;
pub mod experiment;
pub mod ids;
pub mod localization;
pub mod output;
pub mod potentials;
pub mod seeding;
pub mod spectra;

pub use error::{Error, Result};

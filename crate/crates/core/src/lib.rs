//! Option pricing under stochastic-volatility models with jumps, using a
//! local weak-form meshless scheme.
//!
//! The pricing equation is a two-dimensional partial integro-differential
//! equation in asset price and instantaneous variance. It is discretized on
//! a sinh-stretched tensor grid with radial point interpolation (RPIM) shape
//! functions built from Wendland compactly supported kernels, integrated over
//! circular sub-domains with a Heaviside test function, and marched backward
//! in time with an IMEX scheme that treats the nonlocal jump integral
//! explicitly. American prices are obtained by Richardson extrapolation of
//! Bermudan prices.
//!
//! The crate ships three front doors:
//!
//! * the library API ([`solver::european_solve`], [`solver::bermudan_solve`],
//!   [`solver::richardson_american`]),
//! * independent oracles for validation ([`validation`]),
//! * a batch CLI (`meshless-pricer`) driven by key=value run configs.

pub mod assembly;
pub mod cli;
pub mod error;
pub mod models;
pub mod quad;
pub mod rbf;
pub mod solver;
pub mod transform;
pub mod validation;

pub use error::PricerError;
pub use models::{JumpLaw, ModelKind, ModelSpec, OptionRight, OptionStyle, Payoff};
pub use transform::{NodeGrid, StretchParams};

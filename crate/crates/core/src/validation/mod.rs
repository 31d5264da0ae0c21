//! Independent oracles and the reference-price registry: the Heston
//! semi-closed form, Monte Carlo simulation of the jump models, and the
//! published reference tables the acceptance runs compare against.

pub mod heston;
pub mod mc;
pub mod registry;

pub use heston::{black_scholes, heston_european};
pub use mc::{mc_price, McConfig};
pub use registry::{reference_registry, ReferenceTable, TestCase};

//! Poisson–Dirichlet machinery and Monte Carlo checks of Billingsley-type
//! limit theorems for prime factorizations.
//!
//! - [`pdcore`]: GEM(θ) and PD(θ) samplers, ranking, size-biased
//!   permutation, Dickman's function.
//! - [`intensity`]: interval families and multi-intensity estimates
//!   `E ∏ |A ∩ I_i|`, their lower bounds and the PD(θ) densities.
//! - [`arith`]: sieves, 64-bit factorization, Mertens sums, Ω/ω counts,
//!   Selberg–Delange main terms.
//! - [`semigroups`]: normed arithmetic semigroups with integer norms.
//! - [`experiments`]: end-to-end Monte Carlo runs with deterministic
//!   parallel sharding and CSV/JSON reports.

pub mod arith;
pub mod error;
pub mod experiments;
pub mod intensity;
pub mod pdcore;
pub mod rng;
pub mod semigroups;
pub mod special;

pub use error::{Error, Result};
pub use pdcore::Theta;

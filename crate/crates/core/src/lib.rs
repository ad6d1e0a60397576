//! Large deviations of empirical neighbourhood measures of colored sparse
//! random graphs.
//!
//! The crate is organised around the objects a simulation or exact
//! computation touches:
//!
//! - [`measures`]: symbol, pair, neighbourhood and degree measures, the
//!   projections `Δ = (Δ₁, Δ₂)`, total variation, relative entropy and the
//!   product-Poisson reference measure.
//! - [`samplers`]: the symbolled graph, the graph conditioned on its empirical
//!   symbol and pair measures, the random allocation of colored balls into
//!   colored bins, and the coupling between the last two.
//! - [`types`]: exact (big rational) type-class probabilities of the
//!   allocation model together with a brute-force oracle.
//! - [`rates`]: rate functions for neighbourhood measures, degree measures and
//!   the proportion of isolated vertices.
//! - [`validate`]: Monte Carlo decay-rate estimation.
//!
//! Batch work (Monte Carlo loops, the brute-force oracle) runs on rayon when the
//! `parallel` feature is enabled and falls back to a sequential loop otherwise;
//! outputs are identical either way.

pub mod error;
pub mod exec;
pub mod ext;
pub mod measures;
pub mod rates;
pub mod rng;
pub mod samplers;
pub mod types;
pub mod validate;

pub use error::{Error, Result};
pub use exec::Execution;
pub use ext::ExtReal;

//! Exact entanglement analysis of feed-forward neural quantum states.
//!
//! Networks are represented as computation graphs over `n` spins, reduced to
//! a residual function of at most `k + 1` affine features, materialized as
//! dense statevectors, and compared against polynomial auxiliary states and
//! the closed-form references in [`analytic`].

pub mod activations;
pub mod analytic;
pub mod ansatz;
pub mod approx;
pub mod entanglement;
pub mod error;
pub mod experiments;
pub mod graph;
pub mod rng;
pub mod spin;
pub mod statevector;

pub use error::{NqsError, NqsResult};
pub use num_complex::Complex64 as C64;

//! Spectral interventions in markets with noisy demand estimates.
//!
//! A market state is a normalized Slutsky matrix `D` (symmetric, negative
//! semidefinite, `-1` diagonal) and status-quo quantities `q0`. A per-unit
//! subsidy vector `sigma` moves prices by `(I - D) p_dot = -sigma`, and its
//! first-order effect on consumer, producer and total surplus decomposes over
//! the eigenvectors of `D`. An authority that sees only a noisy signal of
//! `(D, q0)` can still target the strong eigen-directions, which survive
//! the noise.


pub mod config;
pub mod error;
pub mod generators;
pub mod harness;
pub mod io;
pub mod market;
pub mod rng;
pub mod rules;
pub mod signal;
pub mod spectral;

pub use error::{Error, Result};
pub use market::{Intervention, MarketState, SurplusReport};
pub use signal::{NoiseConfig, Signal};
pub use spectral::{decompose, SpectralDecomposition};

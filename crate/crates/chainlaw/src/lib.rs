//! Analysis toolkit for nonhomogeneous Markov chains on finite windows.
//!
//! The library answers two families of questions about a time-indexed
//! sequence of stochastic matrices:
//!
//! - **Tail events.** For an event decided in the far future (absorption in
//!   a target class, or a terminal seed of conditional probabilities), the
//!   [`tail`] module runs the backward harmonic recursion
//!   `h_n = P_n h_{n+1}`, splits each state space into low/middle/high bands
//!   by the conditional probability `h_n(i)`, and tracks the exact band
//!   probabilities. The middle band's probability vanishing is the numeric
//!   face of the zero-one law; [`montecarlo`] cross-checks it empirically
//!   with reproducible trajectory simulation.
//! - **Entrance laws.** For chains indexed by negative time, the
//!   [`entrance`] module approximates the reachable simplex image
//!   `Delta(s, t)` by the rows of backward products, certifies uniqueness of
//!   the law at a time via hull-diameter decay, and constructs anchored
//!   entrance laws with an honest sensitivity bound. The [`countable`]
//!   module extends the machinery to countable state spaces through row
//!   generators, tightness certificates, and certified truncation.
//!
//! The `chainlaw` binary drives the same analyses from JSON chain
//! specifications and writes CSV/JSON reports; see the crate README.

pub mod algebra;
pub mod cli;
pub mod countable;
pub mod entrance;
mod error;
pub mod model;
pub mod montecarlo;
pub mod spec;
pub mod tail;

pub use error::{Error, Result};
pub use model::{
    delta_distribution, push_forward, total_variation, validate_chain, ChainModel, Distribution,
    StochasticMatrix, TimeIndex, Violation, DEFAULT_TOL_STOCHASTIC,
};

//! Temperature-compensated picoampere current reference modelling.
//!
//! The crate models a proportional-to-absolute-temperature-cancelling
//! current reference built around a subthreshold MOSFET pair whose body
//! bias is generated by a two-transistor (2T) voltage generator. It offers
//! device equations, DC operating-point solvers for both the conventional
//! and the body-biased topology, temperature/supply sweeps, Monte Carlo
//! variability and trim-code search.

// `!(x > 0.0)` style guards are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod circuits;
pub mod cli;
pub mod devmodel;
pub mod error;
pub mod solver;
pub mod techcard;
pub mod trimming;
pub mod variability;

pub use circuits::{solve_pcr, CircuitOptions, OperatingPoint, Topology};
pub use error::{Error, Result};
pub use solver::SolverOptions;
pub use techcard::{builtin_card, load_card, TechnologyCard};

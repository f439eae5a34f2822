//! Fair, explainable security micro-payments.
//!
//! The pipeline runs in four stages:
//!
//! 1. [`risk`]: qualitative scales and threat assessments give an interval
//!    `Δ` of avoided loss, evaluated with exact [`interval`] arithmetic.
//! 2. [`ingest`] / [`game`]: commit trailers, attribution files, coalition
//!    tables or externally produced subset test results become a
//!    [`game::CoalitionGame`].
//! 3. [`shapley`]: exact or sampled Shapley values, plus an axiom checker.
//! 4. [`payout`]: a budget anchored in `Δ` is split in proportion to the
//!    Shapley values, with auditable rounding.
//!
//! [`pipeline`] wires the stages together from a [`config::RunConfig`].

pub mod config;
pub mod error;
pub mod game;
pub mod ingest;
pub mod interval;
pub mod payout;
pub mod pipeline;
pub mod rational;
pub mod risk;
pub mod shapley;

pub use error::{Error, ErrorKind, Result};

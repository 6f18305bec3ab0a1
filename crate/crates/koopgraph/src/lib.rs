//! Dynamic mode decomposition over graph feature dynamics.
//!
//! The crate rolls a chosen feature dynamic out over a graph, fits a
//! low-rank linear estimate of the dynamic from the resulting snapshot
//! pairs (plain or constraint-aware), and feeds the estimated modes into
//! a trainable spectral-filter model for node classification, link
//! prediction, and spatio-temporal forecasting.

pub mod config;
pub mod dmd;
pub mod dynamics;
pub mod error;
pub mod graph;
pub mod io;
pub mod kernels;
pub mod model;
pub mod rng;
pub mod tasks;

pub use error::{Error, Result};

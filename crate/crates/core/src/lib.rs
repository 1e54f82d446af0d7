//! Tamed linearly implicit P1 finite element scheme for semilinear
//! parabolic SPDEs on an interval, driven by additive Q-Wiener noise, with
//! Monte Carlo drivers for strong/weak rates and long-time behaviour.

pub mod config;
pub mod drift;
pub mod error;
pub mod fem1d;
pub mod harness;
pub mod noise;
pub mod output;
pub mod scheme;
pub mod smoothing;
pub mod stats;

pub use error::{Result, SpdeError};

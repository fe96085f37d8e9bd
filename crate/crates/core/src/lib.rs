//! Joint transmit and reflective beamforming for IRS-assisted integrated
//! sensing and communication.
//!
//! The crate is layered bottom-up: [`numerics`] (complex linear algebra and
//! seeded sampling), [`channel`] (geometry and fading), [`metrics`] (SNR,
//! beampattern gain and the feasibility checker), [`conic`] (a dense
//! semidefinite solver), [`transmit`] and [`reflect`] (the two convex
//! subproblems), [`optimizer`] (the alternating loop and benchmarks) and
//! [`experiments`] (Monte Carlo drivers and output tables).

pub mod channel;
pub mod conic;
pub mod error;
pub mod experiments;
pub mod metrics;
pub mod numerics;
pub mod optimizer;
pub mod reflect;
pub mod transmit;

pub use error::{Error, Result};

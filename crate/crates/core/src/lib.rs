//! Key-rate analysis for N-letter phase-shift-keyed coherent-state quantum
//! key distribution over a pure-loss channel with heterodyne detection.
//!
//! All quantities are in shot-noise units and bits. The eavesdropper holds
//! the purification of the loss (the reflected beam-splitter port).

pub mod alphabet;
pub mod eigen;
pub mod error;
pub mod eve;
pub mod info;
pub mod keyrate;
pub mod montecarlo;
pub mod optimize;
pub mod quadrature;

pub use alphabet::{PhaseSpacePoint, ProtocolParams};
pub use error::{Error, Result};
pub use keyrate::{keyrate, KeyRateResult, RateMode, Reconciliation};
pub use quadrature::QuadratureGrid;

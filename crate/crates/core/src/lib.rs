//! Simulation of a driven, damped two-level atom in a cavity whose output is
//! monitored by phase-quadrature homodyne detection.

pub mod analysis;
pub mod density;
pub mod error;
pub mod lindblad;
pub mod noise;
pub mod operators;
pub mod params;
pub mod pfe;
pub mod qfunc;
pub mod record;
pub mod sme;
mod sparse;

pub use density::DensityMatrix;
pub use error::{Error, Result};
pub use params::{Branch, Frame, SystemParams, Variant};

//! Photocurrent filtering, switch detection, rate and entropy statistics,
//! and the scaling study.

pub mod entropy;
pub mod filter;
pub mod oracle;
pub mod precursor;
pub mod scaling;
pub mod stats;
pub mod switches;

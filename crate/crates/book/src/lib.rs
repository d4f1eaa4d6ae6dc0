//! Compiles the guide chapters as doc-tests.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/steady-state.md")]
pub mod steady_state {}

#[doc = include_str!("../../../book/src/trajectories.md")]
pub mod trajectories {}

#[doc = include_str!("../../../book/src/reduced-model.md")]
pub mod reduced_model {}

#[doc = include_str!("../../../book/src/switching.md")]
pub mod switching {}

#[doc = include_str!("../../../book/src/scaling.md")]
pub mod scaling {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}

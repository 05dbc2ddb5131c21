//! Mass-constrained local minimizers of the Sobolev-critical
//! Schrödinger–Bopp–Podolsky energy for radial fields in three dimensions.
//!
//! ```text
//! I(u) = ½A + ¼B − (μ/p)C − (1/6)D
//! ```
//!
//! minimized over `{‖u‖₂² = c, A(u) < ρ₀}` for `c < c₀`.

pub mod cli;
pub mod config;
pub mod constants;
pub mod error;
pub mod fiber;
pub mod field;
pub mod functional;
pub mod kernels;
pub mod minimize;
pub mod sweep;
pub mod verify;

pub use error::{Error, Result};

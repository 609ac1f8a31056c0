//! Forge: generate, harden, validate, serve and score self-contained
//! browser-agent benchmark tasks.

pub mod blueprint;
pub mod bundle;
pub mod difficulty;
pub mod error;
pub mod fixtures;
pub mod logic;
pub mod pct;
pub mod harness;
pub mod refinement;
pub mod validation;
pub mod workbench;

pub use error::{ForgeError, Result};

//! Files, parallel sweeps and commands on top of `delayform-core`.
//!
//! The core crate is `no_std`; everything that touches the filesystem,
//! threads or the command line lives here.

pub mod commands;
pub mod error;
pub mod io;
pub mod sweep;

pub use delayform_core as core;
pub use error::{Error, Result};

//! Std companion to `fogforge-core`: scenario and checkpoint files, run
//! directories, the parallel training loop, the weight sweep, result
//! comparison, and the `fogforge` command-line tool.

pub mod checkpoint;
pub mod compare;
pub mod error;
pub mod files;
pub mod run;
pub mod sweep;
pub mod train;

pub use error::{Error, Result};
pub use fogforge_core as core;

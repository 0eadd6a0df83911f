//! Experiment harness, file formats and command-line front end for
//! `balflow-core`.

pub mod bench;
pub mod checks;
pub mod error;
pub mod io;

pub use error::{Error, Result};

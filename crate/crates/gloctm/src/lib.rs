//! File formats, checkpoints and the command-line driver around
//! [`gloctm_core`].

pub mod checkpoint;
pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod report;

pub use error::{Error, Result};

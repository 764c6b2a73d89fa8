//! Files, formats and the experiment runner around `hessbound-core`.

pub use hessbound_core as core;

pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod loaders;

pub use error::{Error, Result};

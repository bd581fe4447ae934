//! Parameter sweeps over the model, a resumable line-delimited JSON result
//! store, CSV and SVG export, and the `sdp` command line.

pub mod cli;
pub mod error;
pub mod export;
pub mod selftest;
pub mod spec;
pub mod store;

pub use error::CliError;

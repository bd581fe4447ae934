pub mod cluster;
pub mod dynamics;
pub mod error;
pub mod estimators;
pub mod exact;
pub mod field;
pub mod lattice;
pub mod rng;
pub mod sdp;
pub mod stats;

pub use error::{Result, SdpError};

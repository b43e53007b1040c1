//! Two-stage OFDM timing synchronization at desk scale.
//!
//! Stage one acquires an initial auxiliary point by cross-correlating the
//! received window against the training sequence; stage two refines it to
//! the first arrival path with a small 1-D convolutional network trained
//! from scratch. The crate also provides the multipath-fading channel
//! simulator and the Monte-Carlo evaluation harness used to measure timing
//! error probability, plus dataset/model file formats and a TOML run
//! configuration shared with the `tsync` command-line front end.

pub mod channel;
pub mod config;
pub mod error;
pub mod eval;
pub mod frame;
pub mod nn;
pub mod pipeline;
pub mod rng;
pub mod sync;

pub use error::{Error, Result};

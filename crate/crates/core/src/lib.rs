//! Movable-antenna beamforming for multi-UAV service, driven by a self-evolving
//! agent life cycle.
//!
//! The numerical layers ([`array`], [`optimizer`], [`channel`], [`doa`]) are
//! pure functions over immutable values. [`lifecycle`] wires them into a
//! supervisor-routed agent pipeline and [`scenario`] handles configuration and
//! output formats.

pub mod array;
pub mod channel;
pub mod doa;
pub mod error;
pub mod lifecycle;
pub mod llm;
pub mod optimizer;
pub mod scenario;
pub mod seed;

pub use error::{Error, Result};

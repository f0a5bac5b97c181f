//! Decide whether a quantum channel maps a finite set of source states onto
//! a prescribed set of targets, and build the channel when it exists.

pub mod channelkit;
pub mod decide;
pub mod error;
pub mod matcore;
pub mod psdfeas;
pub mod random;
pub mod stateset;

pub use error::{Error, Result};

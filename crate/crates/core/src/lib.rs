//! Simulation workbench for quantum no-key (three-pass) protocols.

pub mod channel;
pub mod cli;
pub mod commutator;
pub mod error;
pub mod family;
pub mod gates;
pub mod json;
pub mod linalg;
pub mod protocol;
pub mod random;
pub mod security;

pub use error::{QnkError, Result};

//! Nested grammar vector addition systems.

pub mod chareq;
pub mod cli;
pub mod coverability;
pub mod eek;
pub mod error;
pub mod grammar;
pub mod iteration;
pub mod ngvas;
pub mod numerics;
pub mod oracle;
pub mod perfectness;
pub mod rank;
pub mod vas;
pub mod widetree;

pub use error::{Error, Result};

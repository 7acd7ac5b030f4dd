//! File formats, dataset loading and the command implementations behind the
//! `c2p` binary.

pub mod affect_csv;
pub mod c2pf;
pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;
pub mod outputs;

pub use error::{DataError, DataResult};

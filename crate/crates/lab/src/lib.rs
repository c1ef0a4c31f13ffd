//! File formats, LLM gateway, configuration and pipeline stages for
//! peer-pressure experiments built on `peerflip-core`.

pub mod catalog_io;
pub mod config;
pub mod error;
pub mod fixture;
pub mod fsutil;
pub mod gateway;
pub mod graph_io;
pub mod manifest;
pub mod records;
pub mod reference;
pub mod runner;
pub mod tables;

pub use config::Config;
pub use error::{LabError, Result};

//! File formats, persistence, benchmarks and the `adsann` command line
//! around [`adsann_core`].

pub mod bench;
mod error;
pub mod persist;
pub mod vecio;

pub use error::{Error, Result};

//! File formats, pipeline stages and the `eadl` command line on top of
//! `eadl-core`.

pub mod checkpoint;
pub mod config;
pub mod error;
pub mod io;
pub mod run;

pub use error::{FormatError, LabError, LabResult};

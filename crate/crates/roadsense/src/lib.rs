//! File formats, multi-seed experiment driver and the `roadsense` CLI on top
//! of [`roadsense_core`].

pub mod cli;
pub mod harness;
pub mod io;
pub mod report;

pub use roadsense_core;

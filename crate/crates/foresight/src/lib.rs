//! File formats, reports and the command-line front end for
//! `foresight-core`.

pub mod cli;
pub mod config;
pub mod io;
pub mod report;

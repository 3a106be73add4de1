//! Live labeling sessions, their HTTP interface and the `emotive` command line.

pub mod api;
pub mod cli;
pub mod session;
pub mod store;

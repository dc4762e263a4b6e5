//! Configuration, dispatch and output for the `lpp` experiment runner.

pub mod config;
pub mod run;
pub mod svg;
pub mod variance;

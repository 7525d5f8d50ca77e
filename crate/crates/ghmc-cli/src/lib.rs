//! Experiment harness around the `ghmc` library: configuration files in,
//! self-describing result records out.

pub mod config;
pub mod experiments;
pub mod record;

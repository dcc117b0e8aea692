//! Scenario runner for the iodine frequency-standard simulator.

pub mod config;
pub mod output;
pub mod run;
pub mod scenarios;

//! Benchmark harness for the qrem toolkit: run configurations (with named
//! presets for two- to five-qubit setups), the standard / drift /
//! subsample / transfer protocols, and machine-readable reports.
//!
//! The `qrem` binary in this crate exposes each protocol as a CLI subcommand;
//! see the crate README for usage.

pub mod config;
pub mod report;
pub mod run;

pub use config::{RunConfig, RunMode};
pub use report::{emit_drift_series, emit_report, BenchmarkReport, MethodTable, Timings};
pub use run::{run_drift, run_standard, run_subsample, run_transfer};

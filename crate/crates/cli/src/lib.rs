//! Config-driven runner for the andikit pipeline.

pub mod config;
pub mod error;
pub mod output;
pub mod plotdata;
pub mod run;

pub use config::{RunConfig, SEED_ENV};
pub use error::CliError;
pub use plotdata::{emit_plotdata, Report};
pub use run::{run, Command, RunSummary};

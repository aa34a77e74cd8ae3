//! Config-driven pipeline behind the `qmera` binary.

pub mod config;
pub mod run;

pub use config::RunConfig;
pub use run::Run;

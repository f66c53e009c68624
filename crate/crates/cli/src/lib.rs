//! Command-line runner, audits and HTTP session service for visibly fair
//! priority allocation.

pub mod commands;
pub mod error;
pub mod fixtures;
pub mod impossibility;
pub mod instance;
pub mod provider;
pub mod report;
pub mod service;
pub mod session;

pub use error::CliError;
pub use instance::{Instance, MechanismName};

//! Command-line front end: scenario registry and report serialization.

pub mod report;
pub mod scenario;

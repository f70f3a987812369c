//! Data ingestion, synthetic cohorts, experiment orchestration and report
//! files.

mod experiment;
mod ingest;
mod report;
mod synthetic;

pub use experiment::*;
pub use ingest::*;
pub use report::*;
pub use synthetic::*;

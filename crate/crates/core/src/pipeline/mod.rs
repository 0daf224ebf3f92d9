//! Data ingestion, the case-study workflow and file output.

pub mod case_study;
pub mod emit;
pub mod ingest;

pub use case_study::{run_case_study, CaseStudyReport, MarginConfig, ScenarioConfig, ScenarioSpec};
pub use emit::emit_diagnostics;
pub use ingest::{ingest, ingest_reader, Aggregation, Dataset, IngestOptions, Season};

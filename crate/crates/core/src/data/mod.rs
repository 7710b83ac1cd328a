//! Scenario generation, ingestion of real session logs, and persistence of
//! scenarios and simulation results.

pub mod generate;
pub mod ingest;
pub mod results;
pub mod scenario;

pub use generate::{generate, ArrivalIntensity, GeneratorParams};
pub use ingest::{ingest_csv, IngestMapping, IngestReport};
pub use results::{read_per_step_csv, write_per_step_csv, RunRecord};
pub use scenario::{occupancy, peak_concurrency, CapacitySpec, Metadata, Scenario, SCHEMA_VERSION};

//! Worldwide availability simulation.

pub mod almanac;
pub mod errors;
pub mod scenario;
pub mod stats;

pub use almanac::{load_yuma, nominal_almanac, parse_yuma, AlmanacEntry};
pub use errors::{error_model, BoundFlavor, MeasurementErrorModel};
pub use scenario::{read_records, run_scenario, write_records, Algorithm, EpochRecord, ScenarioConfig, StanfordClass};
pub use stats::{aggregate, SummaryStats};

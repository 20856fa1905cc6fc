//! Configuration-driven front end: parse a JSON run file, dispatch to the
//! solvers, and write CSV and JSON artifacts.

pub mod config;
pub mod output;
pub mod run;

pub use config::{parse_config, Command, RunConfig, SchemaError};
pub use output::{summary_schema, validate_summary};
pub use run::{run, Failure, EXIT_CONFIG, EXIT_DOMAIN, EXIT_NON_CONVERGENCE, EXIT_OK};

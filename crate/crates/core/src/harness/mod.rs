//! Configuration, the built-in scenario, experiment runs, trace files and
//! rate fitting.

pub mod config;
pub mod experiment;
pub mod fit;
pub mod scenario;
pub mod synthetic;
pub mod trace;

pub use config::{
    load_config, network_to_toml, parse_config, parse_network, to_toml_string, write_config, Beta,
    ConfigError, ExperimentConfig, NetworkConfig, ParseError, RunConfig, StepConfig, Tolerances,
    UtilityConfig, ValidationError,
};
pub use experiment::{
    certify, config_hash, execute, prepare, run_experiment, validate_only, ExperimentError,
    ExperimentOutput, ReferenceSummary, RunMetadata, Summary, ValidationReport, METADATA_FILE,
    TRACE_FILE,
};
pub use fit::{fit_rate, FitError};
pub use scenario::{builtin_fig2_scenario, fig2_network};
pub use synthetic::{generate, SyntheticSpec};
pub use trace::{TraceError, TraceFile, TraceRecord};

//! Scenario files, Monte Carlo sweeps and result emission.

pub mod config;
pub mod emit;
pub mod sweep;

pub use config::{parse_config, parse_config_str, GammaValues, Method, ScenarioConfig};
pub use emit::{csv_string, format_sig, write_csv, write_json, CsvSink, CSV_HEADER};
pub use sweep::{calibrate_gamma, run_sweep, ResultRow, SweepOptions, SweepReport};

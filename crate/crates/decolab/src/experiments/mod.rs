//! Scenario layer: configuration, presets, orchestration, and file outputs.
//!
//! A scenario pairs one physical system and initial state with per-engine
//! numerical budgets and an output time grid. [`presets::preset`] provides
//! the built-in study scenarios; [`config::load_config`] reads user TOML
//! files; [`runner::run_scenario`] executes the selected engines and writes
//! `series.csv`, `plot.gp`, and `summary.json`.

pub mod config;
pub mod output;
pub mod presets;
pub mod runner;

pub use config::{load_config, ConfigError, ConfigIssues, Engine, ScenarioConfig};
pub use output::{config_hash, Artifacts, OutputError};
pub use presets::{preset, PresetError, PRESET_NAMES};
pub use runner::{run_scenario, EntropyRow, EntropySeries, RunError, RunReport, RunSummary};

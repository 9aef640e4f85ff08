//! `decolab` command-line interface.
//!
//! Subcommands: `rates` (perturbative decoherence-rate table), `run`
//! (execute a scenario and write series.csv / plot.gp / summary.json), and
//! `validate` (parse a config and report every violated precondition).
//!
//! Exit codes: 0 success, 1 validation failure, 2 runtime diagnostic failure.

use clap::{Parser, Subcommand};
use decolab::experiments::{
    config::{load_config, ConfigError, Engine, ScenarioConfig},
    preset, run_scenario, RunError, PRESET_NAMES,
};
use decolab::model::{CouplingSpec, FunctionSpec};
use decolab::perturbation::{second_order_rates, QuadratureConfig};
use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "decolab",
    version,
    about = "Quantum vs classical intrinsic-decoherence dynamics for coupled anharmonic oscillators"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the second-order decoherence rate table for one or all scenarios
    Rates {
        /// Scenario config file (TOML)
        config: Option<PathBuf>,
        /// Built-in scenario name instead of a config file
        #[arg(long, value_name = "NAME", conflicts_with = "config")]
        preset: Option<String>,
        /// Print every built-in scenario
        #[arg(long, conflicts_with_all = ["config", "preset"])]
        all: bool,
    },
    /// Run a scenario: compute the selected entropy series and write outputs
    Run {
        /// Scenario config file (TOML)
        config: Option<PathBuf>,
        /// Built-in scenario name instead of a config file
        #[arg(long, value_name = "NAME", conflicts_with = "config")]
        preset: Option<String>,
        /// Engine subset, comma separated: q,mc,hist,stab (default: config's engine list)
        #[arg(long, value_delimiter = ',', value_name = "LIST")]
        engines: Option<Vec<String>>,
        /// Master seed override
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory override
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Parse and validate a config file, reporting every issue at once
    Validate {
        /// Scenario config file (TOML)
        config: PathBuf,
    },
}

/// CLI failure carrying its exit code.
enum CliError {
    /// Bad input: unusable arguments, unparseable or invalid config. Exit 1.
    Validation(String),
    /// The run itself failed: engine diagnostics, I/O. Exit 2.
    Runtime(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(msg) | CliError::Runtime(msg) => f.write_str(msg),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(err: ConfigError) -> Self {
        CliError::Validation(err.to_string())
    }
}

impl From<RunError> for CliError {
    fn from(err: RunError) -> Self {
        match err {
            RunError::Config(issues) => CliError::Validation(issues.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Rates { config, preset, all } => rates_command(config, preset, all),
        Command::Run { config, preset, engines, seed, out } => {
            run_command(config, preset, engines, seed, out)
        }
        Command::Validate { config } => validate_command(&config),
    }
}

fn resolve_config(config: Option<PathBuf>, preset_name: Option<String>) -> Result<ScenarioConfig, CliError> {
    match (config, preset_name) {
        (Some(path), None) => Ok(load_config(&path)?),
        (None, Some(name)) => {
            preset(&name).map_err(|err| CliError::Validation(err.to_string()))
        }
        (None, None) => Err(CliError::Validation(format!(
            "give a config file or --preset NAME (built-ins: {})",
            PRESET_NAMES.join(", ")
        ))),
        (Some(_), Some(_)) => unreachable!("clap enforces the conflict"),
    }
}

fn describe_function(f: &FunctionSpec, var: &str) -> String {
    match f {
        FunctionSpec::Monomial { c, n } => {
            if *c == 1.0 {
                format!("{var}^{n}")
            } else {
                format!("{c} {var}^{n}")
            }
        }
        FunctionSpec::Sin2 { c, k } => {
            if *c == 1.0 {
                format!("sin^2({k} {var})")
            } else {
                format!("{c} sin^2({k} {var})")
            }
        }
        FunctionSpec::Poly { coeffs } => {
            let terms: Vec<String> = coeffs
                .iter()
                .enumerate()
                .filter(|&(_, &c)| c != 0.0)
                .map(|(m, &c)| match m {
                    0 => format!("{c}"),
                    1 => format!("{c} {var}"),
                    _ => format!("{c} {var}^{m}"),
                })
                .collect();
            if terms.is_empty() { "0".into() } else { terms.join(" + ") }
        }
    }
}

fn describe_coupling(c: &CouplingSpec) -> String {
    match c {
        CouplingSpec::QuadQuad { alpha } => format!("({alpha}/2) Q^2 q^2"),
        CouplingSpec::SeparableProduct { f, g } => {
            format!("{} * {}", describe_function(f, "Q"), describe_function(g, "q"))
        }
        CouplingSpec::PolynomialSum { terms } => {
            let rendered: Vec<String> = terms
                .iter()
                .map(|&(c, m, n)| {
                    let coeff = if c == 1.0 { String::new() } else { format!("{c} ") };
                    format!("{coeff}Q^{m} q^{n}")
                })
                .collect();
            if rendered.is_empty() { "0".into() } else { rendered.join(" + ") }
        }
    }
}

fn describe_state(cfg: &ScenarioConfig) -> Result<String, CliError> {
    let state = cfg
        .initial_state()
        .map_err(|err| CliError::Validation(err.to_string()))?;
    Ok(format!(
        "centers ({:.6}, {:.6}, {:.6}, {:.6}), widths ({:.6}, {:.6}, {:.6}, {:.6})",
        state.sys.center_q,
        state.sys.center_p,
        state.bath.center_q,
        state.bath.center_p,
        state.sys.sigma_q,
        state.sys.sigma_p,
        state.bath.sigma_q,
        state.bath.sigma_p,
    ))
}

fn rates_command(config: Option<PathBuf>, preset_name: Option<String>, all: bool) -> Result<(), CliError> {
    let configs: Vec<ScenarioConfig> = if all {
        PRESET_NAMES
            .iter()
            .map(|name| preset(name).expect("built-in presets exist"))
            .collect()
    } else {
        vec![resolve_config(config, preset_name)?]
    };

    println!(
        "{:<10} {:>13} {:>13} {:>8}   {:<34} {}",
        "scenario", "1/tau_c,2^2", "1/tau_q,2^2", "ratio", "coupling", "state"
    );
    for cfg in &configs {
        cfg.validate().map_err(|issues| CliError::Validation(issues.to_string()))?;
        let state = cfg
            .initial_state()
            .map_err(|err| CliError::Validation(err.to_string()))?;
        let rates = second_order_rates(&cfg.system, &state, &QuadratureConfig::default())
            .map_err(|err| CliError::Runtime(err.to_string()))?;
        println!(
            "{:<10} {:>13.6e} {:>13.6e} {:>8.5} {:<35} {}",
            cfg.run.name,
            rates.classical,
            rates.quantum,
            rates.classicality_ratio,
            describe_coupling(&cfg.system.coupling),
            describe_state(cfg)?,
        );
    }
    Ok(())
}

fn parse_engines(tokens: &[String]) -> Result<Vec<Engine>, CliError> {
    let mut engines = Vec::new();
    for token in tokens {
        let engine = Engine::parse_token(token).ok_or_else(|| {
            CliError::Validation(format!(
                "unknown engine {token:?}; valid tokens: q, mc, hist, stab (or their full names)"
            ))
        })?;
        if !engines.contains(&engine) {
            engines.push(engine);
        }
    }
    Ok(engines)
}

fn run_command(
    config: Option<PathBuf>,
    preset_name: Option<String>,
    engines: Option<Vec<String>>,
    seed: Option<u64>,
    out: Option<PathBuf>,
) -> Result<(), CliError> {
    let mut cfg = resolve_config(config, preset_name)?;
    if let Some(tokens) = engines {
        cfg.run.engines = parse_engines(&tokens)?;
    }
    if let Some(seed) = seed {
        cfg.run.seed = seed;
    }
    if let Some(out) = out {
        cfg.run.out_dir = out;
    }

    println!(
        "running scenario {} (seed {}, horizon {}, engines: {})",
        cfg.run.name,
        cfg.run.seed,
        cfg.run.horizon,
        cfg.run.engines.iter().map(|e| e.name()).collect::<Vec<_>>().join(",")
    );
    let report = run_scenario(&cfg)?;
    for t in &report.summary.timing {
        println!("  {:<12} {:8.2} s", t.engine, t.seconds);
    }
    let fin = &report.summary.final_values;
    let fmt_opt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.4}"));
    println!(
        "final instant t = {}: S_q = {}, S_c_mc = {}, S_c_hist = {}, S_c_stab = {}",
        fin.t,
        fmt_opt(fin.s_q),
        fmt_opt(fin.s_c_mc),
        fmt_opt(fin.s_c_hist),
        fmt_opt(fin.s_c_stab),
    );
    println!(
        "wrote {}, {}, {}",
        report.artifacts.csv.display(),
        report.artifacts.plot.display(),
        report.artifacts.summary.display()
    );
    Ok(())
}

fn validate_command(path: &PathBuf) -> Result<(), CliError> {
    let cfg = load_config(path)?;
    println!(
        "configuration OK: scenario {} (horizon {}, {} output instants, engines: {})",
        cfg.run.name,
        cfg.run.horizon,
        cfg.run.n_times,
        cfg.run.engines.iter().map(|e| e.name()).collect::<Vec<_>>().join(",")
    );
    Ok(())
}

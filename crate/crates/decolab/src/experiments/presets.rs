//! Built-in scenario presets.
//!
//! Physical parameters (couplings, state centers, widths, energy, effective
//! Planck constant) define the scenarios; horizons, output cadence, and
//! sampling budgets are artifact choices sized for a single-core desktop run
//! and are recorded in run metadata. Horizons are chosen so the slowest
//! entropy in the scenario reaches ≈95% of its plateau.

use super::config::{
    ClassicalConfig, Engine, HistogramSettings, InitialSpec, McSettings, RunConfig, ScenarioConfig,
    StabilitySettings,
};
use crate::model::{CouplingSpec, FunctionSpec, SystemSpec, DEFAULT_BETA};
use crate::quantum::GridSpec;
use std::path::PathBuf;
use thiserror::Error;

/// Names accepted by [`preset`], in canonical order.
pub const PRESET_NAMES: [&str; 7] = ["fig1", "fig2", "fig3", "fig4", "fig5", "fig6", "fig7"];

#[derive(Debug, Error)]
pub enum PresetError {
    #[error("unknown preset {name:?}; known presets: {}", PRESET_NAMES.join(", "))]
    Unknown { name: String },
}

/// Reference total energy shared by every scenario.
pub const ENERGY: f64 = 0.24;

/// Default effective Planck constant (every scenario except the large-ħ one).
pub const HBAR: f64 = 0.005;

fn symmetric_initial(q1: f64, p1: f64, q2: f64) -> InitialSpec {
    InitialSpec {
        center_q1: q1,
        center_p1: p1,
        center_q2: q2,
        energy: Some(ENERGY),
        center_p2: None,
        sigma_q1: None,
        sigma_p1: None,
        sigma_q2: None,
        sigma_p2: None,
    }
}

/// Squeezed system Gaussian: `σ_Q = 25 √(ħ/2)`, `σ_P = √(ħ/2)/25`
/// (minimum-uncertainty but strongly elongated in position), bath symmetric.
fn squeezed_initial(q1: f64, p1: f64, q2: f64) -> InitialSpec {
    let sym = (0.5 * HBAR).sqrt();
    InitialSpec {
        sigma_q1: Some(25.0 * sym),
        sigma_p1: Some(sym / 25.0),
        sigma_q2: Some(sym),
        sigma_p2: Some(sym),
        ..symmetric_initial(q1, p1, q2)
    }
}

fn quartic_system(alpha: f64, hbar: f64) -> SystemSpec {
    SystemSpec { hbar_eff: hbar, beta: DEFAULT_BETA, coupling: CouplingSpec::QuadQuad { alpha } }
}

struct Scenario {
    name: &'static str,
    system: SystemSpec,
    initial: InitialSpec,
    horizon: f64,
    n_times: usize,
    mc_times: Vec<f64>,
    engines: Vec<Engine>,
    early_threshold: Option<f64>,
    classical_dt: f64,
    mc: McSettings,
    histogram: HistogramSettings,
    stability: StabilitySettings,
    quantum: GridSpec,
    seed: u64,
}

impl Scenario {
    fn into_config(self) -> ScenarioConfig {
        ScenarioConfig {
            system: self.system,
            initial: self.initial,
            classical: ClassicalConfig {
                dt: self.classical_dt,
                mc: self.mc,
                histogram: self.histogram,
                stability: self.stability,
            },
            quantum: self.quantum,
            run: RunConfig {
                name: self.name.to_string(),
                seed: self.seed,
                horizon: self.horizon,
                n_times: self.n_times,
                engines: self.engines,
                mc_times: Some(self.mc_times),
                early_threshold: self.early_threshold,
                out_dir: PathBuf::from(format!("runs/{}", self.name)),
            },
        }
    }
}

/// Compact grid for the symmetric-state scenarios (well contained in
/// `[-4, 4]²` at the reference energy).
fn narrow_grid(n: usize, dt: f64) -> GridSpec {
    GridSpec { n1: n, n2: n, l1: 4.0, l2: 4.0, dt }
}

/// Wide-position grid for the squeezed-state scenarios: the system packet
/// reaches `|Q| ≈ 6.8` at five position widths.
fn wide_grid(dt: f64) -> GridSpec {
    GridSpec { n1: 1024, n2: 512, l1: 8.0, l2: 4.0, dt }
}

const ALL_ENGINES: [Engine; 4] = [Engine::Quantum, Engine::Mc, Engine::Histogram, Engine::Stability];
/// Squeezed-state scenarios keep only the unbiased estimators: the
/// tangent-kernel engine requires a symmetric Gaussian, and no affordable
/// global grid resolves the `σ_P = √(ħ/2)/25` momentum sliver, so the
/// binned estimator would carry an O(1) smoothing bias at early times.
const QUANTUM_MC: [Engine; 2] = [Engine::Quantum, Engine::Mc];

/// Returns the named built-in scenario.
pub fn preset(name: &str) -> Result<ScenarioConfig, PresetError> {
    let scenario = match name {
        "fig1" => Scenario {
            name: "fig1",
            system: SystemSpec {
                hbar_eff: HBAR,
                beta: DEFAULT_BETA,
                coupling: CouplingSpec::SeparableProduct {
                    f: FunctionSpec::Sin2 { c: 1.0, k: 10.0 },
                    g: FunctionSpec::Monomial { c: 1.0, n: 2 },
                },
            },
            initial: squeezed_initial(0.5, 0.5, 0.0),
            horizon: 2.5,
            n_times: 201,
            mc_times: vec![0.0, 0.1, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 2.5],
            engines: QUANTUM_MC.to_vec(),
            early_threshold: None,
            classical_dt: 1e-3,
            mc: McSettings { n_outer: 20_000, n_inner: 32, ..McSettings::default() },
            histogram: HistogramSettings::default(),
            stability: StabilitySettings::default(),
            quantum: wide_grid(1e-3),
            seed: 1,
        },
        "fig2" => Scenario {
            name: "fig2",
            system: SystemSpec {
                hbar_eff: HBAR,
                beta: DEFAULT_BETA,
                coupling: CouplingSpec::SeparableProduct {
                    f: FunctionSpec::Monomial { c: 1.0, n: 2 },
                    g: FunctionSpec::Sin2 { c: 1.0, k: 1.0 },
                },
            },
            initial: squeezed_initial(0.5, 0.5, 0.0),
            horizon: 4.0,
            n_times: 201,
            mc_times: vec![0.0, 0.1, 0.2, 0.3, 0.5, 1.0, 2.0, 3.0, 4.0],
            engines: QUANTUM_MC.to_vec(),
            early_threshold: None,
            classical_dt: 1e-3,
            mc: McSettings { n_outer: 20_000, n_inner: 32, ..McSettings::default() },
            histogram: HistogramSettings::default(),
            stability: StabilitySettings::default(),
            quantum: wide_grid(1e-3),
            seed: 2,
        },
        "fig3" => Scenario {
            name: "fig3",
            system: quartic_system(0.03, HBAR),
            initial: symmetric_initial(0.4, 0.5, 0.6),
            horizon: 25.0,
            n_times: 201,
            // Backward-MC sampling instants: the t ∈ [10.5, 12.5] revival
            // trough is deliberately bracketed, not sampled — the entropy
            // swings by ~0.5 within 1.5 time units there, so a sparse MC
            // point on the flank carries no shape information.
            mc_times: vec![0.0, 3.0, 7.0, 10.0, 14.0, 18.0, 25.0],
            engines: ALL_ENGINES.to_vec(),
            early_threshold: None,
            classical_dt: 2e-3,
            mc: McSettings { n_outer: 20_000, n_inner: 16, ..McSettings::default() },
            histogram: HistogramSettings::default(),
            stability: StabilitySettings { n_samples: 16_000 },
            quantum: narrow_grid(512, 2e-3),
            seed: 3,
        },
        "fig4" => Scenario {
            name: "fig4",
            system: quartic_system(1.0, HBAR),
            initial: symmetric_initial(0.4, 0.5, 0.6),
            horizon: 8.0,
            n_times: 321,
            mc_times: vec![0.0, 0.5, 1.0, 1.5, 2.0, 3.0, 4.5, 6.0, 8.0],
            engines: ALL_ENGINES.to_vec(),
            early_threshold: None,
            classical_dt: 1e-3,
            mc: McSettings { n_outer: 20_000, n_inner: 32, ..McSettings::default() },
            histogram: HistogramSettings::default(),
            stability: StabilitySettings::default(),
            quantum: narrow_grid(512, 1e-3),
            seed: 4,
        },
        "fig5" => Scenario {
            name: "fig5",
            system: quartic_system(1.0, HBAR),
            initial: symmetric_initial(0.0, 0.0, 0.6),
            horizon: 8.0,
            n_times: 201,
            mc_times: vec![0.0, 1.0, 2.0, 3.0, 4.0, 6.0, 8.0],
            engines: ALL_ENGINES.to_vec(),
            early_threshold: Some(1.0),
            classical_dt: 1e-3,
            mc: McSettings { n_outer: 20_000, n_inner: 32, ..McSettings::default() },
            histogram: HistogramSettings::default(),
            stability: StabilitySettings::default(),
            quantum: narrow_grid(512, 1e-3),
            seed: 5,
        },
        "fig6" => Scenario {
            name: "fig6",
            system: SystemSpec {
                hbar_eff: HBAR,
                beta: DEFAULT_BETA,
                coupling: CouplingSpec::PolynomialSum { terms: vec![(0.5, 2, 2), (1.0, 4, 2)] },
            },
            initial: symmetric_initial(0.4, 0.5, 0.6),
            horizon: 5.0,
            n_times: 201,
            mc_times: vec![0.0, 0.5, 1.0, 1.5, 2.25, 3.0, 4.0, 5.0],
            engines: ALL_ENGINES.to_vec(),
            early_threshold: None,
            classical_dt: 1e-3,
            mc: McSettings { n_outer: 20_000, n_inner: 32, ..McSettings::default() },
            histogram: HistogramSettings::default(),
            stability: StabilitySettings::default(),
            quantum: narrow_grid(512, 1e-3),
            seed: 6,
        },
        "fig7" => Scenario {
            name: "fig7",
            system: quartic_system(1.0, 0.05),
            initial: symmetric_initial(0.4, 0.5, 0.6),
            horizon: 5.0,
            n_times: 201,
            mc_times: vec![0.0, 0.5, 1.0, 1.5, 2.25, 3.0, 4.0, 5.0],
            engines: ALL_ENGINES.to_vec(),
            early_threshold: None,
            classical_dt: 1e-3,
            mc: McSettings { n_outer: 20_000, n_inner: 32, ..McSettings::default() },
            histogram: HistogramSettings::default(),
            stability: StabilitySettings::default(),
            quantum: narrow_grid(256, 2e-3),
            seed: 7,
        },
        other => return Err(PresetError::Unknown { name: other.to_string() }),
    };
    Ok(scenario.into_config())
}

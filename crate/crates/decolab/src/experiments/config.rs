//! Scenario configuration: TOML schema, parsing, and complete validation.
//!
//! A configuration is self-contained: it names the physical system, the
//! initial product state, per-engine numerical budgets, the output time
//! grid, and the output directory. [`ScenarioConfig::validate`] checks every
//! engine precondition reachable from a config field and reports *all*
//! violations, not just the first.

use crate::centropy::{HistogramGrid, McConfig};
use crate::classical::IntegratorConfig;
use crate::model::{CouplingSpec, FunctionSpec, GaussianState, ProductState, SystemSpec};
use crate::quantum::GridSpec;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::{Path, PathBuf};
use thiserror::Error;

/// One selectable entropy engine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    Quantum,
    Mc,
    Histogram,
    Stability,
}

impl Engine {
    pub const ALL: [Engine; 4] = [Engine::Quantum, Engine::Mc, Engine::Histogram, Engine::Stability];

    /// Parses the short CLI aliases as well as the full names.
    pub fn parse_token(token: &str) -> Option<Engine> {
        match token.trim() {
            "q" | "quantum" => Some(Engine::Quantum),
            "mc" => Some(Engine::Mc),
            "hist" | "histogram" => Some(Engine::Histogram),
            "stab" | "stability" => Some(Engine::Stability),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Engine::Quantum => "quantum",
            Engine::Mc => "mc",
            Engine::Histogram => "histogram",
            Engine::Stability => "stability",
        }
    }
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Initial product-state specification.
///
/// The bath momentum comes either from `center_p2` directly or from solving
/// `H(center) = energy` (exactly one must be given). Widths are either all
/// four explicit or all omitted, in which case every width is the symmetric
/// minimum-uncertainty value `sqrt(hbar_eff / 2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    pub center_q1: f64,
    pub center_p1: f64,
    pub center_q2: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center_p2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_q1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_p1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_q2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_p2: Option<f64>,
}

impl InitialSpec {
    fn widths(&self) -> [Option<f64>; 4] {
        [self.sigma_q1, self.sigma_p1, self.sigma_q2, self.sigma_p2]
    }

    /// Builds the concrete state, assuming `validate` passed.
    pub fn resolve(&self, sys: &SystemSpec) -> Result<ProductState, crate::model::ModelError> {
        let sym = (0.5 * sys.hbar_eff).sqrt();
        let p2 = match self.center_p2 {
            Some(p) => p,
            None => sys.solve_momentum_from_energy(
                self.center_q1,
                self.center_p1,
                self.center_q2,
                self.energy.expect("validated: energy xor center_p2"),
            )?,
        };
        Ok(ProductState {
            sys: GaussianState::new(
                self.center_q1,
                self.center_p1,
                self.sigma_q1.unwrap_or(sym),
                self.sigma_p1.unwrap_or(sym),
            ),
            bath: GaussianState::new(self.center_q2, p2, self.sigma_q2.unwrap_or(sym), self.sigma_p2.unwrap_or(sym)),
        })
    }
}

/// Backward-MC budget (the engine seed is derived from `run.seed`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McSettings {
    pub n_outer: usize,
    pub n_inner: usize,
    pub proposal_scale: f64,
}

impl Default for McSettings {
    fn default() -> Self {
        let base = McConfig::default();
        Self { n_outer: base.n_outer, n_inner: base.n_inner, proposal_scale: base.proposal_scale }
    }
}

impl McSettings {
    pub fn to_mc_config(self, seed: u64) -> McConfig {
        McConfig {
            n_outer: self.n_outer,
            n_inner: self.n_inner,
            proposal_scale: self.proposal_scale,
            seed,
        }
    }
}

/// Histogram estimator budget: grid plus trajectory count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HistogramSettings {
    pub bins: usize,
    pub half_q: f64,
    pub half_p: f64,
    pub n_trajectories: usize,
}

impl Default for HistogramSettings {
    fn default() -> Self {
        let grid = HistogramGrid::default();
        // Production runs use a finer grid than the library default: the box
        // must stay wide enough for the late-time flow, so tightly localized
        // early ensembles only resolve (and keep their binning bias below the
        // estimator's own standard error) at a few thousand cells per axis.
        Self { bins: 1_600, half_q: grid.half_q, half_p: grid.half_p, n_trajectories: 40_000 }
    }
}

impl HistogramSettings {
    pub fn grid(&self) -> HistogramGrid {
        HistogramGrid { bins: self.bins, half_q: self.half_q, half_p: self.half_p }
    }
}

/// Tangent-kernel estimator budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StabilitySettings {
    pub n_samples: usize,
}

impl Default for StabilitySettings {
    fn default() -> Self {
        Self { n_samples: 8_000 }
    }
}

/// Classical-side numerical parameters shared by the trajectory engines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassicalConfig {
    /// Symplectic integrator step; output instants snap to whole steps.
    pub dt: f64,
    pub mc: McSettings,
    pub histogram: HistogramSettings,
    pub stability: StabilitySettings,
}

impl Default for ClassicalConfig {
    fn default() -> Self {
        Self {
            dt: IntegratorConfig::default().dt,
            mc: McSettings::default(),
            histogram: HistogramSettings::default(),
            stability: StabilitySettings::default(),
        }
    }
}

impl ClassicalConfig {
    pub fn integrator(&self) -> IntegratorConfig {
        IntegratorConfig { dt: self.dt }
    }
}

/// Run orchestration: identity, seed, time grid, engine set, outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Scenario label used in metadata and summaries.
    pub name: String,
    /// Master seed; every engine derives its own independent RNG streams.
    pub seed: u64,
    /// Final output instant; the series covers `[0, horizon]`.
    pub horizon: f64,
    /// Number of uniform output instants (including both endpoints).
    #[serde(default = "default_n_times")]
    pub n_times: usize,
    /// Engines to run.
    pub engines: Vec<Engine>,
    /// Output instants for the backward-MC engine (must be a subset of the
    /// uniform grid); omitted means every instant. The backward engine costs
    /// a full inner ensemble per instant, so dense grids are expensive.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc_times: Option<Vec<f64>>,
    /// Scenario-specific early-time threshold recorded in metadata (used by
    /// delayed-onset studies).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub early_threshold: Option<f64>,
    /// Directory receiving series.csv, plot.gp, and summary.json.
    pub out_dir: PathBuf,
}

fn default_n_times() -> usize {
    200
}

/// Complete scenario description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub system: SystemSpec,
    pub initial: InitialSpec,
    #[serde(default)]
    pub classical: ClassicalConfig,
    pub quantum: GridSpec,
    pub run: RunConfig,
}

/// One validation failure, locating the offending field.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigIssue {
    pub field: String,
    pub message: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// Every validation failure found in one pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigIssues(pub Vec<ConfigIssue>);

impl fmt::Display for ConfigIssues {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} validation error(s):", self.0.len())?;
        for issue in &self.0 {
            writeln!(f, "  - {issue}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigIssues {}

/// Errors from loading a configuration file.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse config {path}:\n{message}")]
    Parse { path: PathBuf, message: String },
    #[error("{0}")]
    Invalid(#[from] ConfigIssues),
}

/// Maximum number of integrator steps allowed per trajectory.
const MAX_STEPS: f64 = 5e7;

struct Checker {
    issues: Vec<ConfigIssue>,
}

impl Checker {
    fn new() -> Self {
        Self { issues: Vec::new() }
    }

    fn fail(&mut self, field: &str, message: impl Into<String>) {
        self.issues.push(ConfigIssue { field: field.to_string(), message: message.into() });
    }

    fn finite(&mut self, field: &str, value: f64) -> bool {
        if value.is_finite() {
            true
        } else {
            self.fail(field, format!("must be finite, got {value}"));
            false
        }
    }

    fn positive(&mut self, field: &str, value: f64) -> bool {
        if self.finite(field, value) && value <= 0.0 {
            self.fail(field, format!("must be positive, got {value}"));
            return false;
        }
        value.is_finite() && value > 0.0
    }
}

fn check_function_spec(c: &mut Checker, field: &str, f: &FunctionSpec) {
    match f {
        FunctionSpec::Monomial { c: coeff, .. } => {
            c.finite(&format!("{field}.c"), *coeff);
        }
        FunctionSpec::Sin2 { c: coeff, k } => {
            c.finite(&format!("{field}.c"), *coeff);
            c.finite(&format!("{field}.k"), *k);
        }
        FunctionSpec::Poly { coeffs } => {
            if coeffs.is_empty() {
                c.fail(&format!("{field}.coeffs"), "must not be empty");
            }
            for (i, &v) in coeffs.iter().enumerate() {
                c.finite(&format!("{field}.coeffs[{i}]"), v);
            }
        }
    }
}

impl ScenarioConfig {
    /// The uniform output instants `0, …, horizon`.
    pub fn times(&self) -> Vec<f64> {
        let n = self.run.n_times.max(2);
        let step = self.run.horizon / (n - 1) as f64;
        (0..n).map(|i| i as f64 * step).collect()
    }

    /// Backward-MC output instants: the explicit subset, or every instant.
    pub fn mc_times(&self) -> Vec<f64> {
        match &self.run.mc_times {
            Some(ts) => ts.clone(),
            None => self.times(),
        }
    }

    /// Resolved initial state; available once validation passed.
    pub fn initial_state(&self) -> Result<ProductState, crate::model::ModelError> {
        self.initial.resolve(&self.system)
    }

    /// Canonical serialized form (stable field order), used for hashing and
    /// the preset round-trip guarantee.
    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serialization cannot fail")
    }

    /// Checks every engine precondition reachable from the config and
    /// reports all violations.
    pub fn validate(&self) -> Result<(), ConfigIssues> {
        let mut c = Checker::new();
        self.check_system(&mut c);
        let state = self.check_initial(&mut c);
        self.check_classical(&mut c);
        self.check_quantum(&mut c, state.as_ref());
        self.check_run(&mut c);
        if c.issues.is_empty() { Ok(()) } else { Err(ConfigIssues(c.issues)) }
    }

    fn check_system(&self, c: &mut Checker) {
        if c.finite("system.hbar_eff", self.system.hbar_eff) && self.system.hbar_eff <= 0.0 {
            c.fail("system.hbar_eff", format!("must be positive, got {}", self.system.hbar_eff));
        }
        if c.finite("system.beta", self.system.beta) && self.system.beta < 0.0 {
            c.fail("system.beta", format!("must be nonnegative, got {}", self.system.beta));
        }
        match &self.system.coupling {
            CouplingSpec::QuadQuad { alpha } => {
                c.finite("system.coupling.alpha", *alpha);
            }
            CouplingSpec::SeparableProduct { f, g } => {
                check_function_spec(c, "system.coupling.f", f);
                check_function_spec(c, "system.coupling.g", g);
            }
            CouplingSpec::PolynomialSum { terms } => {
                for (i, &(coeff, _, _)) in terms.iter().enumerate() {
                    c.finite(&format!("system.coupling.terms[{i}].0"), coeff);
                }
            }
        }
    }

    fn check_initial(&self, c: &mut Checker) -> Option<ProductState> {
        let init = &self.initial;
        let issues_before = c.issues.len();
        for (field, v) in [
            ("initial.center_q1", init.center_q1),
            ("initial.center_p1", init.center_p1),
            ("initial.center_q2", init.center_q2),
        ] {
            c.finite(field, v);
        }
        match (init.energy, init.center_p2) {
            (Some(e), None) => {
                c.finite("initial.energy", e);
            }
            (None, Some(p)) => {
                c.finite("initial.center_p2", p);
            }
            (Some(_), Some(_)) => {
                c.fail("initial", "give either energy or center_p2, not both");
            }
            (None, None) => {
                c.fail("initial", "one of energy or center_p2 is required");
            }
        }

        let widths = init.widths();
        let given = widths.iter().flatten().count();
        if given != 0 && given != 4 {
            c.fail(
                "initial",
                "either give all four widths (sigma_q1, sigma_p1, sigma_q2, sigma_p2) or none",
            );
        }
        for (field, v) in ["initial.sigma_q1", "initial.sigma_p1", "initial.sigma_q2", "initial.sigma_p2"]
            .iter()
            .zip(widths)
        {
            if let Some(v) = v {
                c.positive(field, v);
            }
        }
        if c.issues.len() == issues_before && self.system.hbar_eff > 0.0 {
            match init.resolve(&self.system) {
                Ok(state) => {
                    self.check_state_engine_preconditions(c, &state);
                    return Some(state);
                }
                Err(err) => c.fail("initial.energy", err.to_string()),
            }
        }
        None
    }

    /// Engine preconditions that depend on the resolved state.
    fn check_state_engine_preconditions(&self, c: &mut Checker, state: &ProductState) {
        let hbar = self.system.hbar_eff;
        let half = 0.5 * hbar;
        if self.run.engines.contains(&Engine::Quantum) {
            for (field, g) in [("initial system state", &state.sys), ("initial bath state", &state.bath)] {
                let product = g.sigma_q * g.sigma_p;
                if (product - half).abs() > 1e-9 * half {
                    c.fail(
                        "initial",
                        format!(
                            "{field} is not a pure-state Weyl symbol: sigma_q * sigma_p = {product:.3e} \
                             but the quantum engine needs hbar_eff/2 = {half:.3e}"
                        ),
                    );
                }
            }
        }
        if self.run.engines.contains(&Engine::Stability) && !state.is_symmetric() {
            c.fail(
                "run.engines",
                "the stability engine requires a symmetric Gaussian (all four widths equal); \
                 drop it from engines or use symmetric widths",
            );
        }
        if self.run.engines.contains(&Engine::Histogram) {
            let g = self.classical.histogram;
            let reach_q = state.bath.center_q.abs() + 3.0 * state.bath.sigma_q;
            let reach_p = state.bath.center_p.abs() + 3.0 * state.bath.sigma_p;
            if reach_q > g.half_q || reach_p > g.half_p {
                c.fail(
                    "classical.histogram",
                    format!(
                        "box (±{}, ±{}) does not contain the initial bath 3σ ellipse \
                         (needs ±{reach_q:.3}, ±{reach_p:.3})",
                        g.half_q, g.half_p
                    ),
                );
            }
        }
    }

    fn check_classical(&self, c: &mut Checker) {
        let cl = &self.classical;
        if c.positive("classical.dt", cl.dt) && self.run.horizon.is_finite() {
            let steps = (self.run.horizon / cl.dt).round();
            if steps > MAX_STEPS {
                c.fail(
                    "classical.dt",
                    format!("horizon/dt = {steps:.0} steps exceeds the {MAX_STEPS:.0}-step budget"),
                );
            }
        }
        if let Err(err) = cl.mc.to_mc_config(0).validate() {
            c.fail("classical.mc", err.to_string());
        }
        c.positive("classical.mc.proposal_scale", cl.mc.proposal_scale);
        if let Err(err) = cl.histogram.grid().validate() {
            c.fail("classical.histogram", err.to_string());
        }
        if cl.histogram.n_trajectories < 32 {
            c.fail(
                "classical.histogram.n_trajectories",
                format!("needs at least 32 trajectories, got {}", cl.histogram.n_trajectories),
            );
        }
        if cl.stability.n_samples < 2 {
            c.fail(
                "classical.stability.n_samples",
                format!("needs at least 2 samples, got {}", cl.stability.n_samples),
            );
        }
    }

    fn check_quantum(&self, c: &mut Checker, state: Option<&ProductState>) {
        if let Err(err) = self.quantum.validate() {
            c.fail("quantum", err.to_string());
        } else if self.run.engines.contains(&Engine::Quantum) {
            if let Some(state) = state {
                let energy = self.system.hamiltonian(&state.center());
                if let Err(err) = self.quantum.check_supports(state, self.system.hbar_eff, energy) {
                    c.fail("quantum", err.to_string());
                }
                if self.run.horizon.is_finite() && self.quantum.dt > 0.0 {
                    let steps = (self.run.horizon / self.quantum.dt).round();
                    if steps > MAX_STEPS {
                        c.fail(
                            "quantum.dt",
                            format!("horizon/dt = {steps:.0} steps exceeds the {MAX_STEPS:.0}-step budget"),
                        );
                    }
                }
            }
        }
    }

    fn check_run(&self, c: &mut Checker) {
        let run = &self.run;
        if run.name.trim().is_empty() {
            c.fail("run.name", "must not be empty");
        }
        if c.finite("run.horizon", run.horizon) && run.horizon <= 0.0 {
            c.fail("run.horizon", format!("must be positive, got {}", run.horizon));
        }
        if run.n_times < 2 {
            c.fail("run.n_times", format!("needs at least 2 output instants, got {}", run.n_times));
        } else if run.n_times > 100_000 {
            c.fail("run.n_times", format!("{} output instants is beyond the supported range", run.n_times));
        }
        if run.engines.is_empty() {
            c.fail("run.engines", "select at least one engine");
        }
        for (i, e) in run.engines.iter().enumerate() {
            if run.engines[..i].contains(e) {
                c.fail("run.engines", format!("engine {e} listed twice"));
            }
        }
        if let Some(ts) = &run.mc_times {
            let grid = self.times();
            let tol = 1e-9 * run.horizon.abs().max(1.0);
            let mut prev = f64::NEG_INFINITY;
            for (i, &t) in ts.iter().enumerate() {
                let field = format!("run.mc_times[{i}]");
                if !c.finite(&field, t) {
                    continue;
                }
                if t <= prev {
                    c.fail(&field, "instants must be strictly increasing");
                }
                prev = t;
                if !grid.iter().any(|&g| (g - t).abs() <= tol) {
                    c.fail(&field, format!("{t} is not on the uniform output grid (horizon {}, n_times {})", run.horizon, run.n_times));
                }
            }
            if ts.is_empty() {
                c.fail("run.mc_times", "must not be empty when given (omit it to use every instant)");
            }
        }
        if let Some(thr) = run.early_threshold {
            if c.finite("run.early_threshold", thr) && !(thr > 0.0 && thr < run.horizon) {
                c.fail(
                    "run.early_threshold",
                    format!("must lie strictly inside (0, horizon = {}), got {thr}", run.horizon),
                );
            }
        }
        if run.out_dir.as_os_str().is_empty() {
            c.fail("run.out_dir", "must not be empty");
        }
    }
}

/// Reads, parses, and fully validates a configuration file.
pub fn load_config(path: &Path) -> Result<ScenarioConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    let cfg: ScenarioConfig = toml::from_str(&text)
        .map_err(|err| ConfigError::Parse { path: path.to_path_buf(), message: err.to_string() })?;
    cfg.validate()?;
    Ok(cfg)
}

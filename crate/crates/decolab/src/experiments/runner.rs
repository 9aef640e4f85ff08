//! Scenario orchestration: runs the selected entropy engines over a shared
//! output grid, merges their samples into one series, and emits the output
//! files. If an engine fails mid-run, the rows computed so far are still
//! written, with a failure marker in the CSV preamble and summary.

use super::config::{Engine, ScenarioConfig};
use super::output::{self, Artifacts, OutputError};
use crate::centropy::{CentropyError, EntropyEstimate};
use crate::classical::{propagate_point_visiting, PropagationError};
use crate::model::{ModelError, ProductState, SystemSpec};
use crate::quantum::QuantumError;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

/// RNG stream namespace for the energy-drift probe trajectories, disjoint
/// from every estimator's stream range.
const PROBE_STREAM_BASE: u64 = 3 << 32;

/// Number of sampled probe trajectories for the classical drift diagnostic
/// (the state center is probed additionally).
const PROBE_SAMPLES: usize = 8;

/// One output instant with every engine's result that was computed there.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct EntropyRow {
    /// Requested output instant (engines snap internally to whole steps).
    pub t: f64,
    pub s_q: Option<f64>,
    pub s_c_mc: Option<f64>,
    pub s_c_mc_err: Option<f64>,
    pub s_c_hist: Option<f64>,
    pub s_c_stab: Option<f64>,
    pub s_c_stab_err: Option<f64>,
    pub q_norm_drift: Option<f64>,
    pub q_energy_drift: Option<f64>,
    pub q_edge_prob: Option<f64>,
    pub c_energy_drift: Option<f64>,
    pub mc_ess: Option<f64>,
    pub hist_err: Option<f64>,
    pub hist_coarse: Option<f64>,
    pub hist_overflow: Option<f64>,
    pub stab_excluded: Option<u64>,
}

/// Merged entropy series over the scenario's output instants.
#[derive(Debug, Clone, Default, Serialize)]
pub struct EntropySeries {
    pub rows: Vec<EntropyRow>,
}

impl EntropySeries {
    fn from_times(times: &[f64]) -> Self {
        Self { rows: times.iter().map(|&t| EntropyRow { t, ..EntropyRow::default() }).collect() }
    }

    /// Row whose instant is closest to `t` (series are never empty).
    pub fn row_near(&self, t: f64) -> &EntropyRow {
        self.rows
            .iter()
            .min_by(|a, b| (a.t - t).abs().total_cmp(&(b.t - t).abs()))
            .expect("series has rows")
    }

    pub fn last(&self) -> &EntropyRow {
        self.rows.last().expect("series has rows")
    }

    /// Contract checks: instants strictly increasing and every present value
    /// inside `[-3σ, 1+3σ]` of its error bar (exact bounds for error-free
    /// engines).
    pub fn check_invariants(&self) -> Result<(), String> {
        for pair in self.rows.windows(2) {
            if pair[1].t <= pair[0].t {
                return Err(format!("output instants not increasing at t = {}", pair[1].t));
            }
        }
        for row in &self.rows {
            let checks = [
                ("S_q", row.s_q, Some(1e-6)),
                ("S_c_mc", row.s_c_mc, row.s_c_mc_err.map(|e| 3.0 * e)),
                ("S_c_hist", row.s_c_hist, row.hist_err.map(|e| 3.0 * e)),
                ("S_c_stab", row.s_c_stab, row.s_c_stab_err.map(|e| 3.0 * e)),
            ];
            for (name, value, slack) in checks {
                if let Some(v) = value {
                    let s = slack.unwrap_or(0.0);
                    if !(v >= -s && v <= 1.0 + s) {
                        return Err(format!("{name}(t = {}) = {v} outside [-{s}, 1+{s}]", row.t));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Wall-clock seconds spent in one engine.
#[derive(Debug, Clone, Serialize)]
pub struct EngineTiming {
    pub engine: String,
    pub seconds: f64,
}

/// Final-instant values copied into the machine-readable summary.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct FinalValues {
    pub t: f64,
    pub s_q: Option<f64>,
    pub s_c_mc: Option<f64>,
    pub s_c_mc_err: Option<f64>,
    pub s_c_hist: Option<f64>,
    pub s_c_stab: Option<f64>,
    pub s_c_stab_err: Option<f64>,
}

impl FinalValues {
    fn from_row(row: &EntropyRow) -> Self {
        Self {
            t: row.t,
            s_q: row.s_q,
            s_c_mc: row.s_c_mc,
            s_c_mc_err: row.s_c_mc_err,
            s_c_hist: row.s_c_hist,
            s_c_stab: row.s_c_stab,
            s_c_stab_err: row.s_c_stab_err,
        }
    }
}

/// Worst-case diagnostics across the series.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct DiagnosticSummary {
    pub max_abs_quantum_norm_drift: Option<f64>,
    pub max_abs_quantum_energy_drift: Option<f64>,
    pub max_quantum_edge_probability: Option<f64>,
    pub max_abs_classical_energy_drift: Option<f64>,
    pub min_mc_effective_samples: Option<f64>,
    pub max_histogram_overflow: Option<f64>,
    pub stability_excluded_total: Option<u64>,
}

fn fold_max(acc: &mut Option<f64>, v: Option<f64>) {
    if let Some(v) = v {
        *acc = Some(acc.map_or(v, |a: f64| a.max(v)));
    }
}

impl DiagnosticSummary {
    fn from_series(series: &EntropySeries) -> Self {
        let mut out = Self::default();
        for row in &series.rows {
            fold_max(&mut out.max_abs_quantum_norm_drift, row.q_norm_drift.map(f64::abs));
            fold_max(&mut out.max_abs_quantum_energy_drift, row.q_energy_drift.map(f64::abs));
            fold_max(&mut out.max_quantum_edge_probability, row.q_edge_prob);
            fold_max(&mut out.max_abs_classical_energy_drift, row.c_energy_drift.map(f64::abs));
            fold_max(&mut out.max_histogram_overflow, row.hist_overflow);
            if let Some(ess) = row.mc_ess {
                let cur = out.min_mc_effective_samples.get_or_insert(ess);
                *cur = cur.min(ess);
            }
            if let Some(x) = row.stab_excluded {
                *out.stability_excluded_total.get_or_insert(0) += x;
            }
        }
        out
    }
}

/// Machine-readable run summary written next to the CSV.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub name: String,
    pub seed: u64,
    pub version: String,
    pub config_hash: String,
    pub horizon: f64,
    pub n_times: usize,
    pub engines: Vec<String>,
    pub early_threshold: Option<f64>,
    /// "ok", or "failed" with `error` set.
    pub status: String,
    pub error: Option<String>,
    pub timing: Vec<EngineTiming>,
    pub final_values: FinalValues,
    pub diagnostics: DiagnosticSummary,
}

/// Everything a completed (or partially completed) run produced.
#[derive(Debug)]
pub struct RunReport {
    pub series: EntropySeries,
    pub summary: RunSummary,
    pub artifacts: Artifacts,
}

/// Errors from scenario execution.
#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] super::config::ConfigIssues),
    #[error("initial state: {0}")]
    Model(#[from] ModelError),
    #[error("quantum engine: {0}")]
    Quantum(#[from] QuantumError),
    #[error("classical engine: {0}")]
    Centropy(#[from] CentropyError),
    #[error("energy-drift probe: {0}")]
    Probe(#[from] PropagationError),
    #[error(transparent)]
    Output(#[from] OutputError),
    #[error("series invariant violated: {0}")]
    SeriesInvariant(String),
}

fn mc_row_indices(times: &[f64], mc_times: &[f64], horizon: f64) -> Vec<usize> {
    let tol = 1e-9 * horizon.abs().max(1.0);
    mc_times
        .iter()
        .map(|&t| {
            times
                .iter()
                .position(|&g| (g - t).abs() <= tol)
                .expect("validated: mc instants lie on the output grid")
        })
        .collect()
}

/// Classical energy-conservation diagnostic: the state center plus
/// [`PROBE_SAMPLES`] density samples are integrated once across the horizon,
/// and each output instant records the worst |H(t) − H(0)| seen so far among
/// the probes.
fn classical_drift_probe(
    sys: &SystemSpec,
    state: &ProductState,
    times: &[f64],
    dt: f64,
    seed: u64,
) -> Result<Vec<f64>, PropagationError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(PROBE_STREAM_BASE);
    let mut probes = vec![state.center()];
    for _ in 0..PROBE_SAMPLES {
        probes.push(state.sample(&mut rng));
    }
    let checkpoints: Vec<usize> = times.iter().map(|&t| (t / dt).round().max(0.0) as usize).collect();
    let mut worst = vec![0.0f64; times.len()];
    for z0 in probes {
        let h0 = sys.hamiltonian(&z0);
        let mut z = z0;
        let mut slot = 0usize;
        propagate_point_visiting(sys, &mut z, dt, &checkpoints, |_, zt| {
            let drift = (sys.hamiltonian(zt) - h0).abs();
            worst[slot] = worst[slot].max(drift);
            slot += 1;
        })?;
    }
    // A probe's drift is cumulative along its own trajectory; report the
    // running maximum so later rows never understate earlier excursions.
    for i in 1..worst.len() {
        worst[i] = worst[i].max(worst[i - 1]);
    }
    Ok(worst)
}

struct Stopwatch(std::time::Instant);

impl Stopwatch {
    fn start() -> Self {
        Self(std::time::Instant::now())
    }

    fn seconds(self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

/// Runs every selected engine and writes outputs into `cfg.run.out_dir`.
///
/// Deterministic for a fixed config and seed (wall-clock timings in the
/// summary aside). On engine failure the partial series is still emitted,
/// with the failure recorded in the CSV preamble and the summary, and the
/// engine error is returned.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunReport, RunError> {
    cfg.validate()?;
    let state = cfg.initial_state()?;
    let times = cfg.times();
    let mc_times = cfg.mc_times();
    let integ = cfg.classical.integrator();
    let seed = cfg.run.seed;

    let mut series = EntropySeries::from_times(&times);
    let mut timing = Vec::new();
    let engines = &cfg.run.engines;
    let classical_selected =
        engines.iter().any(|e| matches!(e, Engine::Mc | Engine::Histogram | Engine::Stability));

    // Engine failures must still flush partial results before returning.
    let failure = 'run: {
        if classical_selected {
            let watch = Stopwatch::start();
            match classical_drift_probe(&cfg.system, &state, &times, integ.dt, seed) {
                Ok(drift) => {
                    for (row, d) in series.rows.iter_mut().zip(drift) {
                        row.c_energy_drift = Some(d);
                    }
                }
                Err(err) => break 'run Some(RunError::Probe(err)),
            }
            timing.push(EngineTiming { engine: "drift_probe".into(), seconds: watch.seconds() });
        }

        if engines.contains(&Engine::Stability) {
            let watch = Stopwatch::start();
            match crate::centropy::s_c_stability_series(
                &cfg.system,
                &state,
                &times,
                &integ,
                cfg.classical.stability.n_samples,
                seed,
            ) {
                Ok(samples) => {
                    for (row, s) in series.rows.iter_mut().zip(samples) {
                        row.s_c_stab = Some(s.estimate.value);
                        row.s_c_stab_err = Some(s.estimate.std_error);
                        row.stab_excluded = Some(s.excluded as u64);
                    }
                }
                Err(err) => break 'run Some(RunError::Centropy(err)),
            }
            timing.push(EngineTiming { engine: "stability".into(), seconds: watch.seconds() });
        }

        if engines.contains(&Engine::Histogram) {
            let watch = Stopwatch::start();
            match crate::centropy::s_c_histogram_series(
                &cfg.system,
                &state,
                &times,
                &integ,
                &cfg.classical.histogram.grid(),
                cfg.classical.histogram.n_trajectories,
                seed,
            ) {
                Ok(samples) => {
                    for (row, s) in series.rows.iter_mut().zip(samples) {
                        row.s_c_hist = Some(s.estimate.value);
                        row.hist_err = Some(s.estimate.std_error);
                        row.hist_coarse = Some(s.coarse_value);
                        row.hist_overflow = Some(s.overflow_fraction);
                    }
                }
                Err(err) => break 'run Some(RunError::Centropy(err)),
            }
            timing.push(EngineTiming { engine: "histogram".into(), seconds: watch.seconds() });
        }

        if engines.contains(&Engine::Quantum) {
            let watch = Stopwatch::start();
            match crate::quantum::evolve_and_record(&cfg.system, &state, &cfg.quantum, &times) {
                Ok(samples) => {
                    for (row, s) in series.rows.iter_mut().zip(samples) {
                        row.s_q = Some(s.s_q);
                        row.q_norm_drift = Some(s.norm_drift);
                        row.q_energy_drift = Some(s.energy_drift);
                        row.q_edge_prob = Some(s.edge_probability);
                    }
                }
                Err(err) => break 'run Some(RunError::Quantum(err)),
            }
            timing.push(EngineTiming { engine: "quantum".into(), seconds: watch.seconds() });
        }

        if engines.contains(&Engine::Mc) {
            let watch = Stopwatch::start();
            match crate::centropy::s_c_full_mc_series(
                &cfg.system,
                &state,
                &mc_times,
                &integ,
                &cfg.classical.mc.to_mc_config(seed),
            ) {
                Ok(samples) => {
                    let indices = mc_row_indices(&times, &mc_times, cfg.run.horizon);
                    for (&i, s) in indices.iter().zip(samples) {
                        let row = &mut series.rows[i];
                        row.s_c_mc = Some(s.estimate.value);
                        row.s_c_mc_err = Some(s.estimate.std_error);
                        row.mc_ess = Some(s.estimate.n_effective);
                    }
                }
                Err(err) => break 'run Some(RunError::Centropy(err)),
            }
            timing.push(EngineTiming { engine: "mc".into(), seconds: watch.seconds() });
        }

        match series.check_invariants() {
            Ok(()) => None,
            Err(msg) => Some(RunError::SeriesInvariant(msg)),
        }
    };

    let error_text = failure.as_ref().map(|e| e.to_string());
    let summary = RunSummary {
        name: cfg.run.name.clone(),
        seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: output::config_hash(cfg),
        horizon: cfg.run.horizon,
        n_times: cfg.run.n_times,
        engines: engines.iter().map(|e| e.name().to_string()).collect(),
        early_threshold: cfg.run.early_threshold,
        status: if failure.is_none() { "ok" } else { "failed" }.to_string(),
        error: error_text,
        timing,
        final_values: FinalValues::from_row(series.last()),
        diagnostics: DiagnosticSummary::from_series(&series),
    };

    let artifacts = output::emit_outputs(cfg, &series, &summary)?;
    match failure {
        Some(err) => Err(err),
        None => Ok(RunReport { series, summary, artifacts }),
    }
}

/// Convenience accessor pairing an estimate with its error (used by
/// downstream consumers of merged rows).
pub fn estimate_of(row: &EntropyRow, engine: Engine) -> Option<EntropyEstimate> {
    match engine {
        Engine::Quantum => row.s_q.map(|v| EntropyEstimate { value: v, std_error: 0.0, n_effective: 1.0 }),
        Engine::Mc => match (row.s_c_mc, row.s_c_mc_err, row.mc_ess) {
            (Some(v), Some(e), Some(n)) => Some(EntropyEstimate { value: v, std_error: e, n_effective: n }),
            _ => None,
        },
        Engine::Histogram => match (row.s_c_hist, row.hist_err) {
            (Some(v), Some(e)) => Some(EntropyEstimate { value: v, std_error: e, n_effective: 0.0 }),
            _ => None,
        },
        Engine::Stability => match (row.s_c_stab, row.s_c_stab_err) {
            (Some(v), Some(e)) => Some(EntropyEstimate { value: v, std_error: e, n_effective: 0.0 }),
            _ => None,
        },
    }
}

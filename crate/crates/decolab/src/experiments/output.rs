//! Output emission: CSV series, plot script, and machine-readable summary.
//!
//! The CSV is the single source of truth; the plot script reads it rather
//! than embedding any data, and the summary duplicates only final values and
//! aggregate diagnostics. For a fixed config and seed the CSV is
//! byte-identical across runs and worker counts.

use super::config::ScenarioConfig;
use super::runner::{EntropySeries, RunSummary};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use thiserror::Error;

/// Files produced by one run.
#[derive(Debug, Clone)]
pub struct Artifacts {
    pub csv: PathBuf,
    pub plot: PathBuf,
    pub summary: PathBuf,
}

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("refusing to emit an empty series")]
    EmptySeries,
}

/// 64-bit FNV-1a over arbitrary bytes; stable across platforms and runs.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0100_0000_01b3;
    bytes.iter().fold(OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(PRIME))
}

/// Canonical config fingerprint recorded in every output.
pub fn config_hash(cfg: &ScenarioConfig) -> String {
    format!("fnv1a64:{:016x}", fnv1a64(cfg.to_toml().as_bytes()))
}

fn write_file(path: &Path, contents: &str) -> Result<(), OutputError> {
    std::fs::write(path, contents).map_err(|source| OutputError::Io { path: path.to_path_buf(), source })
}

fn push_opt(line: &mut String, v: Option<f64>) {
    line.push(',');
    if let Some(v) = v {
        write!(line, "{v}").expect("writing to String cannot fail");
    }
}

/// Renders the CSV: `#`-prefixed metadata preamble, header row, one row per
/// output instant with empty cells where an engine did not run.
fn render_csv(cfg: &ScenarioConfig, series: &EntropySeries, summary: &RunSummary) -> String {
    let mut out = String::new();
    out.push_str(&format!("# decolab scenario: {}\n", summary.name));
    out.push_str(&format!("# config_hash: {}\n", summary.config_hash));
    out.push_str(&format!("# seed: {}\n", summary.seed));
    out.push_str(&format!("# version: {}\n", summary.version));
    out.push_str(&format!(
        "# horizon: {} ({} uniform instants; engines snap each instant to whole integrator steps)\n",
        summary.horizon, summary.n_times
    ));
    out.push_str(&format!("# engines: {}\n", summary.engines.join(",")));
    if let Some(thr) = summary.early_threshold {
        out.push_str(&format!("# early_threshold: {thr}\n"));
    }
    if let Some(ts) = &cfg.run.mc_times {
        let joined: Vec<String> = ts.iter().map(|t| t.to_string()).collect();
        out.push_str(&format!("# mc_times: {}\n", joined.join(",")));
    }
    match &summary.error {
        None => out.push_str("# status: ok\n"),
        Some(err) => {
            // single-line failure marker, newlines folded
            out.push_str(&format!("# status: FAILED: {}\n", err.replace('\n', " | ")));
        }
    }
    out.push_str(
        "t,S_q,S_c_mc,S_c_mc_err,S_c_hist,S_c_stab,S_c_stab_err,\
         diag_q_norm_drift,diag_q_energy_drift,diag_q_edge_prob,diag_c_energy_drift,\
         diag_mc_ess,diag_hist_err,diag_hist_coarse,diag_hist_overflow,diag_stab_excluded\n",
    );
    for row in &series.rows {
        let mut line = String::new();
        write!(line, "{}", row.t).expect("writing to String cannot fail");
        push_opt(&mut line, row.s_q);
        push_opt(&mut line, row.s_c_mc);
        push_opt(&mut line, row.s_c_mc_err);
        push_opt(&mut line, row.s_c_hist);
        push_opt(&mut line, row.s_c_stab);
        push_opt(&mut line, row.s_c_stab_err);
        push_opt(&mut line, row.q_norm_drift);
        push_opt(&mut line, row.q_energy_drift);
        push_opt(&mut line, row.q_edge_prob);
        push_opt(&mut line, row.c_energy_drift);
        push_opt(&mut line, row.mc_ess);
        push_opt(&mut line, row.hist_err);
        push_opt(&mut line, row.hist_coarse);
        push_opt(&mut line, row.hist_overflow);
        line.push(',');
        if let Some(x) = row.stab_excluded {
            write!(line, "{x}").expect("writing to String cannot fail");
        }
        line.push('\n');
        out.push_str(&line);
    }
    out
}

/// Gnuplot script reading the CSV it sits next to.
fn render_plot_script(summary: &RunSummary) -> String {
    format!(
        "# Renders the entropy series from series.csv.\n\
         # Usage: gnuplot -p plot.gp   (or: gnuplot -e \"set term png; set output 'series.png'\" plot.gp)\n\
         set datafile separator ','\n\
         set datafile commentschars '#'\n\
         set datafile missing ''\n\
         set key left top\n\
         set xlabel 'time'\n\
         set ylabel 'linear entropy'\n\
         set title 'decolab scenario: {name}'\n\
         set yrange [-0.05:1.05]\n\
         plot 'series.csv' using 1:2 with lines lw 2 title 'S_q (quantum)', \\\n\
         \x20    'series.csv' using 1:3:4 with yerrorbars pt 7 ps 0.6 title 'S_c (backward MC)', \\\n\
         \x20    'series.csv' using 1:5 with lines dashtype 2 title 'S_c (histogram)', \\\n\
         \x20    'series.csv' using 1:6:7 with yerrorlines pt 6 ps 0.4 title 'S_c (tangent kernel)'\n",
        name = summary.name
    )
}

/// Writes series.csv, plot.gp, and summary.json into `cfg.run.out_dir`.
pub fn emit_outputs(
    cfg: &ScenarioConfig,
    series: &EntropySeries,
    summary: &RunSummary,
) -> Result<Artifacts, OutputError> {
    if series.rows.is_empty() {
        return Err(OutputError::EmptySeries);
    }
    let dir = &cfg.run.out_dir;
    std::fs::create_dir_all(dir).map_err(|source| OutputError::Io { path: dir.clone(), source })?;

    let artifacts = Artifacts {
        csv: dir.join("series.csv"),
        plot: dir.join("plot.gp"),
        summary: dir.join("summary.json"),
    };
    write_file(&artifacts.csv, &render_csv(cfg, series, summary))?;
    write_file(&artifacts.plot, &render_plot_script(summary))?;
    let json = serde_json::to_string_pretty(summary).expect("summary serialization cannot fail");
    write_file(&artifacts.summary, &(json + "\n"))?;
    Ok(artifacts)
}

//! Sweep execution and artifact emission.
//!
//! A sweep runs `trials` independent trials per SNR point (concurrently;
//! results merge in trial order, so the artifacts are reproducible), reduces
//! them to one row per point, and writes a fixed-column CSV plus a JSON
//! sidecar carrying the exact configuration that produced it.

use std::fs;
use std::path::{Path, PathBuf};

use afdm_core::params::{draw_channel_distinct_delays, Regime};
use afdm_core::pilot::{build_pilot_only_frame, nmse_a};
use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::trial::{run_trial, TrialOutput};

/// One aggregated sweep point, in CSV column order.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ResultRow {
    pub scheme: String,
    pub regime: String,
    pub snr_db: f64,
    pub nmse: f64,
    pub ber: f64,
    pub eval_count_mean: f64,
    pub trials: usize,
    pub seed: u64,
}

/// Runs the configured sweep; one row per SNR point.
pub fn run_sweep(config: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    config.validate()?;
    let mut rows = Vec::with_capacity(config.snr_db_list.len());
    for &snr_db in &config.snr_db_list {
        let outputs: Vec<TrialOutput> = (0..config.trials as u64)
            .into_par_iter()
            .map(|trial| run_trial(config, snr_db, trial))
            .collect::<Result<_>>()?;
        rows.push(reduce_point(config, snr_db, &outputs));
        log::info!(
            "{} {} snr {:>5.1} dB done ({} trials)",
            config.scheme,
            config.regime,
            snr_db,
            outputs.len()
        );
    }
    Ok(rows)
}

fn reduce_point(config: &ExperimentConfig, snr_db: f64, outputs: &[TrialOutput]) -> ResultRow {
    let n = outputs.len() as f64;
    let (errors, bits) = outputs
        .iter()
        .fold((0u64, 0u64), |(e, b), o| (e + o.bit_errors, b + o.bits));
    ResultRow {
        scheme: config.scheme.clone(),
        regime: config.regime.clone(),
        snr_db,
        nmse: outputs.iter().map(|o| o.nmse).sum::<f64>() / n,
        ber: errors as f64 / bits as f64,
        eval_count_mean: outputs.iter().map(|o| o.eval_count as f64).sum::<f64>() / n,
        trials: outputs.len(),
        seed: config.seed,
    }
}

/// Writes rows as CSV and the config as a JSON sidecar next to it; returns
/// the sidecar path.
pub fn write_sweep_artifacts(
    config: &ExperimentConfig,
    rows: &[ResultRow],
    out: &Path,
) -> Result<PathBuf> {
    write_csv(rows, out)?;
    let sidecar = sidecar_path(out);
    let json = serde_json::to_string_pretty(config).expect("config always serializes");
    fs::write(&sidecar, json + "\n")
        .with_context(|| format!("writing config sidecar {}", sidecar.display()))?;
    Ok(sidecar)
}

/// `results.csv` → `results.config.json`.
pub fn sidecar_path(out: &Path) -> PathBuf {
    out.with_extension("config.json")
}

/// Serializes any uniform row type to CSV with headers.
pub fn write_csv<T: Serialize>(rows: &[T], out: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(out)
        .with_context(|| format!("creating output file {}", out.display()))?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer
        .flush()
        .with_context(|| format!("writing {}", out.display()))
}

/// One point of the pilot-orthogonality sweep.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct OrthogonalityRow {
    /// Which parameter this point varies: `xi` or `n`.
    pub axis: String,
    pub value: u64,
    pub median_nmse_a: f64,
    pub channels: usize,
}

/// Median template-orthogonality error (NMSE_A) across random channels with
/// pairwise-distinct integer delay parts, along two axes: the guard factor
/// ξ = 1..8 at N = 256, and N = 200·(1..8) at ξ = 4.
///
/// Channels are paired across points of an axis (same per-index RNG
/// stream), which removes draw-to-draw scatter from the cross-point
/// comparison the sweep exists for.
pub fn orthogonality_rows(channels: usize, seed: u64) -> Result<Vec<OrthogonalityRow>> {
    if channels == 0 {
        bail!("orthogonality sweep needs at least one channel per point");
    }
    let base = ExperimentConfig { seed, ..ExperimentConfig::default() };
    let mut rows = Vec::with_capacity(16);
    for xi in 1..=8 {
        let config = ExperimentConfig { xi, ..base.clone() };
        rows.push(orthogonality_point("xi", xi as u64, channels, &config)?);
    }
    for scale in 1..=8 {
        let config = ExperimentConfig {
            n_subcarriers: 200 * scale,
            xi: 4,
            ..base.clone()
        };
        rows.push(orthogonality_point("n", 200 * scale as u64, channels, &config)?);
    }
    Ok(rows)
}

fn orthogonality_point(
    axis: &str,
    value: u64,
    channels: usize,
    config: &ExperimentConfig,
) -> Result<OrthogonalityRow> {
    let (cfg, limits) = config.derived()?;
    let spec = config.channel_spec();
    let frame = build_pilot_only_frame(&cfg, &limits, config.pilot_power_db)
        .context("building the orthogonality pilot frame")?;
    let mut values: Vec<f64> = (0..channels as u64)
        .into_par_iter()
        .map(|idx| {
            let mut rng = crate::trial::stream_rng(config.seed, 1, idx);
            let channel = draw_channel_distinct_delays(&spec, &limits, Regime::Fdfd, &mut rng)?;
            Ok(nmse_a(&cfg, &frame, &channel.paths))
        })
        .collect::<Result<_>>()?;
    values.sort_by(|a, b| a.total_cmp(b));
    Ok(OrthogonalityRow {
        axis: axis.into(),
        value,
        median_nmse_a: values[values.len() / 2],
        channels,
    })
}

/// One sample of the SINR-loss surface over the fractional (ι, κ) square.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct SinrLossRow {
    pub iota: f64,
    pub kappa: f64,
    pub sinr_loss_db: f64,
}

/// Samples the closed-form SINR loss caused by fractional delay/Doppler
/// parts on a `steps`-interval grid per axis.
pub fn sinr_loss_rows(n_subcarriers: usize, steps: usize) -> Result<Vec<SinrLossRow>> {
    let config = ExperimentConfig { n_subcarriers, ..ExperimentConfig::default() };
    let (cfg, _) = config.derived()?;
    Ok(afdm_core::iorel::sinr_loss_surface(&cfg, steps)
        .into_iter()
        .map(|(iota, kappa, sinr_loss_db)| SinrLossRow { iota, kappa, sinr_loss_db })
        .collect())
}

/// Parses an SNR sweep specification: either `start:step:stop` (inclusive)
/// or a comma-separated list of points.
pub fn parse_snr_spec(spec: &str) -> Result<Vec<f64>> {
    let parse = |s: &str| -> Result<f64> {
        s.trim()
            .parse::<f64>()
            .with_context(|| format!("invalid SNR value `{s}`"))
    };
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() == 3 {
        let (start, step, stop) = (parse(parts[0])?, parse(parts[1])?, parse(parts[2])?);
        if step <= 0.0 {
            bail!("SNR step must be positive in `{spec}`");
        }
        let mut out = Vec::new();
        let mut v = start;
        while v <= stop + 1e-9 {
            out.push(v);
            v += step;
        }
        if out.is_empty() {
            bail!("empty SNR range `{spec}`");
        }
        return Ok(out);
    }
    if parts.len() != 1 {
        bail!("SNR spec `{spec}` must be start:step:stop or a comma list");
    }
    spec.split(',').map(parse).collect()
}

//! Experiment configuration: a flat key/value TOML file whose field names
//! follow the waveform/channel parameter tables, plus the runtime knobs of
//! the estimation schemes and the sweep itself.
//!
//! Every field has a default matching the benchmark parameter set, so an
//! empty file (or no file at all) is a valid configuration and the CLI only
//! has to override what an experiment actually varies.

use std::fs;
use std::path::Path;

use afdm_core::estimate::{scheme_by_name, SchemeOpts};
use afdm_core::params::{
    derive_limits, ChannelSpec, GridLimits, Regime, WaveformConfig, WaveformParams,
};
use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

/// Everything a sweep needs; serializes 1:1 to the TOML config and the JSON
/// sidecar written next to each result file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    // Waveform.
    pub n_subcarriers: usize,
    pub subcarrier_spacing_hz: f64,
    /// Guard-widening factor of the primary frame's chirp rate.
    pub xi: i64,
    /// Chirp-rate factor of the second frame (fractional-delay channels
    /// need two frames with ξ′ ≠ ξ).
    pub xi_prime: i64,
    pub c2: f64,
    // Channel.
    pub tau_max_s: f64,
    pub nu_max_hz: f64,
    pub num_paths: usize,
    /// Pilot power over the unit-energy data symbols, in dB.
    pub pilot_power_db: f64,
    // Experiment.
    pub scheme: String,
    pub regime: String,
    pub snr_db_list: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    // Estimator knobs.
    pub t_iter: usize,
    pub sigma_stop: f64,
    pub residual_floor: f64,
    pub rho: usize,
    pub gfs_n_g: usize,
    pub gfs_epsilon: f64,
    pub ls_threshold: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let (spec, wf) = afdm_core::params::benchmark_spec();
        let opts = SchemeOpts::default();
        ExperimentConfig {
            n_subcarriers: wf.n_subcarriers,
            subcarrier_spacing_hz: wf.subcarrier_spacing_hz,
            xi: wf.xi,
            xi_prime: wf.xi + 1,
            c2: wf.c2,
            tau_max_s: spec.tau_max_s,
            nu_max_hz: spec.nu_max_hz,
            num_paths: spec.num_paths,
            pilot_power_db: 30.0,
            scheme: "mf_grid".into(),
            regime: "fdfd".into(),
            snr_db_list: vec![0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0],
            trials: 200,
            seed: 1,
            t_iter: opts.t_iter,
            sigma_stop: opts.sigma_stop,
            residual_floor: opts.residual_floor,
            rho: 20,
            gfs_n_g: opts.gfs_n_g,
            gfs_epsilon: opts.gfs_epsilon,
            ls_threshold: opts.ls_threshold,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: ExperimentConfig = toml::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials < 1 {
            bail!("trials must be at least 1, got {}", self.trials);
        }
        if self.snr_db_list.is_empty() {
            bail!("snr_db_list must not be empty");
        }
        if scheme_by_name(&self.scheme).is_none() {
            bail!(
                "unknown scheme `{}` (mf_grid|mf_gfs|ls_baseline|perfect_csi)",
                self.scheme
            );
        }
        self.parse_regime()?;
        if self.xi == self.xi_prime {
            bail!("xi and xi_prime must differ (both are {})", self.xi);
        }
        // Both frame geometries must actually derive.
        self.derived()?;
        self.derived_prime()?;
        Ok(())
    }

    pub fn parse_regime(&self) -> Result<Regime> {
        self.regime.parse::<Regime>().map_err(anyhow::Error::msg)
    }

    pub fn channel_spec(&self) -> ChannelSpec {
        ChannelSpec {
            tau_max_s: self.tau_max_s,
            nu_max_hz: self.nu_max_hz,
            num_paths: self.num_paths,
        }
    }

    fn waveform(&self, xi: i64) -> WaveformParams {
        WaveformParams {
            n_subcarriers: self.n_subcarriers,
            subcarrier_spacing_hz: self.subcarrier_spacing_hz,
            xi,
            c2: self.c2,
        }
    }

    /// Derived configuration and grid limits of the primary frame.
    pub fn derived(&self) -> Result<(WaveformConfig, GridLimits)> {
        derive_limits(&self.channel_spec(), &self.waveform(self.xi))
            .context("deriving the primary frame geometry")
    }

    /// Same for the second (ξ′) frame of dual-pilot transmissions.
    pub fn derived_prime(&self) -> Result<(WaveformConfig, GridLimits)> {
        derive_limits(&self.channel_spec(), &self.waveform(self.xi_prime))
            .context("deriving the second frame geometry")
    }

    pub fn scheme_opts(&self) -> SchemeOpts {
        SchemeOpts {
            t_iter: self.t_iter,
            sigma_stop: self.sigma_stop,
            residual_floor: self.residual_floor,
            rho: self.rho,
            gfs_n_g: self.gfs_n_g,
            gfs_epsilon: self.gfs_epsilon,
            ls_threshold: self.ls_threshold,
        }
    }
}

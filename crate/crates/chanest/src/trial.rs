//! One Monte Carlo trial: draw a channel, transmit pilot frames through it,
//! estimate, reconstruct the effective channel, and score NMSE and BER.
//!
//! A trial is deterministic given (config, snr, trial index): the channel,
//! payload and noise come from counter-mode streams of the master seed, so
//! trials can run concurrently and still merge into reproducible results.
//! The channel stream does not depend on the SNR, which pairs the same
//! channel realizations across all points of a sweep.

use afdm_core::channel::{apply_channel, nmse, EffectiveChannel};
use afdm_core::daft::demodulate;
use afdm_core::equalize::{LmmseSolver, QamAlphabet};
use afdm_core::estimate::{scheme_by_name, EstimateReport, SchemeInput};
use afdm_core::params::{
    draw_channel_distinct_delays, draw_channel_regime, ChannelRealization, Regime, WaveformConfig,
};
use afdm_core::pilot::{
    build_dual_frames, build_pilot_frame, truncate, PayloadMode, PilotFrame,
};
use afdm_core::Complex64;
use anyhow::{Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::ExperimentConfig;

/// Raw outcome of a single trial, before aggregation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialOutput {
    pub nmse: f64,
    pub bit_errors: u64,
    pub bits: u64,
    pub eval_count: usize,
    pub paths_found: usize,
}

/// A ChaCha stream keyed by (master, salt, stream): `salt` separates
/// independent random purposes, `stream` separates trials.
pub(crate) fn stream_rng(master: u64, salt: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(stream);
    rng
}

fn snr_to_noise_variance(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 10.0)
}

/// Equalizes one received frame with the reconstructed channel and counts
/// payload bit errors against what the frame actually carried.
fn frame_bit_errors(
    frame: &PilotFrame,
    y: &[Complex64],
    h_hat: &nalgebra::DMatrix<Complex64>,
    noise_variance: f64,
    alphabet: &QamAlphabet,
) -> Result<(u64, u64)> {
    let solver = LmmseSolver::new(h_hat, noise_variance)
        .context("factoring the reconstructed channel for equalization")?;
    let x_hat = solver.apply(y).context("equalizing the received frame")?;
    let sent = alphabet.demap(&frame.payload());
    let got = alphabet.demap(
        &frame
            .data_positions()
            .into_iter()
            .map(|idx| x_hat[idx])
            .collect::<Vec<_>>(),
    );
    let errors = sent.iter().zip(&got).filter(|(a, b)| a != b).count() as u64;
    Ok((errors, sent.len() as u64))
}

fn demodulated(cfg: &WaveformConfig, r: &afdm_core::daft::DaftFrame) -> Result<Vec<Complex64>> {
    Ok(demodulate(cfg, r).context("demodulating the received frame")?.samples)
}

/// Runs trial number `trial` of the configured experiment at one SNR point.
pub fn run_trial(config: &ExperimentConfig, snr_db: f64, trial: u64) -> Result<TrialOutput> {
    let regime = config.parse_regime()?;
    let (cfg, limits) = config.derived()?;
    let spec = config.channel_spec();
    let noise_variance = snr_to_noise_variance(snr_db);

    let mut source_rng = stream_rng(config.seed, 0, trial);
    let mut noise_rng = stream_rng(config.seed, snr_db.to_bits(), trial);
    // Doubly fractional trials keep the integer delay parts pairwise distinct
    // (fractions stay uniform) so that every drawn channel is resolvable by
    // its shift signature: fully uniform delays can put two paths within a
    // fraction of a bin of each other in both frames at once, and no
    // shift-domain matched filter can split such a blend. The grid regimes
    // snap uniform draws instead — there a coincident cell merges into one
    // tap exactly, which costs nothing.
    let channel = match regime {
        Regime::Fdfd => draw_channel_distinct_delays(&spec, &limits, regime, &mut source_rng)
            .context("drawing the trial channel")?,
        _ => draw_channel_regime(&spec, &cfg, &limits, regime, &mut source_rng),
    };

    let scheme = scheme_by_name(&config.scheme)
        .with_context(|| format!("unknown scheme `{}`", config.scheme))?;
    let alphabet = QamAlphabet::new(4).expect("4-QAM is always available");

    let truth_eff = EffectiveChannel::build(&cfg, &channel.paths);
    let mut output = match regime {
        Regime::Fdfd => run_dual_frame_trial(
            config,
            &cfg,
            &limits,
            &channel,
            noise_variance,
            scheme,
            &alphabet,
            &mut source_rng,
            &mut noise_rng,
        )?,
        _ => run_single_frame_trial(
            config,
            &cfg,
            &limits,
            &channel,
            regime,
            noise_variance,
            scheme,
            &alphabet,
            &mut source_rng,
            &mut noise_rng,
        )?,
    };
    let estimated_eff = EffectiveChannel::build(&cfg, &output.1.channel_paths());
    output.0.nmse = nmse(&truth_eff.matrix, &estimated_eff.matrix);
    Ok(output.0)
}

#[allow(clippy::too_many_arguments)]
fn run_single_frame_trial(
    config: &ExperimentConfig,
    cfg: &WaveformConfig,
    limits: &afdm_core::params::GridLimits,
    channel: &ChannelRealization,
    regime: Regime,
    noise_variance: f64,
    scheme: &dyn afdm_core::estimate::EstimationScheme,
    alphabet: &QamAlphabet,
    source_rng: &mut ChaCha8Rng,
    noise_rng: &mut ChaCha8Rng,
) -> Result<(TrialOutput, EstimateReport)> {
    let frame = build_pilot_frame(cfg, limits, config.pilot_power_db, source_rng)
        .context("building the pilot frame")?;
    let received = apply_channel(cfg, &frame.x, &channel.paths, noise_variance, noise_rng)
        .context("applying the channel")?;
    let y = demodulated(cfg, &received)?;
    let observation = truncate(cfg, &afdm_core::daft::DaftFrame::daft(y.clone()), &frame)
        .context("truncating the observation window")?;
    let input = SchemeInput {
        cfg,
        cfg_prime: None,
        limits,
        y: &observation,
        y_prime: None,
        pilot_value: frame.pilot_value,
        regime,
        noise_std: noise_variance.sqrt(),
        opts: config.scheme_opts(),
        truth: Some(&channel.paths),
    };
    let report = scheme.estimate(&input).context("running the estimator")?;
    let h_hat = EffectiveChannel::build(cfg, &report.channel_paths());
    let (bit_errors, bits) = frame_bit_errors(&frame, &y, &h_hat.matrix, noise_variance, alphabet)?;
    Ok((
        TrialOutput {
            nmse: f64::NAN, // filled by the caller against the true channel
            bit_errors,
            bits,
            eval_count: report.eval_count,
            paths_found: report.paths.len(),
        },
        report,
    ))
}

#[allow(clippy::too_many_arguments)]
fn run_dual_frame_trial(
    config: &ExperimentConfig,
    cfg: &WaveformConfig,
    limits: &afdm_core::params::GridLimits,
    channel: &ChannelRealization,
    noise_variance: f64,
    scheme: &dyn afdm_core::estimate::EstimationScheme,
    alphabet: &QamAlphabet,
    source_rng: &mut ChaCha8Rng,
    noise_rng: &mut ChaCha8Rng,
) -> Result<(TrialOutput, EstimateReport)> {
    let (cfg_prime, limits_prime) = config.derived_prime()?;
    let (frame, frame_prime) = build_dual_frames(
        cfg,
        &cfg_prime,
        limits,
        &limits_prime,
        config.pilot_power_db,
        PayloadMode::Independent,
        source_rng,
    )
    .context("building the dual pilot frames")?;
    let received = apply_channel(cfg, &frame.x, &channel.paths, noise_variance, noise_rng)
        .context("applying the channel to the first frame")?;
    let received_prime = apply_channel(
        &cfg_prime,
        &frame_prime.x,
        &channel.paths,
        noise_variance,
        noise_rng,
    )
    .context("applying the channel to the second frame")?;
    let y = demodulated(cfg, &received)?;
    let y_prime = demodulated(&cfg_prime, &received_prime)?;
    let observation = truncate(cfg, &afdm_core::daft::DaftFrame::daft(y.clone()), &frame)?;
    let observation_prime = truncate(
        &cfg_prime,
        &afdm_core::daft::DaftFrame::daft(y_prime.clone()),
        &frame_prime,
    )?;
    let input = SchemeInput {
        cfg,
        cfg_prime: Some(&cfg_prime),
        limits,
        y: &observation,
        y_prime: Some(&observation_prime),
        pilot_value: frame.pilot_value,
        regime: Regime::Fdfd,
        noise_std: noise_variance.sqrt(),
        opts: config.scheme_opts(),
        truth: Some(&channel.paths),
    };
    let report = scheme.estimate(&input).context("running the estimator")?;
    let estimated = report.channel_paths();
    let h_hat = EffectiveChannel::build(cfg, &estimated);
    let h_hat_prime = EffectiveChannel::build(&cfg_prime, &estimated);
    let (e1, b1) = frame_bit_errors(&frame, &y, &h_hat.matrix, noise_variance, alphabet)?;
    let (e2, b2) = frame_bit_errors(
        &frame_prime,
        &y_prime,
        &h_hat_prime.matrix,
        noise_variance,
        alphabet,
    )?;
    Ok((
        TrialOutput {
            nmse: f64::NAN,
            bit_errors: e1 + e2,
            bits: b1 + b2,
            eval_count: report.eval_count,
            paths_found: report.paths.len(),
        },
        report,
    ))
}

//! Pilot-embedded frames, truncation windows and matched-filter templates.
//!
//! A frame carries one boosted pilot x_p at bin n_p, a mod-N guard band of
//! zeros wide enough that data never leaks into the pilot's observation
//! window (and vice versa), and QAM data elsewhere. The receiver keeps only
//! the window m ∈ [n_p − Q2, n_p + Q1], inside which the noiseless
//! observation is x_p·Σ_i h_i·a_T(l_i, k_i): a linear combination of
//! template columns, one per path.

use std::io;

use num_complex::Complex64;
use rand::Rng;
use thiserror::Error;

use crate::daft::{DaftError, DaftFrame, Domain};
use crate::equalize::QamAlphabet;
use crate::iorel::{g_kernel, j_kernel};
use crate::params::{ChannelPath, GridLimits, WaveformConfig};

#[derive(Debug, Error, PartialEq)]
pub enum PilotError {
    #[error("guard band of {needed} symbols does not fit into N = {n}")]
    GuardDoesNotFit { needed: usize, n: usize },
    #[error("dual frames need distinct chirp rates, both have ξ = {0}")]
    SameChirpRate(i64),
    #[error(transparent)]
    Daft(#[from] DaftError),
}

/// Whether the two frames of a dual-pilot transmission carry the same data
/// symbols or independent draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PayloadMode {
    /// Separate payloads per frame (the realistic default).
    Independent,
    /// Identical payloads, useful for controlled tests.
    Shared,
}

/// A DAFT-domain frame with an embedded pilot.
#[derive(Debug, Clone)]
pub struct PilotFrame {
    pub x: DaftFrame,
    pub pilot_index: usize,
    pub pilot_value: Complex64,
    pub limits: GridLimits,
    /// Actual half-width of the zero band around the pilot; at least
    /// `limits.q`, wider when paired with a frame of larger guard budget.
    pub guard_radius: usize,
}

impl PilotFrame {
    /// Bins carrying data symbols: everything farther than `guard_radius`
    /// from the pilot in circular distance.
    pub fn data_positions(&self) -> Vec<usize> {
        let n = self.x.len();
        (0..n)
            .filter(|&idx| circular_distance(idx, self.pilot_index, n) > self.guard_radius)
            .collect()
    }

    /// The transmitted data symbols in index order.
    pub fn payload(&self) -> Vec<Complex64> {
        self.data_positions()
            .into_iter()
            .map(|idx| self.x.samples[idx])
            .collect()
    }
}

fn circular_distance(a: usize, b: usize, n: usize) -> usize {
    let d = (a + n - b) % n;
    d.min(n - d)
}

fn pilot_amplitude(pilot_power_db: f64) -> Complex64 {
    // |x_p|² / E{|x_data|²} = 10^{dB/10} with unit-energy data; the pilot
    // phase carries no information, so it is real positive.
    Complex64::new(10f64.powf(pilot_power_db / 20.0), 0.0)
}

fn place_frame(
    cfg: &WaveformConfig,
    limits: &GridLimits,
    n_p: usize,
    guard_radius: usize,
    pilot_power_db: f64,
    payload: &[Complex64],
) -> Result<PilotFrame, PilotError> {
    let n = cfg.n();
    if n < 2 * guard_radius + 1 {
        return Err(PilotError::GuardDoesNotFit {
            needed: 2 * guard_radius + 1,
            n,
        });
    }
    let x_p = pilot_amplitude(pilot_power_db);
    let mut x = DaftFrame::zeros(Domain::Daft, n);
    x.samples[n_p % n] = x_p;
    let mut frame = PilotFrame {
        x,
        pilot_index: n_p % n,
        pilot_value: x_p,
        limits: *limits,
        guard_radius,
    };
    let positions = frame.data_positions();
    debug_assert_eq!(positions.len(), payload.len());
    for (idx, &sym) in positions.iter().zip(payload) {
        frame.x.samples[*idx] = sym;
    }
    Ok(frame)
}

fn draw_payload<R: Rng + ?Sized>(alphabet: &QamAlphabet, count: usize, rng: &mut R) -> Vec<Complex64> {
    (0..count)
        .map(|_| alphabet.symbol(rng.gen_range(0..alphabet.order())))
        .collect()
}

/// Builds a pilot frame with the default placement n_p = Q (so the guard
/// band [n_p − Q, n_p + Q] never wraps) and 4-QAM data elsewhere.
pub fn build_pilot_frame<R: Rng + ?Sized>(
    cfg: &WaveformConfig,
    limits: &GridLimits,
    pilot_power_db: f64,
    rng: &mut R,
) -> Result<PilotFrame, PilotError> {
    build_pilot_frame_at(cfg, limits, limits.q, pilot_power_db, rng)
}

/// Builds a pilot frame at an explicit pilot bin; the guard band is placed
/// mod N around it.
pub fn build_pilot_frame_at<R: Rng + ?Sized>(
    cfg: &WaveformConfig,
    limits: &GridLimits,
    n_p: usize,
    pilot_power_db: f64,
    rng: &mut R,
) -> Result<PilotFrame, PilotError> {
    let n = cfg.n();
    if !limits.guard_fits(n) {
        return Err(PilotError::GuardDoesNotFit {
            needed: 2 * limits.q + 1,
            n,
        });
    }
    let alphabet = QamAlphabet::new(4).expect("4-QAM is always available");
    let payload = draw_payload(&alphabet, n - (2 * limits.q + 1), rng);
    place_frame(cfg, limits, n_p, limits.q, pilot_power_db, &payload)
}

/// Pilot and guards only, no data — the controlled input for estimator
/// tests and template measurements.
pub fn build_pilot_only_frame(
    cfg: &WaveformConfig,
    limits: &GridLimits,
    pilot_power_db: f64,
) -> Result<PilotFrame, PilotError> {
    let n = cfg.n();
    if !limits.guard_fits(n) {
        return Err(PilotError::GuardDoesNotFit {
            needed: 2 * limits.q + 1,
            n,
        });
    }
    let payload = vec![Complex64::new(0.0, 0.0); n - (2 * limits.q + 1)];
    place_frame(cfg, limits, limits.q, limits.q, pilot_power_db, &payload)
}

/// Builds the two-frame pilot pattern for fractional-delay channels: same
/// placement in both frames, different chirp rates (ξ ≠ ξ′).
///
/// Both frames share the pilot bin and the guard radius of the wider
/// configuration, so their data regions coincide; the per-frame truncation
/// windows still use each frame's own Q1/Q2.
pub fn build_dual_frames<R: Rng + ?Sized>(
    cfg: &WaveformConfig,
    cfg_prime: &WaveformConfig,
    limits: &GridLimits,
    limits_prime: &GridLimits,
    pilot_power_db: f64,
    mode: PayloadMode,
    rng: &mut R,
) -> Result<(PilotFrame, PilotFrame), PilotError> {
    if cfg.xi == cfg_prime.xi {
        return Err(PilotError::SameChirpRate(cfg.xi));
    }
    let n = cfg.n();
    let radius = limits.q.max(limits_prime.q);
    if n < 2 * radius + 1 {
        return Err(PilotError::GuardDoesNotFit {
            needed: 2 * radius + 1,
            n,
        });
    }
    let n_p = radius;
    let alphabet = QamAlphabet::new(4).expect("4-QAM is always available");
    let count = n - (2 * radius + 1);
    let payload = draw_payload(&alphabet, count, rng);
    let payload_prime = match mode {
        PayloadMode::Shared => payload.clone(),
        PayloadMode::Independent => draw_payload(&alphabet, count, rng),
    };
    let first = place_frame(cfg, limits, n_p, radius, pilot_power_db, &payload)?;
    let second = place_frame(
        cfg_prime,
        limits_prime,
        n_p,
        radius,
        pilot_power_db,
        &payload_prime,
    )?;
    Ok((first, second))
}

/// The length-(Q+1) slice of a demodulated frame the estimators work on.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedObservation {
    /// y(m) for m = n_p − Q2 … n_p + Q1 (mod N).
    pub y_t: Vec<Complex64>,
    pub n_p: usize,
    pub q1: usize,
    pub q2: usize,
}

impl TruncatedObservation {
    pub fn window_len(&self) -> usize {
        self.q1 + self.q2 + 1
    }

    /// Signed offset from the pilot bin of window position w.
    pub fn offset_of(&self, w: usize) -> i64 {
        w as i64 - self.q2 as i64
    }

    /// Window position of a signed offset, if it lies inside the window.
    pub fn position_of(&self, offset: i64) -> Option<usize> {
        let w = offset + self.q2 as i64;
        (0..self.window_len() as i64)
            .contains(&w)
            .then_some(w as usize)
    }

    pub fn energy(&self) -> f64 {
        self.y_t.iter().map(|z| z.norm_sqr()).sum()
    }
}

/// Extracts the observation window [n_p − Q2, n_p + Q1] (mod N) from a
/// demodulated frame.
pub fn truncate(
    cfg: &WaveformConfig,
    y: &DaftFrame,
    frame: &PilotFrame,
) -> Result<TruncatedObservation, PilotError> {
    if y.domain != Domain::Daft {
        return Err(PilotError::Daft(DaftError::WrongDomain {
            expected: Domain::Daft,
            got: y.domain,
        }));
    }
    let n = cfg.n();
    if y.len() != n {
        return Err(PilotError::Daft(DaftError::LengthMismatch {
            expected: n,
            got: y.len(),
        }));
    }
    let q1 = frame.limits.q1;
    let q2 = frame.limits.q2;
    let start = frame.pilot_index as i64 - q2 as i64;
    let y_t = (0..=(q1 + q2))
        .map(|w| y.samples[(start + w as i64).rem_euclid(n as i64) as usize])
        .collect();
    Ok(TruncatedObservation {
        y_t,
        n_p: frame.pilot_index,
        q1,
        q2,
    })
}

/// Matched-filter template a_T(l, k): the pilot's response over the window,
/// {a_T}_w = G(m_w, n_p, k, l).
pub fn template_a(cfg: &WaveformConfig, frame: &PilotFrame, l: f64, k: f64) -> Vec<Complex64> {
    window_template_a(cfg, frame.pilot_index, frame.limits.q1, frame.limits.q2, l, k)
}

/// [`template_a`] addressed by raw window metadata (as carried by a
/// [`TruncatedObservation`]).
pub fn window_template_a(
    cfg: &WaveformConfig,
    n_p: usize,
    q1: usize,
    q2: usize,
    l: f64,
    k: f64,
) -> Vec<Complex64> {
    let n = cfg.n();
    let start = n_p as i64 - q2 as i64;
    (0..=(q1 + q2))
        .map(|w| {
            let m = (start + w as i64).rem_euclid(n as i64) as usize;
            g_kernel(cfg, m, n_p, k, l)
        })
        .collect()
}

/// Phase-free template T(χ): {T}_w = J(m_w, n_p, χ), used for fraction
/// search where the α phase is irrelevant.
pub fn template_t(cfg: &WaveformConfig, frame: &PilotFrame, chi: f64) -> Vec<Complex64> {
    window_template_t(cfg, frame.pilot_index, frame.limits.q1, frame.limits.q2, chi)
}

/// [`template_t`] addressed by raw window metadata.
pub fn window_template_t(
    cfg: &WaveformConfig,
    n_p: usize,
    q1: usize,
    q2: usize,
    chi: f64,
) -> Vec<Complex64> {
    let n = cfg.n();
    let start = n_p as i64 - q2 as i64;
    (0..=(q1 + q2))
        .map(|w| {
            let m = (start + w as i64).rem_euclid(n as i64) as usize;
            j_kernel(cfg, m, n_p, chi)
        })
        .collect()
}

/// |a(l1,k1)ᴴ a(l2,k2)| over the full N-bin window, together with its sinc
/// approximation |sinc(2Nc1(l2 − l1) − (k2 − k1))|.
pub fn mutual_coherence(
    cfg: &WaveformConfig,
    l1: f64,
    k1: f64,
    l2: f64,
    k2: f64,
) -> (f64, f64) {
    let n = cfg.n();
    let mut acc = Complex64::new(0.0, 0.0);
    for m in 0..n {
        acc += g_kernel(cfg, m, 0, k1, l1).conj() * g_kernel(cfg, m, 0, k2, l2);
    }
    let arg = cfg.two_n_c1() * (l2 - l1) - (k2 - k1);
    (acc.norm(), sinc(arg).abs())
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (std::f64::consts::PI * x).sin() / (std::f64::consts::PI * x)
    }
}

/// Orthogonality defect of a channel's template bank:
/// NMSE_A = ‖I − A_TᴴA_T‖²_F / P with A_T = [a_T(l_1,k_1) … a_T(l_P,k_P)].
pub fn nmse_a(cfg: &WaveformConfig, frame: &PilotFrame, paths: &[ChannelPath]) -> f64 {
    let templates: Vec<Vec<Complex64>> = paths
        .iter()
        .map(|p| template_a(cfg, frame, p.delay_norm, p.doppler_norm))
        .collect();
    let p = paths.len();
    let mut defect = 0.0;
    for i in 0..p {
        for j in 0..p {
            let dot: Complex64 = templates[i]
                .iter()
                .zip(&templates[j])
                .map(|(a, b)| a.conj() * b)
                .sum();
            let target = if i == j {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            };
            defect += (target - dot).norm_sqr();
        }
    }
    defect / p as f64
}

/// Dumps a frame as CSV rows (index, re, im, kind) with
/// kind ∈ {pilot, guard, data}.
pub fn write_frame_csv<W: io::Write>(frame: &PilotFrame, out: &mut W) -> io::Result<()> {
    writeln!(out, "index,re,im,kind")?;
    let n = frame.x.len();
    for (idx, z) in frame.x.samples.iter().enumerate() {
        let kind = if idx == frame.pilot_index {
            "pilot"
        } else if circular_distance(idx, frame.pilot_index, n) <= frame.guard_radius {
            "guard"
        } else {
            "data"
        };
        writeln!(out, "{idx},{},{},{kind}", z.re, z.im)?;
    }
    Ok(())
}

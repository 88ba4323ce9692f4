//! Waveform and channel configuration.
//!
//! [`derive_limits`] turns a physical channel description (maximum delay and
//! Doppler) plus the free waveform knobs (N, Δf, ξ) into the derived
//! quantities everything else consumes: the first chirp rate c1, the
//! normalized delay/Doppler grid bounds, and the pilot guard widths.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::split_nearest;

/// Propagation speed used when converting scatterer geometry to delay spread.
pub const PROPAGATION_SPEED_M_S: f64 = 3.0e8;

#[derive(Debug, Error, PartialEq)]
pub enum ParamsError {
    #[error("chirp support ξ must satisfy 0 < ξ ≤ N (got ξ={xi}, N={n})")]
    XiOutOfRange { xi: i64, n: usize },
    #[error("N must be at least 2 (got {0})")]
    NTooSmall(usize),
    #[error("{name} must be positive (got {value})")]
    NonPositive { name: &'static str, value: f64 },
    #[error("{name} must be nonnegative (got {value})")]
    Negative { name: &'static str, value: f64 },
    #[error("num_paths must be at least 1")]
    NoPaths,
    #[error("normalized delay {0} outside [0, {1}]")]
    DelayOutOfRange(f64, i64),
    #[error("normalized Doppler {0} outside [-{1}, {1}]")]
    DopplerOutOfRange(f64, i64),
    #[error("{wanted} distinct integer delays requested but only {available} fit in [0, l_max]")]
    NotEnoughDistinctDelays { wanted: usize, available: usize },
}

/// Physical description of the doubly selective channel.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ChannelSpec {
    /// Maximum path delay τ_max in seconds.
    pub tau_max_s: f64,
    /// Maximum absolute Doppler shift ν_max in hertz.
    pub nu_max_hz: f64,
    /// Number of propagation paths P.
    pub num_paths: usize,
}

impl ChannelSpec {
    pub fn validate(&self) -> Result<(), ParamsError> {
        if self.tau_max_s < 0.0 {
            return Err(ParamsError::Negative {
                name: "tau_max_s",
                value: self.tau_max_s,
            });
        }
        if self.nu_max_hz < 0.0 {
            return Err(ParamsError::Negative {
                name: "nu_max_hz",
                value: self.nu_max_hz,
            });
        }
        if self.num_paths == 0 {
            return Err(ParamsError::NoPaths);
        }
        Ok(())
    }
}

/// Free waveform knobs; everything else is derived from these plus the
/// channel spec.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct WaveformParams {
    /// Number of chirp subcarriers N.
    pub n_subcarriers: usize,
    /// Subcarrier spacing Δf in hertz.
    pub subcarrier_spacing_hz: f64,
    /// Guard-widening integer ξ in the first chirp rate, 0 < ξ ≤ N.
    pub xi: i64,
    /// Second chirp rate c2. Zero keeps the DAFT a plain chirped DFT; any
    /// real value is accepted and carried through the kernels.
    pub c2: f64,
}

/// Fully derived waveform configuration.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct WaveformConfig {
    pub n_subcarriers: usize,
    pub subcarrier_spacing_hz: f64,
    /// First chirp rate c1 = (2(k_max + ξ) + 1) / (2N).
    pub c1: f64,
    /// Second chirp rate.
    pub c2: f64,
    /// Guard-widening integer ξ used to derive c1.
    pub xi: i64,
    /// Chirp-periodic prefix length in samples (≥ l_max).
    pub cpp_len: usize,
}

impl WaveformConfig {
    pub fn n(&self) -> usize {
        self.n_subcarriers
    }

    /// Occupied bandwidth B = N·Δf.
    pub fn bandwidth_hz(&self) -> f64 {
        self.n_subcarriers as f64 * self.subcarrier_spacing_hz
    }

    /// Symbol duration T = 1/Δf.
    pub fn symbol_duration_s(&self) -> f64 {
        1.0 / self.subcarrier_spacing_hz
    }

    /// 2Nc1, an odd integer when c1 was derived by [`derive_limits`].
    pub fn two_n_c1(&self) -> f64 {
        2.0 * self.n_subcarriers as f64 * self.c1
    }

    /// Escape hatch for analysis code that needs a hand-picked chirp pair
    /// (e.g. c1 = c2 = 0 reduces the DAFT to the unitary DFT).
    pub fn raw(n: usize, delta_f_hz: f64, c1: f64, c2: f64, xi: i64, cpp_len: usize) -> Self {
        WaveformConfig {
            n_subcarriers: n,
            subcarrier_spacing_hz: delta_f_hz,
            c1,
            c2,
            xi,
            cpp_len,
        }
    }

    pub fn with_cpp_len(mut self, cpp_len: usize) -> Self {
        self.cpp_len = cpp_len;
        self
    }
}

/// Derived delay-Doppler grid bounds and pilot guard widths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridLimits {
    /// Maximum integer normalized Doppler k_max = ⌈N ν_max / B⌉.
    pub k_max: i64,
    /// Maximum integer normalized delay l_max = ⌈τ_max B⌉.
    pub l_max: i64,
    /// One-sided guard budget Q = (l_max + 1)(2(k_max + ξ) + 1) − 1.
    pub q: usize,
    /// Upper truncation margin Q1 = k_max + ξ.
    pub q1: usize,
    /// Lower truncation margin Q2 = Q − Q1.
    pub q2: usize,
}

impl GridLimits {
    /// Whether a full guard band of 2Q+1 symbols fits into N subcarriers.
    pub fn guard_fits(&self, n: usize) -> bool {
        n > 2 * self.q
    }

    /// Length of the truncated observation window, Q + 1.
    pub fn window_len(&self) -> usize {
        self.q + 1
    }

    /// Range (inclusive) of the integer part of the equivalent Doppler
    /// −2Nc1·ι + k for a path whose integer delay is `l_bar`, assuming the
    /// integer/fraction split resolves ties away from zero.
    ///
    /// Paths at the delay-grid edges can only alias to one side: a path with
    /// l̄ = 0 has ι ≥ 0 and one with l̄ = l_max has ι ≤ 0.
    pub fn equivalent_doppler_range(&self, l_bar: i64) -> (i64, i64) {
        let wide = self.k_max + self.q1 as i64 + 1; // 2 k_max + ξ + 1
        if l_bar == 0 {
            (-wide, self.k_max)
        } else if l_bar == self.l_max {
            (-self.k_max, wide)
        } else {
            (-wide, wide)
        }
    }
}

/// Derives the chirp rate and grid limits from the physical channel and the
/// free waveform knobs.
///
/// c1 = (2(k_max + ξ) + 1)/(2N), so 2Nc1 is an odd integer; the prefix length
/// defaults to l_max.
pub fn derive_limits(
    spec: &ChannelSpec,
    wf: &WaveformParams,
) -> Result<(WaveformConfig, GridLimits), ParamsError> {
    spec.validate()?;
    let n = wf.n_subcarriers;
    if n < 2 {
        return Err(ParamsError::NTooSmall(n));
    }
    if wf.subcarrier_spacing_hz <= 0.0 {
        return Err(ParamsError::NonPositive {
            name: "subcarrier_spacing_hz",
            value: wf.subcarrier_spacing_hz,
        });
    }
    if wf.xi <= 0 || wf.xi > n as i64 {
        return Err(ParamsError::XiOutOfRange { xi: wf.xi, n });
    }
    let bandwidth = n as f64 * wf.subcarrier_spacing_hz;
    let k_max = (n as f64 * spec.nu_max_hz / bandwidth).ceil() as i64;
    let l_max = (spec.tau_max_s * bandwidth).ceil() as i64;
    let odd = 2 * (k_max + wf.xi) + 1;
    let c1 = odd as f64 / (2.0 * n as f64);
    let q = (l_max + 1) as usize * odd as usize - 1;
    let q1 = (k_max + wf.xi) as usize;
    let limits = GridLimits {
        k_max,
        l_max,
        q,
        q1,
        q2: q - q1,
    };
    let cfg = WaveformConfig {
        n_subcarriers: n,
        subcarrier_spacing_hz: wf.subcarrier_spacing_hz,
        c1,
        c2: wf.c2,
        xi: wf.xi,
        cpp_len: l_max as usize,
    };
    Ok((cfg, limits))
}

/// One propagation path in normalized delay-Doppler coordinates.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ChannelPath {
    pub gain: Complex64,
    /// Normalized delay l = τ·B, in [0, l_max].
    pub delay_norm: f64,
    /// Normalized Doppler k = ν/Δf, in [-k_max, k_max].
    pub doppler_norm: f64,
}

impl ChannelPath {
    pub fn new(gain: Complex64, delay_norm: f64, doppler_norm: f64) -> Self {
        ChannelPath {
            gain,
            delay_norm,
            doppler_norm,
        }
    }

    /// Integer/fraction split of the normalized delay.
    pub fn delay_split(&self) -> (i64, f64) {
        split_nearest(self.delay_norm)
    }

    /// Integer/fraction split of the normalized Doppler.
    pub fn doppler_split(&self) -> (i64, f64) {
        split_nearest(self.doppler_norm)
    }

    pub fn validate(&self, limits: &GridLimits) -> Result<(), ParamsError> {
        if !(0.0..=limits.l_max as f64).contains(&self.delay_norm) {
            return Err(ParamsError::DelayOutOfRange(self.delay_norm, limits.l_max));
        }
        if self.doppler_norm.abs() > limits.k_max as f64 {
            return Err(ParamsError::DopplerOutOfRange(
                self.doppler_norm,
                limits.k_max,
            ));
        }
        Ok(())
    }
}

/// A drawn channel: a set of P paths.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChannelRealization {
    pub paths: Vec<ChannelPath>,
}

impl ChannelRealization {
    pub fn total_power(&self) -> f64 {
        self.paths.iter().map(|p| p.gain.norm_sqr()).sum()
    }

    pub fn validate(&self, limits: &GridLimits) -> Result<(), ParamsError> {
        for p in &self.paths {
            p.validate(limits)?;
        }
        Ok(())
    }
}

/// How delay and Doppler land on the normalized grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    /// Integer delay, integer Doppler.
    Idd,
    /// Integer delay, fractional Doppler.
    Idfd,
    /// Fractional delay, fractional Doppler.
    Fdfd,
}

impl Regime {
    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::Idd => "idd",
            Regime::Idfd => "idfd",
            Regime::Fdfd => "fdfd",
        }
    }
}

impl std::str::FromStr for Regime {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "idd" => Ok(Regime::Idd),
            "idfd" => Ok(Regime::Idfd),
            "fdfd" => Ok(Regime::Fdfd),
            other => Err(format!("unknown regime `{other}` (idd|idfd|fdfd)")),
        }
    }
}

/// One draw of CN(0, `variance`): independent real/imaginary Gaussians of
/// variance `variance`/2 each.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let std = (variance / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re * std, im * std)
}

/// Draws P paths: τ uniform on [0, τ_max], ν uniform on [−ν_max, ν_max],
/// gains i.i.d. circular Gaussian with variance 1/P (unit expected total
/// power). Delays and Dopplers are returned in normalized coordinates.
pub fn draw_channel<R: Rng + ?Sized>(
    spec: &ChannelSpec,
    cfg: &WaveformConfig,
    rng: &mut R,
) -> ChannelRealization {
    let b = cfg.bandwidth_hz();
    let df = cfg.subcarrier_spacing_hz;
    let p = spec.num_paths;
    let paths = (0..p)
        .map(|_| {
            let tau = rng.gen_range(0.0..=spec.tau_max_s);
            let nu = if spec.nu_max_hz > 0.0 {
                rng.gen_range(-spec.nu_max_hz..=spec.nu_max_hz)
            } else {
                0.0
            };
            ChannelPath {
                gain: complex_gaussian(rng, 1.0 / p as f64),
                delay_norm: tau * b,
                doppler_norm: nu / df,
            }
        })
        .collect();
    ChannelRealization { paths }
}

/// [`draw_channel`] followed by snapping onto the requested regime's grid:
/// IDD rounds both coordinates to integers, IDFD rounds the delay only.
pub fn draw_channel_regime<R: Rng + ?Sized>(
    spec: &ChannelSpec,
    cfg: &WaveformConfig,
    limits: &GridLimits,
    regime: Regime,
    rng: &mut R,
) -> ChannelRealization {
    let mut real = draw_channel(spec, cfg, rng);
    for path in &mut real.paths {
        match regime {
            Regime::Fdfd => {}
            Regime::Idfd => {
                path.delay_norm = snap_int(path.delay_norm, 0, limits.l_max);
            }
            Regime::Idd => {
                path.delay_norm = snap_int(path.delay_norm, 0, limits.l_max);
                path.doppler_norm = snap_int(path.doppler_norm, -limits.k_max, limits.k_max);
            }
        }
    }
    real
}

fn snap_int(v: f64, lo: i64, hi: i64) -> f64 {
    split_nearest(v).0.clamp(lo, hi) as f64
}

/// Draws P paths whose integer delay parts are pairwise distinct (a random
/// choice of P integers from [0, l_max]); fractions stay uniform but are
/// clipped so the total delay remains inside [0, l_max]. Dopplers follow the
/// regime. Used by the pilot-orthogonality sweeps.
pub fn draw_channel_distinct_delays<R: Rng + ?Sized>(
    spec: &ChannelSpec,
    limits: &GridLimits,
    regime: Regime,
    rng: &mut R,
) -> Result<ChannelRealization, ParamsError> {
    let p = spec.num_paths;
    let slots = (limits.l_max + 1) as usize;
    if slots < p {
        return Err(ParamsError::NotEnoughDistinctDelays {
            wanted: p,
            available: slots,
        });
    }
    // Partial Fisher-Yates over the integer delay slots.
    let mut pool: Vec<i64> = (0..=limits.l_max).collect();
    for i in 0..p {
        let j = rng.gen_range(i..pool.len());
        pool.swap(i, j);
    }
    let paths = (0..p)
        .map(|i| {
            let l_bar = pool[i];
            let delay_norm = match regime {
                Regime::Fdfd => {
                    let lo = if l_bar == 0 { 0.0 } else { -0.5 };
                    let hi = if l_bar == limits.l_max { 0.0 } else { 0.5 };
                    l_bar as f64 + rng.gen_range(lo..=hi)
                }
                _ => l_bar as f64,
            };
            let doppler_norm = match regime {
                Regime::Idd => {
                    rng.gen_range(-limits.k_max..=limits.k_max) as f64
                }
                _ => {
                    let k = limits.k_max as f64;
                    if k > 0.0 {
                        rng.gen_range(-k..=k)
                    } else {
                        0.0
                    }
                }
            };
            ChannelPath {
                gain: complex_gaussian(rng, 1.0 / p as f64),
                delay_norm,
                doppler_norm,
            }
        })
        .collect();
    Ok(ChannelRealization { paths })
}

/// Report produced by [`check_doubly_underspread`].
#[derive(Debug, Clone, Copy, Serialize)]
pub struct UnderspreadReport {
    /// Differential spreading ϖ/c · 2 ν_max sin(ϱ/2).
    pub differential_spread: f64,
    /// Whole spreading τ_max · ν_max.
    pub whole_spread: f64,
    /// Δτ·Δν ≪ τ_max·ν_max ≪ 1, with "≪" read as a ×10 gap.
    pub doubly_underspread: bool,
    /// Coherence time over which path parameters are effectively static,
    /// 1/Δν_max, in seconds.
    pub stationarity_time_s: f64,
    /// Whole symbols (duration 1/Δf) fitting into the stationarity time.
    pub stationary_symbols: usize,
}

/// Differential-vs-whole spreading check for a scatterer cluster of extent
/// `scatter_extent_m` meters seen under an angular spread of
/// `angular_spread_rad` radians.
pub fn check_doubly_underspread(
    spec: &ChannelSpec,
    cfg: &WaveformConfig,
    scatter_extent_m: f64,
    angular_spread_rad: f64,
) -> UnderspreadReport {
    let d_tau = scatter_extent_m / PROPAGATION_SPEED_M_S;
    let d_nu = 2.0 * spec.nu_max_hz * (angular_spread_rad / 2.0).sin();
    let differential = d_tau * d_nu;
    let whole = spec.tau_max_s * spec.nu_max_hz;
    let gap = 10.0;
    let doubly = differential * gap <= whole && whole * gap <= 1.0;
    let stationarity = if d_nu > 0.0 { 1.0 / d_nu } else { f64::INFINITY };
    let symbols = if stationarity.is_finite() {
        (stationarity / cfg.symbol_duration_s()).floor() as usize
    } else {
        usize::MAX
    };
    UnderspreadReport {
        differential_spread: differential,
        whole_spread: whole,
        doubly_underspread: doubly,
        stationarity_time_s: stationarity,
        stationary_symbols: symbols,
    }
}

/// The benchmark configuration used throughout the tests: N = 256,
/// Δf = 1 kHz, τ_max = 15.6 µs, ν_max = 2 kHz, P = 5, ξ = 4.
pub fn benchmark_spec() -> (ChannelSpec, WaveformParams) {
    (
        ChannelSpec {
            tau_max_s: 1.56e-5,
            nu_max_hz: 2.0e3,
            num_paths: 5,
        },
        WaveformParams {
            n_subcarriers: 256,
            subcarrier_spacing_hz: 1.0e3,
            xi: 4,
            c2: 0.0,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn benchmark() -> (WaveformConfig, GridLimits) {
        let (spec, wf) = benchmark_spec();
        derive_limits(&spec, &wf).unwrap()
    }

    #[test]
    fn benchmark_limits_match_hand_calculation() {
        let (cfg, limits) = benchmark();
        assert_eq!(limits.k_max, 2);
        assert_eq!(limits.l_max, 4);
        assert_eq!(cfg.c1, 13.0 / 512.0);
        assert_eq!(cfg.two_n_c1(), 13.0);
        assert_eq!(limits.q, 64);
        assert_eq!(limits.q1, 6);
        assert_eq!(limits.q2, 58);
        assert_eq!(cfg.cpp_len, 4);
        assert!(limits.guard_fits(256));
    }

    #[test]
    fn second_chirp_rate_variant_widens_guard() {
        let (spec, mut wf) = benchmark_spec();
        wf.xi = 5;
        let (cfg, limits) = derive_limits(&spec, &wf).unwrap();
        assert_eq!(cfg.two_n_c1(), 15.0);
        // (l_max+1)(2(k_max+ξ)+1) − 1 = 5·15 − 1
        assert_eq!(limits.q, 74);
        assert_eq!(limits.q1, 7);
        assert_eq!(limits.q2, 67);
    }

    #[test]
    fn zero_spread_channel_still_gets_odd_chirp_numerator() {
        let spec = ChannelSpec {
            tau_max_s: 0.0,
            nu_max_hz: 0.0,
            num_paths: 1,
        };
        let wf = WaveformParams {
            n_subcarriers: 2,
            subcarrier_spacing_hz: 1.0,
            xi: 1,
            c2: 0.0,
        };
        let (cfg, limits) = derive_limits(&spec, &wf).unwrap();
        assert_eq!(cfg.c1, 3.0 / 4.0);
        assert_eq!(limits.k_max, 0);
        assert_eq!(limits.l_max, 0);
        assert_eq!(limits.q, 2);
        assert_eq!(limits.window_len(), 3);
        // A 3-wide window cannot be guarded inside N = 2.
        assert!(!limits.guard_fits(2));
    }

    #[test]
    fn xi_bounds_are_enforced() {
        let (spec, mut wf) = benchmark_spec();
        wf.xi = 0;
        assert_eq!(
            derive_limits(&spec, &wf).unwrap_err(),
            ParamsError::XiOutOfRange { xi: 0, n: 256 }
        );
        wf.xi = 257;
        assert!(matches!(
            derive_limits(&spec, &wf).unwrap_err(),
            ParamsError::XiOutOfRange { .. }
        ));
    }

    #[test]
    fn underspread_report_matches_benchmark_numbers() {
        let (spec, wf) = benchmark_spec();
        let (cfg, _) = derive_limits(&spec, &wf).unwrap();
        let report = check_doubly_underspread(&spec, &cfg, 30.0, std::f64::consts::PI / 60.0);
        assert!((report.differential_spread - 1.0471e-5).abs() / 1.0471e-5 < 5e-3);
        assert!((report.whole_spread - 3.12e-2).abs() < 1e-12);
        assert!(report.doubly_underspread);
        assert_eq!(report.stationary_symbols, 9);
    }

    #[test]
    fn underspread_degenerates_gracefully_without_doppler() {
        let spec = ChannelSpec {
            tau_max_s: 1e-5,
            nu_max_hz: 0.0,
            num_paths: 1,
        };
        let wf = WaveformParams {
            n_subcarriers: 16,
            subcarrier_spacing_hz: 1e3,
            xi: 1,
            c2: 0.0,
        };
        let (cfg, _) = derive_limits(&spec, &wf).unwrap();
        let report = check_doubly_underspread(&spec, &cfg, 30.0, 0.1);
        assert_eq!(report.differential_spread, 0.0);
        assert!(report.stationarity_time_s.is_infinite());
    }

    #[test]
    fn drawn_paths_respect_bounds_and_are_reproducible() {
        let (spec, wf) = benchmark_spec();
        let (cfg, limits) = derive_limits(&spec, &wf).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = draw_channel(&spec, &cfg, &mut rng);
        assert_eq!(a.paths.len(), 5);
        a.validate(&limits).unwrap();
        let mut rng2 = ChaCha8Rng::seed_from_u64(7);
        let b = draw_channel(&spec, &cfg, &mut rng2);
        for (x, y) in a.paths.iter().zip(&b.paths) {
            assert_eq!(x.gain, y.gain);
            assert_eq!(x.delay_norm, y.delay_norm);
            assert_eq!(x.doppler_norm, y.doppler_norm);
        }
    }

    #[test]
    fn drawn_gains_have_unit_expected_total_power() {
        let (spec, wf) = benchmark_spec();
        let (cfg, _) = derive_limits(&spec, &wf).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let trials = 10_000;
        let mean: f64 = (0..trials)
            .map(|_| draw_channel(&spec, &cfg, &mut rng).total_power())
            .sum::<f64>()
            / trials as f64;
        assert!((mean - 1.0).abs() < 0.05, "mean total power {mean}");
    }

    #[test]
    fn regime_snapping_lands_on_integers() {
        let (spec, wf) = benchmark_spec();
        let (cfg, limits) = derive_limits(&spec, &wf).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let idd = draw_channel_regime(&spec, &cfg, &limits, Regime::Idd, &mut rng);
        for p in &idd.paths {
            assert_eq!(p.delay_norm.fract(), 0.0);
            assert_eq!(p.doppler_norm.fract(), 0.0);
        }
        let idfd = draw_channel_regime(&spec, &cfg, &limits, Regime::Idfd, &mut rng);
        for p in &idfd.paths {
            assert_eq!(p.delay_norm.fract(), 0.0);
        }
        idd.validate(&limits).unwrap();
        idfd.validate(&limits).unwrap();
    }

    #[test]
    fn distinct_delay_draw_uses_every_slot_once() {
        let (spec, wf) = benchmark_spec();
        let (_, limits) = derive_limits(&spec, &wf).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        // P = 5 paths over l_max = 4 means the slots {0..4} are a permutation.
        let real =
            draw_channel_distinct_delays(&spec, &limits, Regime::Fdfd, &mut rng).unwrap();
        let mut ints: Vec<i64> = real.paths.iter().map(|p| p.delay_split().0).collect();
        ints.sort_unstable();
        assert_eq!(ints, vec![0, 1, 2, 3, 4]);
        real.validate(&limits).unwrap();
    }

    #[test]
    fn distinct_delay_draw_rejects_overfull_grid() {
        let spec = ChannelSpec {
            tau_max_s: 0.0,
            nu_max_hz: 0.0,
            num_paths: 2,
        };
        let wf = WaveformParams {
            n_subcarriers: 64,
            subcarrier_spacing_hz: 1e3,
            xi: 1,
            c2: 0.0,
        };
        let (_, limits) = derive_limits(&spec, &wf).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(
            draw_channel_distinct_delays(&spec, &limits, Regime::Idd, &mut rng),
            Err(ParamsError::NotEnoughDistinctDelays { .. })
        ));
    }

    #[test]
    fn equivalent_doppler_range_matches_edge_cases() {
        let (_, limits) = benchmark();
        // 2 k_max + ξ + 1 = 9 at the benchmark point.
        assert_eq!(limits.equivalent_doppler_range(0), (-9, 2));
        assert_eq!(limits.equivalent_doppler_range(4), (-2, 9));
        assert_eq!(limits.equivalent_doppler_range(2), (-9, 9));
    }

    proptest! {
        #[test]
        fn derived_quantities_satisfy_their_identities(
            n_exp in 4usize..11,
            df in 1.0f64..1e4,
            tau in 0.0f64..1e-4,
            nu in 0.0f64..5e3,
            // Kept below the smallest generated N so the pair is always valid.
            xi in 1i64..16,
        ) {
            let n = 1usize << n_exp;
            let spec = ChannelSpec { tau_max_s: tau, nu_max_hz: nu, num_paths: 1 };
            let wf = WaveformParams {
                n_subcarriers: n,
                subcarrier_spacing_hz: df,
                xi,
                c2: 0.0,
            };
            let (cfg, limits) = derive_limits(&spec, &wf).unwrap();
            // 2Nc1 is the odd integer 2(k_max + ξ) + 1.
            let odd = 2 * (limits.k_max + xi) + 1;
            prop_assert!((cfg.two_n_c1() - odd as f64).abs() < 1e-9);
            prop_assert_eq!(odd % 2, 1);
            prop_assert_eq!(
                limits.q as i64,
                (limits.l_max + 1) * odd - 1
            );
            prop_assert_eq!(limits.q1 as i64, limits.k_max + xi);
            prop_assert_eq!(limits.q1 + limits.q2, limits.q);
            prop_assert!(cfg.cpp_len as i64 >= limits.l_max);
        }
    }
}

//! Link-level building blocks for affine frequency division multiplexing (AFDM)
//! over doubly selective (delay-Doppler) channels.
//!
//! The crate covers the full chain needed to study pilot-aided channel
//! estimation on chirp carriers:
//!
//! * [`params`] — waveform/channel configuration and the derived delay-Doppler
//!   grid limits,
//! * [`daft`] — the discrete affine Fourier transform (DAFT) and its
//!   chirp-periodic prefix,
//! * [`channel`] — time-domain channel application and the equivalent
//!   DAFT-domain channel matrix,
//! * [`iorel`] — the scalar input-output kernels (chirp phase, Dirichlet
//!   kernel) and SINR analysis,
//! * [`pilot`] — embedded pilot frames, observation truncation and
//!   matched-filter templates,
//! * [`estimate`] — matched-filter channel estimation with grid or
//!   generalized-Fibonacci fraction search, plus the scheme registry,
//! * [`equalize`] — LMMSE equalization and QAM mapping.
//!
//! Everything is deterministic given an RNG; no global state.

pub mod channel;
pub mod daft;
pub mod equalize;
pub mod estimate;
pub mod iorel;
pub mod params;
pub mod pilot;

pub use num_complex::Complex64;

/// e^{j·2π·turns} with the argument reduced modulo one turn first.
///
/// Reducing in "turns" rather than radians keeps phases exact when the
/// accumulated argument is large (chirp exponents grow like c1·n²), which the
/// closed-form kernels rely on.
#[inline]
pub fn cis_turns(turns: f64) -> Complex64 {
    let t = turns - turns.round();
    let (s, c) = (std::f64::consts::TAU * t).sin_cos();
    Complex64::new(c, s)
}

/// Splits `v` into `(integer, fraction)` with the fraction in [-0.5, 0.5].
///
/// Ties at exactly ±0.5 resolve to a fraction of -0.5 (integer above), so the
/// split is deterministic and the fraction never leaves the closed interval.
#[inline]
pub fn split_nearest(v: f64) -> (i64, f64) {
    let i = (v + 0.5).floor();
    (i as i64, v - i)
}

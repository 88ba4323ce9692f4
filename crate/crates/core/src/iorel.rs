//! Scalar input-output relation of the DAFT waveform over a sparse
//! delay-Doppler channel.
//!
//! A path with normalized delay l and Doppler k couples demodulated bin m to
//! transmitted bin n through G(m, n, k, l) = α(m, n, k, l) · F(m, n, k, l):
//! a unit-modulus chirp phase α times a periodic Dirichlet kernel F whose
//! argument is θ = m − n + 2Nc1·l − k. All of a path's delay-Doppler
//! information therefore collapses into the single *equivalent shift*
//! χ = −2Nc1·l + k, which the matched-filter estimators recover and then
//! disambiguate back into (l, k).

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::cis_turns;
use crate::daft::{DaftError, DaftFrame, Domain};
use crate::equalize::{lmmse_matrix, EqualizeError};
use crate::params::{ChannelPath, Regime, WaveformConfig};
use crate::split_nearest;

/// χ = −2Nc1·l + k split into integer and fractional parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquivalentShift {
    /// The raw shift χ.
    pub chi: f64,
    /// Integer part Υ.
    pub upsilon: i64,
    /// Fractional part γ ∈ [−0.5, 0.5].
    pub gamma: f64,
}

/// Equivalent DAFT-domain shift of a (delay, Doppler) pair.
pub fn equivalent_shift(cfg: &WaveformConfig, delay_norm: f64, doppler_norm: f64) -> EquivalentShift {
    let chi = -cfg.two_n_c1() * delay_norm + doppler_norm;
    let (upsilon, gamma) = split_nearest(chi);
    EquivalentShift {
        chi,
        upsilon,
        gamma,
    }
}

/// Periodic Dirichlet kernel (1/N)·(e^{−j2πθ} − 1)/(e^{−j2πθ/N} − 1),
/// N-periodic in θ; returns exactly 1 when θ ≡ 0 (mod N) within 1e-9.
///
/// The numerator argument is reduced modulo 1 and the denominator argument
/// modulo N before exponentiating, which keeps the value at machine
/// precision for any θ magnitude and makes integer θ give exact nulls.
pub fn dirichlet(n: usize, theta: f64) -> Complex64 {
    let nn = n as f64;
    let theta_mod_n = theta - nn * (theta / nn).round();
    if theta_mod_n.abs() < 1e-9 {
        return Complex64::new(1.0, 0.0);
    }
    let one = Complex64::new(1.0, 0.0);
    let num = cis_turns(-theta) - one;
    let den = cis_turns(-theta_mod_n / nn) - one;
    num / den / nn
}

/// Reference O(N) evaluation of [`dirichlet`], (1/N)·Σ_{n̄} e^{−j2πθn̄/N}.
/// Kept for oracle comparisons; prefer the closed form elsewhere.
pub fn dirichlet_direct_sum(n: usize, theta: f64) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for nbar in 0..n {
        acc += cis_turns(-theta * nbar as f64 / n as f64);
    }
    acc / n as f64
}

/// Unit-modulus chirp phase
/// α(m, n, k, l) = exp((−j2π/N)(−Nc1·l² + (n + k)·l + Nc2(m² − n²))).
pub fn alpha(cfg: &WaveformConfig, m: usize, n: usize, k: f64, l: f64) -> Complex64 {
    let nn = cfg.n() as f64;
    let exponent = -nn * cfg.c1 * l * l
        + (n as f64 + k) * l
        + nn * cfg.c2 * ((m * m) as f64 - (n * n) as f64);
    cis_turns(-exponent / nn)
}

/// Dirichlet factor F(m, n, k, l) with θ = m − n + 2Nc1·l − k.
pub fn f_kernel(cfg: &WaveformConfig, m: usize, n: usize, k: f64, l: f64) -> Complex64 {
    let theta = m as f64 - n as f64 + cfg.two_n_c1() * l - k;
    dirichlet(cfg.n(), theta)
}

/// Full per-path coupling G = α · F.
pub fn g_kernel(cfg: &WaveformConfig, m: usize, n: usize, k: f64, l: f64) -> Complex64 {
    alpha(cfg, m, n, k, l) * f_kernel(cfg, m, n, k, l)
}

/// Dirichlet factor expressed through the equivalent shift:
/// J(m, n, χ) = F with θ = m − n − χ.
pub fn j_kernel(cfg: &WaveformConfig, m: usize, n: usize, chi: f64) -> Complex64 {
    dirichlet(cfg.n(), m as f64 - n as f64 - chi)
}

/// Truncated input-output relation: for each output bin m, sums the 2ξ+1
/// principal couplings of every path instead of all N columns.
///
/// In the integer-delay regime the window is centered on the exact coupling
/// column [m + 2Nc1·l̄ − k̄]_N; with fractional delays it is centered on
/// [m − Υ]_N, the rounded equivalent shift.
pub fn approx_output(
    cfg: &WaveformConfig,
    x: &DaftFrame,
    paths: &[ChannelPath],
    regime: Regime,
) -> Result<DaftFrame, DaftError> {
    if x.domain != Domain::Daft {
        return Err(DaftError::WrongDomain {
            expected: Domain::Daft,
            got: x.domain,
        });
    }
    let n = cfg.n();
    if x.len() != n {
        return Err(DaftError::LengthMismatch {
            expected: n,
            got: x.len(),
        });
    }
    let xi = cfg.xi;
    let two_n_c1 = cfg.two_n_c1().round() as i64;
    let mut y = vec![Complex64::new(0.0, 0.0); n];
    for path in paths {
        let (l_bar, _) = split_nearest(path.delay_norm);
        let (k_bar, _) = split_nearest(path.doppler_norm);
        for (m, out) in y.iter_mut().enumerate() {
            let center = match regime {
                Regime::Idd | Regime::Idfd => m as i64 + two_n_c1 * l_bar - k_bar,
                Regime::Fdfd => {
                    let shift = equivalent_shift(cfg, path.delay_norm, path.doppler_norm);
                    m as i64 - shift.upsilon
                }
            };
            for q in -xi..=xi {
                let nq = (center - q).rem_euclid(n as i64) as usize;
                *out += x.samples[nq]
                    * path.gain
                    * g_kernel(cfg, m, nq, path.doppler_norm, path.delay_norm);
            }
        }
    }
    Ok(DaftFrame::daft(y))
}

/// Per-subcarrier post-LMMSE SINR: with T = W·H,
/// SINR_n = |T_nn|² / (Σ_{m≠n}|T_nm|² + σ²‖W_{n,:}‖²).
///
/// A zero denominator with a nonzero diagonal reports +∞ (noiseless,
/// interference-free bin); an all-zero row reports 0.
pub fn sinr_per_subcarrier(
    h_eff: &DMatrix<Complex64>,
    noise_variance: f64,
) -> Result<Vec<f64>, EqualizeError> {
    let w = lmmse_matrix(h_eff, noise_variance)?;
    let t = &w * h_eff;
    let n = h_eff.nrows();
    let mut out = Vec::with_capacity(n);
    for row in 0..n {
        let signal = t[(row, row)].norm_sqr();
        let mut interference = 0.0;
        for col in 0..n {
            if col != row {
                interference += t[(row, col)].norm_sqr();
            }
        }
        let noise: f64 = (0..n).map(|col| w[(row, col)].norm_sqr()).sum::<f64>() * noise_variance;
        let denom = interference + noise;
        out.push(if denom > 0.0 {
            signal / denom
        } else if signal > 0.0 {
            f64::INFINITY
        } else {
            0.0
        });
    }
    Ok(out)
}

/// SINR change (dB, ≤ 0) caused by the fractional parts (ι, κ) of a path's
/// delay and Doppler: 20·log10 |sin(πγ)/(N sin(πγ/N))|², where γ is the
/// fractional part of the equivalent shift −2Nc1·ι + κ.
///
/// The magnitude is the SINR *loss*; γ = 0 gives 0 dB. The integer-delay
/// special case is ι = 0, where γ = κ directly.
pub fn sinr_loss_db(cfg: &WaveformConfig, iota: f64, kappa: f64) -> f64 {
    let shift = equivalent_shift(cfg, iota, kappa);
    let gamma = shift.gamma;
    if gamma == 0.0 {
        return 0.0;
    }
    let n = cfg.n() as f64;
    let ratio = (std::f64::consts::PI * gamma).sin() / (n * (std::f64::consts::PI * gamma / n).sin());
    20.0 * (ratio * ratio).abs().log10()
}

/// Samples [`sinr_loss_db`] on a uniform (ι, κ) grid over [−0.5, 0.5]²
/// with `steps` intervals per axis; rows are (ι, κ, loss_db).
pub fn sinr_loss_surface(cfg: &WaveformConfig, steps: usize) -> Vec<(f64, f64, f64)> {
    let mut rows = Vec::with_capacity((steps + 1) * (steps + 1));
    for i in 0..=steps {
        let iota = -0.5 + i as f64 / steps as f64;
        for j in 0..=steps {
            let kappa = -0.5 + j as f64 / steps as f64;
            rows.push((iota, kappa, sinr_loss_db(cfg, iota, kappa)));
        }
    }
    rows
}

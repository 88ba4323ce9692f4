//! Doubly selective channel: time-domain application and the equivalent
//! DAFT-domain coupling matrix.
//!
//! The received body sample is
//!
//! ```text
//! r(n̄) = Σ_i h_i · s_a(n̄ − l_i) · e^{j2π k_i (n̄ − l_i)/N} + w(n̄)
//! ```
//!
//! where s_a is the *analytic* synthesis of the transmitted DAFT coefficients
//! evaluated at a real argument. Because the chirp-periodic prefix equals
//! that same synthesis at negative arguments, applying the channel to the
//! prefixed burst and discarding the prefix is identical to evaluating s_a
//! directly — which is what [`apply_channel`] does, one FFT per path.
//!
//! On the DAFT side the same channel is the dense coupling matrix
//! H_eff(m, n) = Σ_i h_i · G(m, n, k_i, l_i) built by [`EffectiveChannel`];
//! for integer-grid paths it coincides with A·H_T·Aᴴ where H_T is the
//! circulant-like time-domain matrix from [`time_channel_integer`].

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rustfft::FftPlanner;
use thiserror::Error;

use crate::cis_turns;
use crate::daft::{DaftError, DaftFrame, DaftMatrix, Domain};
use crate::params::{complex_gaussian, ChannelPath, WaveformConfig};

#[derive(Debug, Error, PartialEq)]
pub enum ChannelError {
    #[error(transparent)]
    Daft(#[from] DaftError),
    #[error("path with delay {delay} / Doppler {doppler} is not on the integer grid")]
    FractionalPath { delay: f64, doppler: f64 },
    #[error("integer delay {0} is negative")]
    NegativeDelay(i64),
}

#[inline]
fn reduce(x: f64) -> f64 {
    x - x.round()
}

/// Passes a DAFT-domain frame through the channel and returns the received
/// time-domain body (prefix already absorbed), adding CN(0, σ²) noise.
///
/// Per path this is one pointwise chirp/carrier multiply, one inverse FFT and
/// one output phase ramp, so the whole call costs O(P·N log N).
pub fn apply_channel<R: Rng + ?Sized>(
    cfg: &WaveformConfig,
    x: &DaftFrame,
    paths: &[ChannelPath],
    noise_variance: f64,
    rng: &mut R,
) -> Result<DaftFrame, ChannelError> {
    if x.domain != Domain::Daft {
        return Err(ChannelError::Daft(DaftError::WrongDomain {
            expected: Domain::Daft,
            got: x.domain,
        }));
    }
    let n = cfg.n();
    if x.len() != n {
        return Err(ChannelError::Daft(DaftError::LengthMismatch {
            expected: n,
            got: x.len(),
        }));
    }
    let nn = n as f64;
    let fft = FftPlanner::new().plan_fft_inverse(n);
    let mut r = vec![Complex64::new(0.0, 0.0); n];
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for path in paths {
        let l = path.delay_norm;
        let k = path.doppler_norm;
        // x̃(n) = x(n)·e^{j2πc2n²}·e^{−j2πln/N}; its inverse DFT is the
        // delayed synthesis up to the output chirp.
        for (idx, out) in buf.iter_mut().enumerate() {
            let turns = reduce(cfg.c2 * (idx * idx) as f64) - reduce(l * idx as f64 / nn);
            *out = x.samples[idx] * cis_turns(turns);
        }
        fft.process(&mut buf);
        let scale = path.gain / nn.sqrt();
        for (nbar, out) in r.iter_mut().enumerate() {
            let t = nbar as f64 - l;
            let turns = reduce(cfg.c1 * t * t) + reduce(k * t / nn);
            *out += buf[nbar] * cis_turns(turns) * scale;
        }
    }
    if noise_variance > 0.0 {
        for out in r.iter_mut() {
            *out += complex_gaussian(rng, noise_variance);
        }
    }
    Ok(DaftFrame::time(r))
}

/// Dense x → r map: S[n̄, n] = Σ_i h_i·F(n̄ − l_i, n)·e^{j2πk_i(n̄ − l_i)/N},
/// with F the synthesis kernel. O(P·N²); the oracle for [`apply_channel`].
pub fn synthesis_channel_matrix(cfg: &WaveformConfig, paths: &[ChannelPath]) -> DMatrix<Complex64> {
    let n = cfg.n();
    let nn = n as f64;
    let mut s = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    for path in paths {
        for col in 0..n {
            for row in 0..n {
                let t = row as f64 - path.delay_norm;
                let carrier = cis_turns(reduce(path.doppler_norm * t / nn));
                s[(row, col)] += path.gain * crate::daft::kernel(cfg, t, col) * carrier;
            }
        }
    }
    s
}

/// Time-domain channel matrix H_T (r = H_T·s) for integer-grid paths:
/// Σ_i h_i·Γ_i·Π^{l_i}·Δ^{k_i}, where Π is the cyclic shift, Δ the Doppler
/// ramp and Γ_i the diagonal carrying the prefix phase on the wrapped rows.
pub fn time_channel_integer(
    cfg: &WaveformConfig,
    paths: &[ChannelPath],
) -> Result<DMatrix<Complex64>, ChannelError> {
    let n = cfg.n();
    let nn = n as f64;
    let mut h = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    for path in paths {
        let (l_bar, l_frac) = path.delay_split();
        let (k_bar, k_frac) = path.doppler_split();
        if l_frac != 0.0 || k_frac != 0.0 {
            return Err(ChannelError::FractionalPath {
                delay: path.delay_norm,
                doppler: path.doppler_norm,
            });
        }
        if l_bar < 0 {
            return Err(ChannelError::NegativeDelay(l_bar));
        }
        let l = l_bar as usize;
        for nbar in 0..n {
            let src = (nbar + n - l % n) % n;
            let carrier = cis_turns(reduce(k_bar as f64 * (nbar as f64 - l as f64) / nn));
            let prefix = if nbar < l {
                cis_turns(-reduce(cfg.c1 * (nn * nn - 2.0 * nn * (l as f64 - nbar as f64))))
            } else {
                Complex64::new(1.0, 0.0)
            };
            h[(nbar, src)] += path.gain * prefix * carrier;
        }
    }
    Ok(h)
}

/// The DAFT-domain coupling matrix H_eff together with the paths that built
/// it.
pub struct EffectiveChannel {
    pub matrix: DMatrix<Complex64>,
    pub paths: Vec<ChannelPath>,
}

impl EffectiveChannel {
    /// Builds H_eff(m, n) = Σ_i h_i·G(m, n, k_i, l_i).
    ///
    /// The kernel factorizes as G = ζ(m)·c_i·ψ_i(n)·ω(n)·F_i[(m−n) mod N]
    /// with F_i a length-N Dirichlet profile per path, so the build costs
    /// O(P·N) kernel evaluations plus O(P·N²) multiply-adds instead of
    /// O(P·N²) transcendental calls.
    pub fn build(cfg: &WaveformConfig, paths: &[ChannelPath]) -> Self {
        EffectiveChannel {
            matrix: coupling_sum(cfg, paths),
            paths: paths.to_vec(),
        }
    }

    /// Coupling matrix of a single constituent path.
    pub fn per_path_matrix(&self, cfg: &WaveformConfig, idx: usize) -> DMatrix<Complex64> {
        coupling_sum(cfg, &self.paths[idx..=idx])
    }

    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }
}

/// Σ_i h_i·G(·, ·, k_i, l_i) as a bare matrix.
pub fn coupling_sum(cfg: &WaveformConfig, paths: &[ChannelPath]) -> DMatrix<Complex64> {
    let n = cfg.n();
    let nn = n as f64;
    let mut h = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    let mut dirichlet_profile = vec![Complex64::new(0.0, 0.0); n];
    let mut col_factor = vec![Complex64::new(0.0, 0.0); n];
    for path in paths {
        let l = path.delay_norm;
        let k = path.doppler_norm;
        let chi = -cfg.two_n_c1() * l + k;
        for (d, slot) in dirichlet_profile.iter_mut().enumerate() {
            *slot = crate::iorel::dirichlet(n, d as f64 - chi);
        }
        // α(m,n,k,l) = ζ(m)·c·ψ(n)·ω(n) with the m-only chirp ζ applied last.
        let c_path = path.gain * cis_turns(reduce(cfg.c1 * l * l) - reduce(k * l / nn));
        for (idx, slot) in col_factor.iter_mut().enumerate() {
            let turns = reduce(cfg.c2 * (idx * idx) as f64) - reduce(l * idx as f64 / nn);
            *slot = c_path * cis_turns(turns);
        }
        for col in 0..n {
            let cf = col_factor[col];
            let column = &mut h.as_mut_slice()[col * n..(col + 1) * n];
            for (row, slot) in column.iter_mut().enumerate() {
                *slot += cf * dirichlet_profile[(row + n - col) % n];
            }
        }
    }
    if cfg.c2 != 0.0 {
        for row in 0..n {
            let zeta = cis_turns(-reduce(cfg.c2 * (row * row) as f64));
            for col in 0..n {
                h[(row, col)] *= zeta;
            }
        }
    }
    h
}

/// ‖H − Ĥ‖²_F / ‖H‖²_F.
pub fn nmse(truth: &DMatrix<Complex64>, estimate: &DMatrix<Complex64>) -> f64 {
    let num: f64 = truth
        .iter()
        .zip(estimate.iter())
        .map(|(a, b)| (a - b).norm_sqr())
        .sum();
    let den: f64 = truth.iter().map(|a| a.norm_sqr()).sum();
    num / den
}

/// A·H_T·Aᴴ: lifts a time-domain channel matrix to the DAFT domain.
pub fn lift_to_daft(cfg: &WaveformConfig, h_time: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let a = DaftMatrix::build(cfg);
    a.as_matrix() * h_time * a.as_matrix().adjoint()
}

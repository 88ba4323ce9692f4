//! Discrete affine Fourier transform (DAFT) over two chirp rates.
//!
//! The synthesis kernel is
//!
//! ```text
//! F(t, n) = (1/√N) · exp(j2π (c1·t² + c2·n² + t·n/N))
//! ```
//!
//! so a transmit frame is s(n̄) = Σ_n x(n)·F(n̄, n) and demodulation correlates
//! against the conjugate kernel. In matrix form the demodulator is
//! A = Λ_c2 · F_DFT · Λ_c1 with Λ_c = diag(e^{−j2πc·n²}); modulation applies
//! Aᴴ. Both an O(N²) dense route ([`DaftMatrix`]) and an O(N log N)
//! chirp–FFT–chirp route ([`modulate`]/[`demodulate`]) are provided; the fast
//! route is required to track the dense one to 1e-9.
//!
//! Phases are accumulated in turns and reduced modulo one before evaluating
//! sin/cos; with power-of-two N and the derived c1 = odd/(2N) the chirp
//! arguments are exactly representable, which keeps the dense matrix unitary
//! to near machine precision even at N = 1024.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::FftPlanner;
use thiserror::Error;

use crate::cis_turns;
use crate::params::WaveformConfig;

#[derive(Debug, Error, PartialEq)]
pub enum DaftError {
    #[error("frame length {got} does not match N = {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("expected a frame in the {expected:?} domain, got {got:?}")]
    WrongDomain { expected: Domain, got: Domain },
    #[error("prefix length {cpp} exceeds N = {n}")]
    CppTooLong { cpp: usize, n: usize },
    #[error("burst of {got} samples cannot hold a prefix of {cpp} plus N = {n}")]
    BurstTooShort { cpp: usize, n: usize, got: usize },
}

/// Which side of the transform a frame lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    /// DAFT (chirp-carrier) coefficients x(n).
    Daft,
    /// Time samples s(n̄).
    Time,
}

/// A length-N sample vector tagged with its domain.
#[derive(Debug, Clone, PartialEq)]
pub struct DaftFrame {
    pub domain: Domain,
    pub samples: Vec<Complex64>,
}

impl DaftFrame {
    pub fn daft(samples: Vec<Complex64>) -> Self {
        DaftFrame {
            domain: Domain::Daft,
            samples,
        }
    }

    pub fn time(samples: Vec<Complex64>) -> Self {
        DaftFrame {
            domain: Domain::Time,
            samples,
        }
    }

    pub fn zeros(domain: Domain, n: usize) -> Self {
        DaftFrame {
            domain,
            samples: vec![Complex64::new(0.0, 0.0); n],
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|z| z.norm_sqr()).sum()
    }

    fn expect(&self, cfg: &WaveformConfig, domain: Domain) -> Result<(), DaftError> {
        if self.domain != domain {
            return Err(DaftError::WrongDomain {
                expected: domain,
                got: self.domain,
            });
        }
        if self.len() != cfg.n() {
            return Err(DaftError::LengthMismatch {
                expected: cfg.n(),
                got: self.len(),
            });
        }
        Ok(())
    }
}

/// Synthesis kernel F(t, n) evaluated at a (possibly fractional) time index.
///
/// Each phase term is reduced modulo one turn separately before summing so
/// large chirp arguments do not cost precision.
pub fn kernel(cfg: &WaveformConfig, t: f64, n: usize) -> Complex64 {
    let nn = cfg.n() as f64;
    let turns = reduce(cfg.c1 * t * t) + reduce(cfg.c2 * (n * n) as f64) + reduce(t * n as f64 / nn);
    cis_turns(turns) / nn.sqrt()
}

#[inline]
fn reduce(x: f64) -> f64 {
    x - x.round()
}

/// Dense demodulation matrix A (row m, column n̄): A[m, n̄] = conj(F(n̄, m)).
///
/// Serves as the oracle for the fast transform path and as the bridge
/// between time-domain and DAFT-domain channel matrices.
pub struct DaftMatrix {
    a: DMatrix<Complex64>,
}

impl DaftMatrix {
    pub fn build(cfg: &WaveformConfig) -> Self {
        let n = cfg.n();
        let a = DMatrix::from_fn(n, n, |m, nbar| kernel(cfg, nbar as f64, m).conj());
        DaftMatrix { a }
    }

    /// The demodulation matrix A itself.
    pub fn as_matrix(&self) -> &DMatrix<Complex64> {
        &self.a
    }

    /// s = Aᴴ x, the O(N²) modulation route.
    pub fn modulate(&self, cfg: &WaveformConfig, x: &DaftFrame) -> Result<DaftFrame, DaftError> {
        x.expect(cfg, Domain::Daft)?;
        let v = nalgebra::DVector::from_column_slice(&x.samples);
        let s = self.a.adjoint() * v;
        Ok(DaftFrame::time(s.as_slice().to_vec()))
    }

    /// y = A r, the O(N²) demodulation route.
    pub fn demodulate(&self, cfg: &WaveformConfig, r: &DaftFrame) -> Result<DaftFrame, DaftError> {
        r.expect(cfg, Domain::Time)?;
        let v = nalgebra::DVector::from_column_slice(&r.samples);
        let y = &self.a * v;
        Ok(DaftFrame::daft(y.as_slice().to_vec()))
    }
}

/// ‖AᴴA − I‖_F for the dense matrix, via Hermitian column dot products.
pub fn unitarity_defect(cfg: &WaveformConfig) -> f64 {
    let mat = DaftMatrix::build(cfg);
    let n = cfg.n();
    let data = mat.a.as_slice();
    let mut acc = 0.0f64;
    for i in 0..n {
        let ci = &data[i * n..(i + 1) * n];
        for j in i..n {
            let cj = &data[j * n..(j + 1) * n];
            let mut re = 0.0f64;
            let mut im = 0.0f64;
            for k in 0..n {
                let x = ci[k];
                let y = cj[k];
                re += x.re * y.re + x.im * y.im;
                im += x.re * y.im - x.im * y.re;
            }
            if i == j {
                re -= 1.0;
            }
            let e = re * re + im * im;
            acc += if i == j { e } else { 2.0 * e };
        }
    }
    acc.sqrt()
}

fn chirp_multiply(samples: &mut [Complex64], rate: f64, sign: f64) {
    for (idx, z) in samples.iter_mut().enumerate() {
        let turns = sign * reduce(rate * (idx * idx) as f64);
        *z *= cis_turns(turns);
    }
}

/// s = Aᴴ x through chirp multiply → inverse FFT → chirp multiply.
pub fn modulate(cfg: &WaveformConfig, x: &DaftFrame) -> Result<DaftFrame, DaftError> {
    x.expect(cfg, Domain::Daft)?;
    let n = cfg.n();
    let mut buf = x.samples.clone();
    chirp_multiply(&mut buf, cfg.c2, 1.0);
    FftPlanner::new().plan_fft_inverse(n).process(&mut buf);
    let scale = 1.0 / (n as f64).sqrt();
    for z in buf.iter_mut() {
        *z *= scale;
    }
    chirp_multiply(&mut buf, cfg.c1, 1.0);
    Ok(DaftFrame::time(buf))
}

/// y = A r through chirp multiply → forward FFT → chirp multiply.
pub fn demodulate(cfg: &WaveformConfig, r: &DaftFrame) -> Result<DaftFrame, DaftError> {
    r.expect(cfg, Domain::Time)?;
    let n = cfg.n();
    let mut buf = r.samples.clone();
    chirp_multiply(&mut buf, cfg.c1, -1.0);
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let scale = 1.0 / (n as f64).sqrt();
    for z in buf.iter_mut() {
        *z *= scale;
    }
    chirp_multiply(&mut buf, cfg.c2, -1.0);
    Ok(DaftFrame::daft(buf))
}

/// Prepends the chirp-periodic prefix: for n̄ = −L..−1 the prefix sample is
/// s(N + n̄) · e^{−j2πc1(N² + 2Nn̄)}.
///
/// With even N and the derived c1 the phase factor is exactly 1 and the
/// prefix degenerates to a plain cyclic prefix.
pub fn add_cpp(cfg: &WaveformConfig, s: &DaftFrame) -> Result<Vec<Complex64>, DaftError> {
    s.expect(cfg, Domain::Time)?;
    let n = cfg.n();
    let l = cfg.cpp_len;
    if l > n {
        return Err(DaftError::CppTooLong { cpp: l, n });
    }
    let nn = n as f64;
    let mut burst = Vec::with_capacity(n + l);
    for p in 0..l {
        let nbar = p as f64 - l as f64; // in [−L, −1]
        let phase = cis_turns(-reduce(cfg.c1 * (nn * nn + 2.0 * nn * nbar)));
        burst.push(s.samples[n - l + p] * phase);
    }
    burst.extend_from_slice(&s.samples);
    Ok(burst)
}

/// Drops the prefix again, returning the length-N body.
pub fn remove_cpp(cfg: &WaveformConfig, burst: &[Complex64]) -> Result<DaftFrame, DaftError> {
    let n = cfg.n();
    let l = cfg.cpp_len;
    if burst.len() != n + l {
        return Err(DaftError::BurstTooShort {
            cpp: l,
            n,
            got: burst.len(),
        });
    }
    Ok(DaftFrame::time(burst[l..].to_vec()))
}

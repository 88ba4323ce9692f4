//! LMMSE equalization and square-QAM symbol mapping.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EqualizeError {
    #[error("QAM order {0} is not a supported square constellation (4, 16, 64)")]
    UnsupportedOrder(usize),
    #[error("bit stream length {got} is not a multiple of {bits_per_symbol}")]
    RaggedBits { got: usize, bits_per_symbol: usize },
    #[error("regularized system is singular (noise_variance = 0 with a rank-deficient channel)")]
    SingularSystem,
    #[error("dimension mismatch: channel is {rows}×{cols}, observation has {got}")]
    DimensionMismatch {
        rows: usize,
        cols: usize,
        got: usize,
    },
}

/// Gray-labeled square QAM with unit average symbol energy.
///
/// Bits are consumed most-significant-axis first: the first half of a
/// symbol's bits Gray-select the real level, the second half the imaginary
/// level, and all-zero bits pick the most positive level on each axis. For
/// 4-QAM this is the usual (b1 b0) → (±1 ± j)/√2 with 0 ↦ +.
#[derive(Debug, Clone)]
pub struct QamAlphabet {
    order: usize,
    bits_per_symbol: usize,
    points: Vec<Complex64>,
}

impl QamAlphabet {
    pub fn new(order: usize) -> Result<Self, EqualizeError> {
        let side = match order {
            4 => 2usize,
            16 => 4,
            64 => 8,
            other => return Err(EqualizeError::UnsupportedOrder(other)),
        };
        let bits_per_symbol = order.trailing_zeros() as usize;
        let axis_bits = bits_per_symbol / 2;
        // Unit average energy: E{|x|²} = 2(M−1)/3 before scaling.
        let scale = (3.0 / (2.0 * (order as f64 - 1.0))).sqrt();
        let level = |g: usize| -> f64 {
            // Invert the Gray code to recover the level index.
            let mut i = g;
            let mut shift = 1;
            while shift < axis_bits {
                i ^= i >> shift;
                shift <<= 1;
            }
            (side as f64 - 1.0 - 2.0 * i as f64) * scale
        };
        let points = (0..order)
            .map(|label| {
                let re_bits = label >> axis_bits;
                let im_bits = label & ((1 << axis_bits) - 1);
                Complex64::new(level(re_bits), level(im_bits))
            })
            .collect();
        Ok(QamAlphabet {
            order,
            bits_per_symbol,
            points,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.bits_per_symbol
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    /// Maps a label (packed bits, MSB = first bit) to its point.
    pub fn symbol(&self, label: usize) -> Complex64 {
        self.points[label]
    }

    /// Maps a bit stream (one bit per byte, values 0/1) to symbols.
    pub fn map_bits(&self, bits: &[u8]) -> Result<Vec<Complex64>, EqualizeError> {
        if !bits.len().is_multiple_of(self.bits_per_symbol) {
            return Err(EqualizeError::RaggedBits {
                got: bits.len(),
                bits_per_symbol: self.bits_per_symbol,
            });
        }
        Ok(bits
            .chunks(self.bits_per_symbol)
            .map(|chunk| {
                let label = chunk.iter().fold(0usize, |acc, &b| (acc << 1) | b as usize);
                self.points[label]
            })
            .collect())
    }

    /// Nearest-point hard decision, returning the label.
    pub fn decide(&self, z: Complex64) -> usize {
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for (idx, p) in self.points.iter().enumerate() {
            let d = (z - p).norm_sqr();
            if d < best_d {
                best_d = d;
                best = idx;
            }
        }
        best
    }

    /// Hard-demaps symbols back to a bit stream.
    pub fn demap(&self, symbols: &[Complex64]) -> Vec<u8> {
        let mut bits = Vec::with_capacity(symbols.len() * self.bits_per_symbol);
        for &z in symbols {
            let label = self.decide(z);
            for shift in (0..self.bits_per_symbol).rev() {
                bits.push(((label >> shift) & 1) as u8);
            }
        }
        bits
    }
}

/// Cholesky factor of (HᴴH + σ²I) together with Hᴴ, ready to apply the LMMSE
/// estimator to observations.
pub struct LmmseSolver {
    factor: nalgebra::Cholesky<Complex64, nalgebra::Dyn>,
    h_adjoint: DMatrix<Complex64>,
}

impl LmmseSolver {
    pub fn new(h: &DMatrix<Complex64>, noise_variance: f64) -> Result<Self, EqualizeError> {
        let n = h.ncols();
        let mut gram = hermitian_gram(h);
        for i in 0..n {
            gram[(i, i)] += Complex64::new(noise_variance, 0.0);
        }
        let factor = gram.cholesky().ok_or(EqualizeError::SingularSystem)?;
        // Rounding can squeeze a semi-definite Gram matrix past the
        // factorization: its pivots come out near √ε ≈ 1e-8 rather than
        // zero (pivots scale as square roots of eigenvalues). Reject any
        // factor whose pivot spread implies a Gram condition worse than
        // ~1e12.
        let diag = factor.l_dirty().map_diagonal(|d| d.norm());
        let max = diag.max();
        let min = diag.min();
        if min.is_nan() || min <= 1e-6 * max || !max.is_finite() {
            return Err(EqualizeError::SingularSystem);
        }
        Ok(LmmseSolver {
            factor,
            h_adjoint: h.adjoint(),
        })
    }

    /// x̂ = (HᴴH + σ²I)⁻¹ Hᴴ y.
    pub fn apply(&self, y: &[Complex64]) -> Result<Vec<Complex64>, EqualizeError> {
        if y.len() != self.h_adjoint.ncols() {
            return Err(EqualizeError::DimensionMismatch {
                rows: self.h_adjoint.ncols(),
                cols: self.h_adjoint.nrows(),
                got: y.len(),
            });
        }
        let rhs = &self.h_adjoint * DVector::from_column_slice(y);
        let x = self.factor.solve(&rhs);
        Ok(x.as_slice().to_vec())
    }

    /// The full LMMSE matrix W = (HᴴH + σ²I)⁻¹ Hᴴ.
    pub fn matrix(&self) -> DMatrix<Complex64> {
        self.factor.solve(&self.h_adjoint)
    }
}

/// W = (HᴴH + σ²I)⁻¹Hᴴ as an explicit matrix.
pub fn lmmse_matrix(
    h: &DMatrix<Complex64>,
    noise_variance: f64,
) -> Result<DMatrix<Complex64>, EqualizeError> {
    Ok(LmmseSolver::new(h, noise_variance)?.matrix())
}

/// Equalizes one observation: x̂ = W y without forming W.
pub fn equalize(
    h: &DMatrix<Complex64>,
    y: &[Complex64],
    noise_variance: f64,
) -> Result<Vec<Complex64>, EqualizeError> {
    LmmseSolver::new(h, noise_variance)?.apply(y)
}

/// HᴴH through Hermitian column dot products (half the work of a generic
/// product, and the inner loops run over contiguous column storage).
fn hermitian_gram(h: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let rows = h.nrows();
    let cols = h.ncols();
    let data = h.as_slice();
    let mut g = DMatrix::from_element(cols, cols, Complex64::new(0.0, 0.0));
    for i in 0..cols {
        let ci = &data[i * rows..(i + 1) * rows];
        for j in i..cols {
            let cj = &data[j * rows..(j + 1) * rows];
            let mut re = 0.0f64;
            let mut im = 0.0f64;
            for k in 0..rows {
                let x = ci[k];
                let y = cj[k];
                re += x.re * y.re + x.im * y.im;
                im += x.re * y.im - x.im * y.re;
            }
            g[(i, j)] = Complex64::new(re, im);
            if i != j {
                g[(j, i)] = Complex64::new(re, -im);
            }
        }
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn four_qam_uses_the_sign_convention() {
        let q = QamAlphabet::new(4).unwrap();
        let s = 1.0 / 2f64.sqrt();
        assert_eq!(q.bits_per_symbol(), 2);
        assert!((q.map_bits(&[0, 0]).unwrap()[0] - c(s, s)).norm() < 1e-15);
        assert!((q.map_bits(&[0, 1]).unwrap()[0] - c(s, -s)).norm() < 1e-15);
        assert!((q.map_bits(&[1, 0]).unwrap()[0] - c(-s, s)).norm() < 1e-15);
        assert!((q.map_bits(&[1, 1]).unwrap()[0] - c(-s, -s)).norm() < 1e-15);
    }

    #[test]
    fn constellations_have_unit_average_energy() {
        for order in [4usize, 16, 64] {
            let q = QamAlphabet::new(order).unwrap();
            let e: f64 = q.points().iter().map(|p| p.norm_sqr()).sum::<f64>() / order as f64;
            assert!((e - 1.0).abs() < 1e-12, "order {order}: energy {e}");
        }
    }

    #[test]
    fn gray_labels_differ_in_one_bit_between_neighbors() {
        for order in [4usize, 16, 64] {
            let q = QamAlphabet::new(order).unwrap();
            let pts = q.points();
            // Find the nearest horizontal/vertical neighbors and check the
            // Hamming distance of their labels.
            let step = 2.0 * (3.0 / (2.0 * (order as f64 - 1.0))).sqrt();
            for (a, pa) in pts.iter().enumerate() {
                for (b, pb) in pts.iter().enumerate() {
                    let d = pa - pb;
                    let adjacent = (d.re.abs() - step).abs() < 1e-9 && d.im.abs() < 1e-9
                        || (d.im.abs() - step).abs() < 1e-9 && d.re.abs() < 1e-9;
                    if adjacent {
                        assert_eq!((a ^ b).count_ones(), 1, "labels {a} and {b}");
                    }
                }
            }
        }
    }

    #[test]
    fn map_demap_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for order in [4usize, 16, 64] {
            let q = QamAlphabet::new(order).unwrap();
            let bits: Vec<u8> = (0..q.bits_per_symbol() * 100)
                .map(|_| rng.gen_range(0..2u8))
                .collect();
            let symbols = q.map_bits(&bits).unwrap();
            assert_eq!(q.demap(&symbols), bits);
        }
    }

    #[test]
    fn unsupported_order_and_ragged_bits_fail() {
        assert_eq!(
            QamAlphabet::new(8).unwrap_err(),
            EqualizeError::UnsupportedOrder(8)
        );
        let q = QamAlphabet::new(4).unwrap();
        assert!(matches!(
            q.map_bits(&[0, 1, 0]),
            Err(EqualizeError::RaggedBits { .. })
        ));
    }

    #[test]
    fn identity_channel_with_unit_noise_halves_the_input() {
        let h = DMatrix::identity(4, 4);
        let w = lmmse_matrix(&h, 1.0).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { 0.5 } else { 0.0 };
                assert!((w[(i, j)] - c(want, 0.0)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_noise_with_unitary_channel_inverts_it() {
        // A permutation with phases is unitary; W should be its adjoint.
        let mut h = DMatrix::from_element(3, 3, c(0.0, 0.0));
        h[(0, 1)] = c(0.0, 1.0);
        h[(1, 2)] = c(1.0, 0.0);
        h[(2, 0)] = c(-1.0, 0.0);
        let w = lmmse_matrix(&h, 0.0).unwrap();
        let err = (&w - h.adjoint()).norm();
        assert!(err < 1e-12, "err {err}");
    }

    #[test]
    fn zero_noise_rank_deficient_system_errors() {
        let h = DMatrix::from_element(3, 3, c(1.0, 0.0));
        assert_eq!(lmmse_matrix(&h, 0.0).unwrap_err(), EqualizeError::SingularSystem);
    }

    #[test]
    fn lmmse_satisfies_the_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 24;
        let h = DMatrix::from_fn(n, n, |_, _| {
            c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        let sigma2 = 0.3;
        let w = lmmse_matrix(&h, sigma2).unwrap();
        // (HᴴH + σ²I) W = Hᴴ
        let lhs = (h.adjoint() * &h + DMatrix::identity(n, n) * c(sigma2, 0.0)) * &w;
        let err = (lhs - h.adjoint()).norm() / h.norm();
        assert!(err < 1e-9, "normal equation residual {err}");
    }

    #[test]
    fn solver_apply_matches_explicit_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 16;
        let h = DMatrix::from_fn(n, n, |_, _| {
            c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        let y: Vec<Complex64> = (0..n)
            .map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let solver = LmmseSolver::new(&h, 0.1).unwrap();
        let x1 = solver.apply(&y).unwrap();
        let x2 = solver.matrix() * DVector::from_column_slice(&y);
        for (a, b) in x1.iter().zip(x2.iter()) {
            assert!((a - b).norm() < 1e-10);
        }
    }

    #[test]
    fn hermitian_gram_matches_generic_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let h = DMatrix::from_fn(20, 20, |_, _| {
            c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        let err = (hermitian_gram(&h) - h.adjoint() * &h).norm();
        assert!(err < 1e-11, "gram mismatch {err}");
    }
}

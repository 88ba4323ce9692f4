//! Matched-filter channel estimation on truncated pilot observations.
//!
//! The estimators all follow the same loop: find the strongest template
//! response in the window (integer part of the equivalent shift), refine the
//! fractional part by maximizing |T(χ)ᴴy|² with either a uniform grid or a
//! generalized-Fibonacci search, convert the shift back to delay/Doppler
//! (directly in the integer regimes, via two chirp rates when the delay is
//! fractional), estimate the gain by template correlation, subtract the
//! rebuilt contribution and repeat until the residual stalls.
//!
//! Schemes are exposed behind [`EstimationScheme`] trait objects registered
//! in [`SCHEMES`], so a runner can pick `mf_grid`, `mf_gfs`, `ls_baseline`
//! or `perfect_csi` by name at runtime.

use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::params::{ChannelPath, GridLimits, Regime, WaveformConfig};
use crate::pilot::{window_template_a, window_template_t, TruncatedObservation};

/// Residuals at or below this fraction of the initial norm are treated as
/// exhausted: there is nothing left above numerical noise to estimate.
pub const RESIDUAL_FLOOR_REL: f64 = 1e-9;

/// A refinement whose shift lands within this distance of an already
/// reported path is folded into that path instead of appended: the window
/// cannot resolve two paths inside one shift cell anyway.
pub const MERGE_RADIUS: f64 = 0.5;

/// Sweeps of the cyclic re-estimation pass that follows the greedy
/// dual-frame loop. Two sweeps settle almost every case; later sweeps stop
/// on their own as soon as one makes no move.
const REFINE_PASSES: usize = 2;

#[derive(Debug, Error, PartialEq)]
pub enum EstimateError {
    #[error("observation window is identically zero")]
    AllZeroObservation,
    #[error("pilot value must be nonzero to normalize gains")]
    ZeroPilot,
    #[error("dual-frame resolution needs two distinct chirp rates")]
    EqualChirpRates,
    #[error("fraction grid needs at least one step, got rho = {rho}")]
    InvalidGrid { rho: usize },
    #[error("invalid search parameters: {reason}")]
    GfsParamsInvalid { reason: String },
    #[error("search interval is empty: [{x_s}, {x_f}]")]
    EmptyInterval { x_s: f64, x_f: f64 },
    #[error("window length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("scheme needs the second frame of a dual-chirp transmission")]
    MissingDualFrame,
    #[error("scheme needs the true channel and none was provided")]
    MissingTruth,
}

// ---------------------------------------------------------------------------
// Generalized-Fibonacci search
// ---------------------------------------------------------------------------

/// Parameters of the sequence S_0 = a, S_1 = b, S_i = p·S_{i−1} + q·S_{i−2}
/// driving the bracketing search, plus the interval tolerance ε.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GfsParams {
    pub a: i64,
    pub b: i64,
    pub p: i64,
    pub q: i64,
    /// Sequence order N_G; the search runs at most T_G = N_G − 2 iterations.
    pub n_g: usize,
    /// Stop once the interval of uncertainty falls below this width.
    pub epsilon: f64,
}

impl GfsParams {
    /// The classic Fibonacci schedule (a = b = p = q = 1).
    pub fn fibonacci(n_g: usize, epsilon: f64) -> Self {
        GfsParams {
            a: 1,
            b: 1,
            p: 1,
            q: 1,
            n_g,
            epsilon,
        }
    }

    /// Number of interval reductions the schedule supports.
    pub fn t_g(&self) -> usize {
        self.n_g.saturating_sub(2)
    }

    /// Interval-shrink factor of iteration g ∈ 1..=T_G:
    /// η_g = q·S_{N_G−(g+1)} / S_{N_G−(g−1)}.
    pub fn eta(&self, g: usize) -> f64 {
        self.q as f64 * gfn(self, self.n_g - (g + 1)) / gfn(self, self.n_g - (g - 1))
    }

    /// Width of the final interval of uncertainty relative to the initial
    /// one: Π_g (1 − η_g).
    pub fn final_iu(&self) -> f64 {
        (1..=self.t_g()).fold(1.0, |d, g| d * (1.0 - self.eta(g)))
    }

    pub fn validate(&self) -> Result<(), EstimateError> {
        let fail = |reason: String| Err(EstimateError::GfsParamsInvalid { reason });
        if self.a < 0 || self.b < 0 || self.a + self.b <= 0 {
            return fail(format!("need a, b >= 0 with a + b > 0, got a={}, b={}", self.a, self.b));
        }
        if self.p < 1 || self.q < 1 {
            return fail(format!("need integer p, q >= 1, got p={}, q={}", self.p, self.q));
        }
        if self.n_g < 3 {
            return fail(format!("need n_g >= 3 for at least one reduction, got {}", self.n_g));
        }
        if self.epsilon <= 0.0 || self.epsilon.is_nan() {
            return fail(format!("need epsilon > 0, got {}", self.epsilon));
        }
        for g in 1..=self.t_g() {
            let denom = gfn(self, self.n_g - (g - 1));
            if denom <= 0.0 {
                return fail(format!("S_{} is not positive", self.n_g - (g - 1)));
            }
            let eta = self.eta(g);
            if !(eta > 0.0 && eta < 0.5) {
                return fail(format!(
                    "eta_{} = {:.6} outside (0, 0.5); probes would not bracket",
                    g, eta
                ));
            }
        }
        Ok(())
    }
}

/// S_i of the generalized-Fibonacci sequence defined by `params`.
pub fn gfn(params: &GfsParams, i: usize) -> f64 {
    let (mut prev, mut cur) = (params.a as f64, params.b as f64);
    if i == 0 {
        return prev;
    }
    for _ in 1..i {
        let next = params.p as f64 * cur + params.q as f64 * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// Outcome of a bracketing search.
#[derive(Debug, Clone)]
pub struct GfsResult {
    /// Midpoint of the final interval.
    pub x_hat: f64,
    /// Width of the final interval of uncertainty.
    pub final_iu: f64,
    /// Number of objective evaluations spent.
    pub evals: usize,
    /// Interval width after each reduction, starting with the full span.
    pub iu_history: Vec<f64>,
}

/// Maximizes a unimodal objective on [x_s, x_f] by interval bracketing.
///
/// Each iteration places probes x1 = lo + η_g·d and x2 = hi − η_g·d, keeps
/// the half that must contain the maximum (f(x1) < f(x2) keeps [x1, hi],
/// otherwise [lo, x2]) and shrinks d by exactly (1 − η_g). A surviving probe
/// that coincides with the next iteration's probe — always, for the
/// Fibonacci schedule — is reused instead of re-evaluated, so that schedule
/// costs T_G + 1 evaluations.
pub fn gfs_optimize<F>(
    mut f: F,
    x_s: f64,
    x_f: f64,
    params: &GfsParams,
) -> Result<GfsResult, EstimateError>
where
    F: FnMut(f64) -> f64,
{
    params.validate()?;
    if x_f <= x_s || x_f.is_nan() || x_s.is_nan() {
        return Err(EstimateError::EmptyInterval { x_s, x_f });
    }
    let mut lo = x_s;
    let mut hi = x_f;
    let mut d = x_f - x_s;
    let reuse_tol = 1e-9 * d;
    let mut iu_history = vec![d];
    let mut evals = 0usize;
    let mut cached: Option<(f64, f64)> = None;
    for g in 1..=params.t_g() {
        if d < params.epsilon {
            break;
        }
        let eta = params.eta(g);
        let x1 = lo + eta * d;
        let x2 = hi - eta * d;
        let mut probe = |x: f64, cached: &Option<(f64, f64)>, evals: &mut usize| match cached {
            Some((xc, fc)) if (xc - x).abs() <= reuse_tol => *fc,
            _ => {
                *evals += 1;
                f(x)
            }
        };
        let f1 = probe(x1, &cached, &mut evals);
        let f2 = probe(x2, &cached, &mut evals);
        if f1 < f2 {
            lo = x1;
            cached = Some((x2, f2));
        } else {
            hi = x2;
            cached = Some((x1, f1));
        }
        d *= 1.0 - eta;
        iu_history.push(d);
    }
    Ok(GfsResult {
        x_hat: 0.5 * (lo + hi),
        final_iu: d,
        evals,
        iu_history,
    })
}

// ---------------------------------------------------------------------------
// Matched-filter primitives
// ---------------------------------------------------------------------------

/// How the fractional part of a shift is refined.
#[derive(Debug, Clone)]
pub enum FractionMethod {
    /// Evaluate the objective on the ρ+1 points −1/2 + ñ/ρ and take the
    /// argmax (first point wins ties).
    Grid { rho: usize },
    /// Bracket the maximum with a generalized-Fibonacci search.
    Gfs(GfsParams),
}

fn inner(a: &[Complex64], y: &[Complex64]) -> Complex64 {
    a.iter().zip(y).map(|(ai, yi)| ai.conj() * yi).sum()
}

fn normalized_match(t: &[Complex64], y: &[Complex64]) -> f64 {
    let energy: f64 = t.iter().map(|v| v.norm_sqr()).sum();
    if energy == 0.0 {
        return 0.0;
    }
    inner(t, y).norm_sqr() / energy
}

/// Matched-filter objective |T(χ)ᴴ y_T|² / ‖T(χ)‖² for a trial shift χ.
///
/// The energy normalization matters: the window clips a χ-dependent sliver
/// of every template, and the raw correlation peak drifts by that asymmetry
/// (≈ 2·10⁻³ in χ at the benchmark size, which the delay/Doppler conversion
/// amplifies ten-fold). The normalized form peaks exactly at the true shift
/// of a single-path observation.
pub fn mf_objective(cfg: &WaveformConfig, y: &TruncatedObservation, chi: f64) -> f64 {
    let t = window_template_t(cfg, y.n_p, y.q1, y.q2, chi);
    normalized_match(&t, &y.y_t)
}

/// Integer part of the strongest equivalent shift: the window offset with
/// the largest magnitude (ties go to the smaller offset).
pub fn estimate_integer_shift(y: &TruncatedObservation) -> Result<i64, EstimateError> {
    let mut best: Option<(usize, f64)> = None;
    for (w, v) in y.y_t.iter().enumerate() {
        let mag = v.norm_sqr();
        if mag > 0.0 && best.is_none_or(|(_, b)| mag > b) {
            best = Some((w, mag));
        }
    }
    match best {
        Some((w, _)) => Ok(y.offset_of(w)),
        None => Err(EstimateError::AllZeroObservation),
    }
}

/// Strongest window bin among those *consistent* with an anchor shift
/// measured in the other frame of a dual-chirp transmission.
///
/// Both frames see the same paths, so a bin Υ′ can belong to the anchor's
/// path only if the pair (χ_anchor, Υ′) solves χ = −2Nc1·l + k,
/// χ′ = −2Nc1′·l + k to a delay/Doppler inside the channel's ranges. An
/// unconstrained argmax would pair two different paths whenever their
/// magnitude order flips between the frames — the windowed peak of a path
/// scales with its own fractional offset, which differs per chirp rate —
/// and a mispaired solve lands far outside the grid. Screening the bins
/// against the anchor pins the association down.
///
/// The paddings absorb this frame's bin quantization (±½ bin maps to
/// ±½/|Δr| in delay and a further ±½·|r|/|Δr| in Doppler) plus a margin
/// for the anchor's own refinement error. Returns `None` when no bin with
/// signal passes the screen.
pub fn estimate_integer_shift_consistent(
    y: &TruncatedObservation,
    chi_anchor: f64,
    rate_anchor: f64,
    rate_own: f64,
    limits: &GridLimits,
) -> Option<i64> {
    let dr = rate_anchor - rate_own;
    let l_pad = 0.5 / dr.abs() + 0.25;
    let k_pad = 0.5 * rate_anchor.abs() / dr.abs() + 0.5;
    let mut best: Option<(i64, f64)> = None;
    for (w, v) in y.y_t.iter().enumerate() {
        let ups = y.offset_of(w);
        let l = (ups as f64 - chi_anchor) / dr;
        let k = chi_anchor + rate_anchor * l;
        if l < -l_pad || l > limits.l_max as f64 + l_pad || k.abs() > limits.k_max as f64 + k_pad {
            continue;
        }
        let mag = v.norm_sqr();
        if mag > 0.0 && best.is_none_or(|(_, b)| mag > b) {
            best = Some((ups, mag));
        }
    }
    best.map(|(ups, _)| ups)
}

/// Refines the fractional part γ ∈ [−1/2, 1/2] of the shift Υ̂ + γ by
/// maximizing [`mf_objective`]. Returns (γ̂, objective evaluations).
pub fn estimate_fraction(
    cfg: &WaveformConfig,
    y: &TruncatedObservation,
    upsilon: i64,
    method: &FractionMethod,
) -> Result<(f64, usize), EstimateError> {
    let f = |gamma: f64| mf_objective(cfg, y, upsilon as f64 + gamma);
    maximize_fraction(f, method)
}

/// Refines the fractional Doppler κ ∈ [−1/2, 1/2] around an integer
/// hypothesis (l̄, k̄) by maximizing |a_T(l̄, k̄ + κ)ᴴ y|².
pub fn estimate_doppler_fraction(
    cfg: &WaveformConfig,
    y: &TruncatedObservation,
    l_bar: i64,
    k_bar: i64,
    method: &FractionMethod,
) -> Result<(f64, usize), EstimateError> {
    let f = |kappa: f64| {
        let a = window_template_a(
            cfg,
            y.n_p,
            y.q1,
            y.q2,
            l_bar as f64,
            k_bar as f64 + kappa,
        );
        normalized_match(&a, &y.y_t)
    };
    maximize_fraction(f, method)
}

fn maximize_fraction<F>(mut f: F, method: &FractionMethod) -> Result<(f64, usize), EstimateError>
where
    F: FnMut(f64) -> f64,
{
    match method {
        FractionMethod::Grid { rho } => {
            if *rho == 0 {
                return Err(EstimateError::InvalidGrid { rho: 0 });
            }
            let mut best = (f(-0.5), -0.5);
            for step in 1..=*rho {
                let gamma = -0.5 + step as f64 / *rho as f64;
                let val = f(gamma);
                if val > best.0 {
                    best = (val, gamma);
                }
            }
            Ok((best.1, rho + 1))
        }
        FractionMethod::Gfs(params) => {
            let result = gfs_optimize(f, -0.5, 0.5, params)?;
            Ok((result.x_hat, result.evals))
        }
    }
}

/// Maps an integer shift back to the (l̄, k̄) grid cell it encodes, if the
/// cell lies inside the delay/Doppler ranges the window was sized for.
pub fn decode_integer_shift(
    cfg: &WaveformConfig,
    limits: &GridLimits,
    upsilon: i64,
) -> Option<(i64, i64)> {
    let rate = cfg.two_n_c1();
    let l_bar = (-(upsilon as f64) / rate).round() as i64;
    let k_bar = (upsilon as f64 + rate * l_bar as f64).round() as i64;
    ((0..=limits.l_max).contains(&l_bar) && k_bar.abs() <= limits.k_max)
        .then_some((l_bar, k_bar))
}

/// Delay/Doppler pair recovered from two equivalent shifts measured under
/// different chirp rates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolvedPath {
    pub delay_norm: f64,
    pub doppler_norm: f64,
    /// True when the raw solution fell outside the channel's ranges and was
    /// pulled back to the boundary.
    pub clamped: bool,
}

/// Solves χ = −2Nc1·l + k, χ′ = −2Nc1′·l + k for (l, k). When the exact
/// solution leaves the admissible delay/Doppler box it is replaced by the
/// box-constrained least-squares fit to the two measured shifts.
///
/// The distinction matters: the Doppler coordinate amplifies measurement
/// error by ≈ r/Δr, so interference bias of a few tenths of a bin routinely
/// pushes k̂ past the boundary. Clamping k alone while keeping the
/// unconstrained l would leave a template more than a bin away from the
/// measured peaks in *both* frames — nearly orthogonal to the very response
/// it is meant to cancel. Re-fitting the free coordinate along the active
/// boundary keeps the template on the peaks.
pub fn resolve_path(
    chi: f64,
    chi_prime: f64,
    cfg: &WaveformConfig,
    cfg_prime: &WaveformConfig,
    limits: &GridLimits,
) -> Result<ResolvedPath, EstimateError> {
    let r = cfg.two_n_c1();
    let r_p = cfg_prime.two_n_c1();
    if (r - r_p).abs() < 1e-12 {
        return Err(EstimateError::EqualChirpRates);
    }
    let l_max = limits.l_max as f64;
    let k_max = limits.k_max as f64;
    let delay = (chi_prime - chi) / (r - r_p);
    let doppler = chi + r * delay;
    if (0.0..=l_max).contains(&delay) && doppler.abs() <= k_max {
        return Ok(ResolvedPath {
            delay_norm: delay,
            doppler_norm: doppler,
            clamped: false,
        });
    }
    // Shift-space misfit of a candidate cell against both measurements.
    let misfit = |l: f64, k: f64| {
        let e = -r * l + k - chi;
        let e_p = -r_p * l + k - chi_prime;
        e * e + e_p * e_p
    };
    // The unconstrained optimum is outside the box, so the constrained one
    // lies on its boundary: minimize each edge in closed form (clamping the
    // free coordinate back into its own range) and keep the best.
    let mut best: Option<(f64, f64, f64)> = None;
    let mut consider = |l: f64, k: f64| {
        let f = misfit(l, k);
        if best.is_none_or(|(b, _, _)| f < b) {
            best = Some((f, l, k));
        }
    };
    for k in [-k_max, k_max] {
        let l = ((r * (k - chi) + r_p * (k - chi_prime)) / (r * r + r_p * r_p))
            .clamp(0.0, l_max);
        consider(l, k);
    }
    for l in [0.0, l_max] {
        let k = (0.5 * (chi + r * l + chi_prime + r_p * l)).clamp(-k_max, k_max);
        consider(l, k);
    }
    let (_, delay_c, doppler_c) = best.expect("four boundary candidates were evaluated");
    Ok(ResolvedPath {
        delay_norm: delay_c,
        doppler_norm: doppler_c,
        clamped: true,
    })
}

/// Gain of a path by template correlation: ĥ = a_Tᴴ y_T / x_p.
pub fn estimate_gain(
    y: &TruncatedObservation,
    template: &[Complex64],
    pilot_value: Complex64,
) -> Result<Complex64, EstimateError> {
    if template.len() != y.y_t.len() {
        return Err(EstimateError::LengthMismatch {
            expected: y.y_t.len(),
            got: template.len(),
        });
    }
    if pilot_value.norm_sqr() == 0.0 {
        return Err(EstimateError::ZeroPilot);
    }
    Ok(inner(template, &y.y_t) / pilot_value)
}

/// Subtracts a rebuilt path contribution x_p·ĥ·a_T from the window in place.
pub fn cancel_path(
    y: &mut TruncatedObservation,
    template: &[Complex64],
    pilot_value: Complex64,
    gain: Complex64,
) {
    debug_assert_eq!(template.len(), y.y_t.len());
    let scale = pilot_value * gain;
    for (yw, aw) in y.y_t.iter_mut().zip(template) {
        *yw -= scale * aw;
    }
}

// ---------------------------------------------------------------------------
// Iterative estimators
// ---------------------------------------------------------------------------

/// One recovered path as reported to the caller.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EstimatedPath {
    pub gain: Complex64,
    pub delay_norm: f64,
    pub doppler_norm: f64,
    /// Set when the delay/Doppler solution had to be clamped into range.
    pub clamped: bool,
}

impl EstimatedPath {
    /// View as a channel path, e.g. to rebuild the effective channel.
    pub fn as_channel_path(&self) -> ChannelPath {
        ChannelPath::new(self.gain, self.delay_norm, self.doppler_norm)
    }
}

/// Everything an estimation run reports besides the paths themselves:
/// the residual-norm trajectory (entry 0 is the untouched observation),
/// objective-evaluation and iteration counters, and how many detected peaks
/// had to be skipped because they decoded outside the channel grid (or, in
/// the dual-frame loop, because no second-frame shift was consistent with
/// them).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateReport {
    pub paths: Vec<EstimatedPath>,
    pub residual_norms: Vec<f64>,
    pub eval_count: usize,
    pub iterations: usize,
    pub skipped_peaks: usize,
}

impl EstimateReport {
    pub fn channel_paths(&self) -> Vec<ChannelPath> {
        self.paths.iter().map(|p| p.as_channel_path()).collect()
    }
}

/// Knobs of the matched-filter loop.
#[derive(Debug, Clone)]
pub struct MfOptions {
    /// Hard cap on iterations (and thus on reported paths).
    pub t_iter: usize,
    /// Stop once the relative change of the residual norm falls to this.
    pub sigma_stop: f64,
    /// Stop once the residual norm falls to this fraction of the initial
    /// norm. Cancelling a path with a fractional parameter leaves O(1%)
    /// of its energy behind (finite fraction grid, window truncation,
    /// inter-path bias), and anything the loop picks out of that leakage
    /// is a ghost, not a path.
    pub residual_floor: f64,
    pub fraction: FractionMethod,
}

impl Default for MfOptions {
    fn default() -> Self {
        MfOptions {
            t_iter: 15,
            sigma_stop: 1e-3,
            residual_floor: 0.02,
            fraction: FractionMethod::Grid { rho: 10 },
        }
    }
}

fn combined_norm(w1: &TruncatedObservation, w2: &TruncatedObservation) -> f64 {
    (w1.energy() + w2.energy()).sqrt()
}

fn push_or_merge(
    paths: &mut Vec<EstimatedPath>,
    keys: &mut Vec<f64>,
    key: f64,
    candidate: EstimatedPath,
) {
    match keys.iter().position(|&c| (c - key).abs() < MERGE_RADIUS) {
        Some(j) => paths[j].gain += candidate.gain,
        None => {
            keys.push(key);
            paths.push(candidate);
        }
    }
}

/// Matched-filter estimation over two frames with different chirp rates:
/// the full loop for channels whose delays and Dopplers are both fractional.
///
/// Each iteration measures the strongest equivalent shift in the first
/// frame, finds the strongest *consistent* shift in the second (see
/// [`estimate_integer_shift_consistent`] — the frames need not agree on
/// which path is loudest, so the second measurement is screened against
/// the first), resolves the two shifts into one (l̂, k̂), correlates each
/// frame for its own gain, and cancels the rebuilt contribution from both
/// windows. A candidate whose cancellation stalls the combined residual is
/// discarded and its anchor bin written off rather than stopping outright:
/// one unresolvable region (two paths blended inside a bin, or a noise
/// spur) must not abandon the paths elsewhere in the window. The loop ends
/// at the iteration cap, at the residual floor, or when no anchor bins
/// remain, and finishes with a cyclic re-estimation sweep over the
/// recovered paths plus a joint gain refit (see [`refine_paths`]): the
/// greedy pass measures every path on top of its predecessors' sidelobes,
/// and the sweep unwinds that bias.
pub fn mf_ce_fdfd(
    cfg: &WaveformConfig,
    cfg_prime: &WaveformConfig,
    limits: &GridLimits,
    y: &TruncatedObservation,
    y_prime: &TruncatedObservation,
    pilot_value: Complex64,
    opts: &MfOptions,
) -> Result<EstimateReport, EstimateError> {
    let rate = cfg.two_n_c1();
    let rate_prime = cfg_prime.two_n_c1();
    if (rate - rate_prime).abs() < 1e-12 {
        return Err(EstimateError::EqualChirpRates);
    }
    if pilot_value.norm_sqr() == 0.0 {
        return Err(EstimateError::ZeroPilot);
    }
    let mut w1 = y.clone();
    let mut w2 = y_prime.clone();
    let initial = combined_norm(&w1, &w2);
    let floor = opts.residual_floor.max(RESIDUAL_FLOOR_REL) * initial;
    let mut residual_norms = vec![initial];
    let mut paths = Vec::new();
    let mut keys = Vec::new();
    let mut banned = Vec::new();
    let mut eval_count = 0;
    let mut iterations = 0;
    let mut skipped_peaks = 0;
    while iterations < opts.t_iter {
        let current = *residual_norms.last().expect("seeded with the initial norm");
        if current <= floor {
            break;
        }
        let Some(ups) = strongest_bin_excluding(&w1, &banned) else {
            break;
        };
        iterations += 1;
        let (gamma, evals) = estimate_fraction(cfg, &w1, ups, &opts.fraction)?;
        let chi = ups as f64 + gamma;
        eval_count += evals;
        let Some(ups_prime) =
            estimate_integer_shift_consistent(&w2, chi, rate, rate_prime, limits)
        else {
            // Nothing in the second frame can belong to this peak; it is an
            // artifact, not a path.
            skipped_peaks += 1;
            banned.push(ups);
            continue;
        };
        let (gamma_prime, evals_prime) =
            estimate_fraction(cfg_prime, &w2, ups_prime, &opts.fraction)?;
        let chi_prime = ups_prime as f64 + gamma_prime;
        eval_count += evals_prime;
        let resolved = resolve_path(chi, chi_prime, cfg, cfg_prime, limits)?;
        let a1 = window_template_a(
            cfg,
            w1.n_p,
            w1.q1,
            w1.q2,
            resolved.delay_norm,
            resolved.doppler_norm,
        );
        let a2 = window_template_a(
            cfg_prime,
            w2.n_p,
            w2.q1,
            w2.q2,
            resolved.delay_norm,
            resolved.doppler_norm,
        );
        let h1 = estimate_gain(&w1, &a1, pilot_value)?;
        let h2 = estimate_gain(&w2, &a2, pilot_value)?;
        cancel_path(&mut w1, &a1, pilot_value, h1);
        cancel_path(&mut w2, &a2, pilot_value, h2);
        let next = combined_norm(&w1, &w2);
        residual_norms.push(next);
        if (current - next).abs() / current <= opts.sigma_stop {
            // Removing this candidate barely moved the residual, so it was
            // never a real path: write its anchor off and keep looking.
            banned.push(ups);
            continue;
        }
        push_or_merge(
            &mut paths,
            &mut keys,
            chi,
            EstimatedPath {
                gain: (h1 + h2) * 0.5,
                delay_norm: resolved.delay_norm,
                doppler_norm: resolved.doppler_norm,
                clamped: resolved.clamped,
            },
        );
    }
    eval_count += refine_paths(
        cfg,
        cfg_prime,
        limits,
        y,
        y_prime,
        pilot_value,
        opts,
        &mut paths,
    )?;
    Ok(EstimateReport {
        paths,
        residual_norms,
        eval_count,
        iterations,
        skipped_peaks,
    })
}

/// [`estimate_integer_shift`] restricted to anchor bins that have not been
/// written off by a stalled cancellation.
fn strongest_bin_excluding(y: &TruncatedObservation, banned: &[i64]) -> Option<i64> {
    let mut best: Option<(i64, f64)> = None;
    for (w, v) in y.y_t.iter().enumerate() {
        let ups = y.offset_of(w);
        if banned.contains(&ups) {
            continue;
        }
        let mag = v.norm_sqr();
        if mag > 0.0 && best.is_none_or(|(_, b)| mag > b) {
            best = Some((ups, mag));
        }
    }
    best.map(|(ups, _)| ups)
}

/// Joint least-squares gain fit of the given delay/Doppler cells against
/// both untouched windows. Returns the fitted gains and the norm of what
/// the fitted model leaves unexplained. The sequential correlation gain of
/// a path absorbs interference from the paths found after it; the joint
/// solve removes that bias for the price of one small dense system.
fn joint_fit(
    cfg: &WaveformConfig,
    cfg_prime: &WaveformConfig,
    y: &TruncatedObservation,
    y_prime: &TruncatedObservation,
    pilot_value: Complex64,
    cells: &[(f64, f64)],
) -> Option<(Vec<Complex64>, f64)> {
    if cells.is_empty() {
        return None;
    }
    let rows = y.y_t.len() + y_prime.y_t.len();
    let mut a = nalgebra::DMatrix::<Complex64>::zeros(rows, cells.len());
    for (j, &(l, k)) in cells.iter().enumerate() {
        let a1 = window_template_a(cfg, y.n_p, y.q1, y.q2, l, k);
        let a2 = window_template_a(cfg_prime, y_prime.n_p, y_prime.q1, y_prime.q2, l, k);
        for (i, v) in a1.iter().chain(a2.iter()).enumerate() {
            a[(i, j)] = pilot_value * v;
        }
    }
    let b = nalgebra::DVector::from_iterator(
        rows,
        y.y_t.iter().chain(y_prime.y_t.iter()).copied(),
    );
    // Nearly collinear columns (duplicate cells) are fine: the truncated
    // pseudoinverse splits the gain between them, and the reconstruction
    // sums their contributions back together.
    let g = a.clone().svd(true, true).solve(&b, 1e-10).ok()?;
    let residual = (b - a * &g).norm();
    Some((g.iter().copied().collect(), residual))
}

/// Cyclic re-estimation of the recovered paths. Each path in turn is
/// measured again — through the same two-frame pipeline the greedy loop
/// uses — on the observation with every *other* path's fitted contribution
/// removed, and the move is kept only when the jointly refitted two-frame
/// residual drops. The greedy pass measures later paths on top of earlier
/// ones' sidelobes; revisiting each with that interference gone unwinds
/// most of the resulting bias. Returns the extra objective evaluations
/// spent; the paths' gains are left jointly refitted in every case.
#[allow(clippy::too_many_arguments)]
fn refine_paths(
    cfg: &WaveformConfig,
    cfg_prime: &WaveformConfig,
    limits: &GridLimits,
    y: &TruncatedObservation,
    y_prime: &TruncatedObservation,
    pilot_value: Complex64,
    opts: &MfOptions,
    paths: &mut [EstimatedPath],
) -> Result<usize, EstimateError> {
    let rate = cfg.two_n_c1();
    let rate_prime = cfg_prime.two_n_c1();
    let mut evals = 0;
    let mut cells: Vec<(f64, f64)> =
        paths.iter().map(|p| (p.delay_norm, p.doppler_norm)).collect();
    let Some((gains, mut best_residual)) =
        joint_fit(cfg, cfg_prime, y, y_prime, pilot_value, &cells)
    else {
        return Ok(0);
    };
    for (p, gain) in paths.iter_mut().zip(&gains) {
        p.gain = *gain;
    }
    for _ in 0..REFINE_PASSES {
        let mut moved = false;
        for idx in 0..paths.len() {
            let mut r1 = y.clone();
            let mut r2 = y_prime.clone();
            for (j, p) in paths.iter().enumerate() {
                if j == idx {
                    continue;
                }
                let a1 =
                    window_template_a(cfg, y.n_p, y.q1, y.q2, p.delay_norm, p.doppler_norm);
                let a2 = window_template_a(
                    cfg_prime,
                    y_prime.n_p,
                    y_prime.q1,
                    y_prime.q2,
                    p.delay_norm,
                    p.doppler_norm,
                );
                cancel_path(&mut r1, &a1, pilot_value, p.gain);
                cancel_path(&mut r2, &a2, pilot_value, p.gain);
            }
            let Some(ups) = strongest_bin_excluding(&r1, &[]) else {
                continue;
            };
            let (gamma, e1) = estimate_fraction(cfg, &r1, ups, &opts.fraction)?;
            evals += e1;
            let chi = ups as f64 + gamma;
            let Some(ups_prime) =
                estimate_integer_shift_consistent(&r2, chi, rate, rate_prime, limits)
            else {
                continue;
            };
            let (gamma_prime, e2) = estimate_fraction(cfg_prime, &r2, ups_prime, &opts.fraction)?;
            evals += e2;
            let chi_prime = ups_prime as f64 + gamma_prime;
            let resolved = resolve_path(chi, chi_prime, cfg, cfg_prime, limits)?;
            let mut trial = cells.clone();
            trial[idx] = (resolved.delay_norm, resolved.doppler_norm);
            let Some((gains, residual)) =
                joint_fit(cfg, cfg_prime, y, y_prime, pilot_value, &trial)
            else {
                continue;
            };
            if residual < best_residual * (1.0 - 1e-9) {
                cells = trial;
                best_residual = residual;
                paths[idx].delay_norm = resolved.delay_norm;
                paths[idx].doppler_norm = resolved.doppler_norm;
                paths[idx].clamped = resolved.clamped;
                for (p, gain) in paths.iter_mut().zip(&gains) {
                    p.gain = *gain;
                }
                moved = true;
            }
        }
        if !moved {
            break;
        }
    }
    Ok(evals)
}

/// Single-frame matched-filter estimation for integer-delay channels.
/// `fractional_doppler` enables the κ refinement around each decoded cell.
fn mf_ce_single_frame(
    cfg: &WaveformConfig,
    limits: &GridLimits,
    y: &TruncatedObservation,
    pilot_value: Complex64,
    fractional_doppler: bool,
    opts: &MfOptions,
) -> Result<EstimateReport, EstimateError> {
    let mut w = y.clone();
    let initial = w.energy().sqrt();
    let floor = opts.residual_floor.max(RESIDUAL_FLOOR_REL) * initial;
    let mut residual_norms = vec![initial];
    let mut paths = Vec::new();
    let mut keys = Vec::new();
    let mut eval_count = 0;
    let mut iterations = 0;
    let mut skipped_peaks = 0;
    while iterations < opts.t_iter {
        let current = *residual_norms.last().expect("seeded with the initial norm");
        if current <= floor {
            break;
        }
        let ups = estimate_integer_shift(&w)?;
        let Some((l_bar, k_bar)) = decode_integer_shift(cfg, limits, ups) else {
            // The strongest remaining peak does not correspond to any cell
            // this window was sized for; nothing sensible can be cancelled.
            skipped_peaks += 1;
            break;
        };
        let kappa = if fractional_doppler {
            let (kappa, evals) =
                estimate_doppler_fraction(cfg, &w, l_bar, k_bar, &opts.fraction)?;
            eval_count += evals;
            kappa
        } else {
            0.0
        };
        let a = window_template_a(
            cfg,
            w.n_p,
            w.q1,
            w.q2,
            l_bar as f64,
            k_bar as f64 + kappa,
        );
        let h = estimate_gain(&w, &a, pilot_value)?;
        cancel_path(&mut w, &a, pilot_value, h);
        iterations += 1;
        let next = w.energy().sqrt();
        residual_norms.push(next);
        if (current - next).abs() / current <= opts.sigma_stop {
            // An insignificant refinement: drop the candidate and stop.
            break;
        }
        push_or_merge(
            &mut paths,
            &mut keys,
            ups as f64,
            EstimatedPath {
                gain: h,
                delay_norm: l_bar as f64,
                doppler_norm: k_bar as f64 + kappa,
                clamped: false,
            },
        );
    }
    Ok(EstimateReport {
        paths,
        residual_norms,
        eval_count,
        iterations,
        skipped_peaks,
    })
}

/// Matched-filter estimation when both delay and Doppler are integers: peaks
/// decode directly to grid cells and no fraction search is needed.
pub fn mf_ce_idd(
    cfg: &WaveformConfig,
    limits: &GridLimits,
    y: &TruncatedObservation,
    pilot_value: Complex64,
    opts: &MfOptions,
) -> Result<EstimateReport, EstimateError> {
    mf_ce_single_frame(cfg, limits, y, pilot_value, false, opts)
}

/// Matched-filter estimation for integer delays with fractional Doppler:
/// one frame suffices because the delay decode is unambiguous.
pub fn mf_ce_idfd(
    cfg: &WaveformConfig,
    limits: &GridLimits,
    y: &TruncatedObservation,
    pilot_value: Complex64,
    opts: &MfOptions,
) -> Result<EstimateReport, EstimateError> {
    mf_ce_single_frame(cfg, limits, y, pilot_value, true, opts)
}

/// Thresholded least-squares baseline: correlates every integer grid cell
/// against the window and keeps cells whose response exceeds
/// threshold·noise_std (a small relative floor when noiseless). Fractional
/// channels smear energy across many cells, which is exactly the failure
/// mode this baseline exists to demonstrate.
pub fn baseline_threshold_ls(
    cfg: &WaveformConfig,
    limits: &GridLimits,
    y: &TruncatedObservation,
    pilot_value: Complex64,
    threshold: f64,
    noise_std: f64,
) -> Result<EstimateReport, EstimateError> {
    if pilot_value.norm_sqr() == 0.0 {
        return Err(EstimateError::ZeroPilot);
    }
    let initial = y.energy().sqrt();
    let gate = if noise_std > 0.0 {
        threshold * noise_std
    } else {
        let peak = y.y_t.iter().map(|v| v.norm()).fold(0.0, f64::max);
        1e-9 * peak
    };
    let mut w = y.clone();
    let mut paths = Vec::new();
    let mut eval_count = 0;
    for l_bar in 0..=limits.l_max {
        for k_bar in -limits.k_max..=limits.k_max {
            let a = window_template_a(cfg, y.n_p, y.q1, y.q2, l_bar as f64, k_bar as f64);
            eval_count += 1;
            let corr = inner(&a, &y.y_t);
            if corr.norm() > gate {
                let gain = corr / pilot_value;
                cancel_path(&mut w, &a, pilot_value, gain);
                paths.push(EstimatedPath {
                    gain,
                    delay_norm: l_bar as f64,
                    doppler_norm: k_bar as f64,
                    clamped: false,
                });
            }
        }
    }
    Ok(EstimateReport {
        paths,
        residual_norms: vec![initial, w.energy().sqrt()],
        eval_count,
        iterations: 1,
        skipped_peaks: 0,
    })
}

// ---------------------------------------------------------------------------
// Scheme registry
// ---------------------------------------------------------------------------

/// Runtime knobs shared by all schemes; each scheme reads the fields it
/// understands.
#[derive(Debug, Clone, Copy)]
pub struct SchemeOpts {
    pub t_iter: usize,
    pub sigma_stop: f64,
    /// Relative residual level treated as cancellation leakage.
    pub residual_floor: f64,
    /// Fraction-grid resolution for `mf_grid`.
    pub rho: usize,
    /// Fibonacci order for `mf_gfs`.
    pub gfs_n_g: usize,
    pub gfs_epsilon: f64,
    /// Detection threshold (in noise standard deviations) for `ls_baseline`.
    pub ls_threshold: f64,
}

impl Default for SchemeOpts {
    fn default() -> Self {
        SchemeOpts {
            t_iter: 15,
            sigma_stop: 1e-3,
            residual_floor: 0.02,
            rho: 10,
            gfs_n_g: 15,
            gfs_epsilon: 1e-4,
            ls_threshold: 3.0,
        }
    }
}

/// One estimation task: the observation(s), their configurations, and what
/// the scheme may assume about the channel.
pub struct SchemeInput<'a> {
    pub cfg: &'a WaveformConfig,
    pub cfg_prime: Option<&'a WaveformConfig>,
    pub limits: &'a GridLimits,
    pub y: &'a TruncatedObservation,
    pub y_prime: Option<&'a TruncatedObservation>,
    pub pilot_value: Complex64,
    pub regime: Regime,
    pub noise_std: f64,
    pub opts: SchemeOpts,
    /// The drawn channel, for genie schemes; honest schemes ignore it.
    pub truth: Option<&'a [ChannelPath]>,
}

/// A channel-estimation strategy selectable by name at runtime.
pub trait EstimationScheme: Sync {
    fn name(&self) -> &'static str;
    fn estimate(&self, input: &SchemeInput<'_>) -> Result<EstimateReport, EstimateError>;
}

fn run_mf(input: &SchemeInput<'_>, fraction: FractionMethod) -> Result<EstimateReport, EstimateError> {
    let opts = MfOptions {
        t_iter: input.opts.t_iter,
        sigma_stop: input.opts.sigma_stop,
        residual_floor: input.opts.residual_floor,
        fraction,
    };
    match input.regime {
        Regime::Idd => mf_ce_idd(input.cfg, input.limits, input.y, input.pilot_value, &opts),
        Regime::Idfd => mf_ce_idfd(input.cfg, input.limits, input.y, input.pilot_value, &opts),
        Regime::Fdfd => {
            let cfg_prime = input.cfg_prime.ok_or(EstimateError::MissingDualFrame)?;
            let y_prime = input.y_prime.ok_or(EstimateError::MissingDualFrame)?;
            mf_ce_fdfd(
                input.cfg,
                cfg_prime,
                input.limits,
                input.y,
                y_prime,
                input.pilot_value,
                &opts,
            )
        }
    }
}

/// Matched filtering with a uniform fraction grid.
#[derive(Debug, Clone, Copy)]
pub struct MfGridScheme;

impl EstimationScheme for MfGridScheme {
    fn name(&self) -> &'static str {
        "mf_grid"
    }

    fn estimate(&self, input: &SchemeInput<'_>) -> Result<EstimateReport, EstimateError> {
        run_mf(input, FractionMethod::Grid { rho: input.opts.rho })
    }
}

/// Matched filtering with the generalized-Fibonacci fraction search.
#[derive(Debug, Clone, Copy)]
pub struct MfGfsScheme;

impl EstimationScheme for MfGfsScheme {
    fn name(&self) -> &'static str {
        "mf_gfs"
    }

    fn estimate(&self, input: &SchemeInput<'_>) -> Result<EstimateReport, EstimateError> {
        let params = GfsParams::fibonacci(input.opts.gfs_n_g, input.opts.gfs_epsilon);
        run_mf(input, FractionMethod::Gfs(params))
    }
}

/// Thresholded integer-grid least squares on the first frame.
#[derive(Debug, Clone, Copy)]
pub struct LsBaselineScheme;

impl EstimationScheme for LsBaselineScheme {
    fn name(&self) -> &'static str {
        "ls_baseline"
    }

    fn estimate(&self, input: &SchemeInput<'_>) -> Result<EstimateReport, EstimateError> {
        baseline_threshold_ls(
            input.cfg,
            input.limits,
            input.y,
            input.pilot_value,
            input.opts.ls_threshold,
            input.noise_std,
        )
    }
}

/// Genie passthrough of the drawn channel, the reference for error floors.
#[derive(Debug, Clone, Copy)]
pub struct PerfectCsiScheme;

impl EstimationScheme for PerfectCsiScheme {
    fn name(&self) -> &'static str {
        "perfect_csi"
    }

    fn estimate(&self, input: &SchemeInput<'_>) -> Result<EstimateReport, EstimateError> {
        let truth = input.truth.ok_or(EstimateError::MissingTruth)?;
        Ok(EstimateReport {
            paths: truth
                .iter()
                .map(|p| EstimatedPath {
                    gain: p.gain,
                    delay_norm: p.delay_norm,
                    doppler_norm: p.doppler_norm,
                    clamped: false,
                })
                .collect(),
            residual_norms: vec![input.y.energy().sqrt()],
            eval_count: 0,
            iterations: 0,
            skipped_peaks: 0,
        })
    }
}

/// Every scheme the library ships, in the order they appear in reports.
pub static SCHEMES: [&dyn EstimationScheme; 4] = [
    &MfGridScheme,
    &MfGfsScheme,
    &LsBaselineScheme,
    &PerfectCsiScheme,
];

/// Looks a scheme up by its registered name.
pub fn scheme_by_name(name: &str) -> Option<&'static dyn EstimationScheme> {
    SCHEMES.into_iter().find(|s| s.name() == name)
}

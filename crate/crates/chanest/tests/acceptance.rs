//! Acceptance gate: one test per release criterion, each printing a single
//! `acceptance <name>: pass/FAIL (…)` line with the measured quantities.
//!
//! Run with `cargo test --test acceptance -- --nocapture` to see the lines;
//! every check is also a hard assertion, so a plain `cargo test` fails
//! loudly when any criterion regresses. The Monte-Carlo criterion runs
//! 3 200 trials and dominates the suite's runtime.

use std::f64::consts::PI;
use std::time::Instant;

use afdm_chanest::config::ExperimentConfig;
use afdm_chanest::sweep::{orthogonality_rows, run_sweep, ResultRow};
use afdm_core::channel::{
    apply_channel, lift_to_daft, nmse, time_channel_integer, EffectiveChannel,
};
use afdm_core::daft::{demodulate, unitarity_defect};
use afdm_core::estimate::{
    decode_integer_shift, estimate_fraction, estimate_integer_shift, gfs_optimize, mf_ce_fdfd,
    mf_objective, FractionMethod, GfsParams, MfOptions,
};
use afdm_core::iorel::sinr_loss_surface;
use afdm_core::params::{
    benchmark_spec, check_doubly_underspread, derive_limits, draw_channel, draw_channel_regime,
    ChannelPath, GridLimits, Regime, WaveformConfig, WaveformParams,
};
use afdm_core::pilot::{build_pilot_frame, build_pilot_only_frame, truncate, TruncatedObservation};
use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(criterion: &str, pass: bool, detail: &str) {
    let verdict = if pass { "pass" } else { "FAIL" };
    println!("acceptance {criterion}: {verdict} ({detail})");
    assert!(pass, "acceptance {criterion}: {detail}");
}

/// Benchmark channel with the frame size and guard factor overridden.
fn benchmark_at(n: usize, xi: i64) -> (WaveformConfig, GridLimits) {
    let (spec, wf) = benchmark_spec();
    let wf = WaveformParams {
        n_subcarriers: n,
        xi,
        ..wf
    };
    derive_limits(&spec, &wf).expect("benchmark geometry fits")
}

/// Noiseless pilot-only observation of `paths` under `cfg`.
fn observe(
    cfg: &WaveformConfig,
    limits: &GridLimits,
    paths: &[ChannelPath],
) -> (TruncatedObservation, Complex64) {
    let frame = build_pilot_only_frame(cfg, limits, 30.0).expect("guard fits");
    let mut rng = ChaCha8Rng::seed_from_u64(0); // noiseless: rng is never used
    let r = apply_channel(cfg, &frame.x, paths, 0.0, &mut rng).expect("apply");
    let y = demodulate(cfg, &r).expect("demodulate");
    let w = truncate(cfg, &y, &frame).expect("truncate");
    (w, frame.pilot_value)
}

/// True when the sequence rises to a single peak and never rises again
/// after first falling, with changes below `peak·1e-9` treated as flat.
fn is_unimodal(vals: &[f64]) -> bool {
    let peak = vals.iter().fold(0.0f64, |a, &b| a.max(b));
    let tol = peak * 1e-9;
    let mut falling = false;
    for w in vals.windows(2) {
        let d = w[1] - w[0];
        if d > tol && falling {
            return false;
        }
        if d < -tol {
            falling = true;
        }
    }
    true
}

/// Coefficient of determination of the least-squares line through `pts`.
fn r_squared(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let slope = sxy / sxx;
    let ss_res: f64 = pts
        .iter()
        .map(|p| {
            let r = p.1 - my - slope * (p.0 - mx);
            r * r
        })
        .sum();
    let ss_tot: f64 = pts.iter().map(|p| (p.1 - my) * (p.1 - my)).sum();
    1.0 - ss_res / ss_tot
}

#[test]
fn a01_daft_unitarity() {
    let start = Instant::now();
    let mut defects = Vec::new();
    for n in [64usize, 256, 1024] {
        let (cfg, _) = benchmark_at(n, 4);
        defects.push(unitarity_defect(&cfg));
    }
    let secs = start.elapsed().as_secs_f64();
    let worst = defects.iter().fold(0.0f64, |a, &b| a.max(b));
    report(
        "01 daft-unitarity",
        worst < 1e-10 && secs < 5.0,
        &format!(
            "‖AᴴA−I‖_F = {:.2e}/{:.2e}/{:.2e} for N = 64/256/1024, {secs:.2} s",
            defects[0], defects[1], defects[2]
        ),
    );
}

#[test]
fn a02_effective_channel_matches_its_oracles() {
    let start = Instant::now();
    let (spec, wf) = benchmark_spec();
    let (cfg, limits) = derive_limits(&spec, &wf).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);

    // Integer channels: conjugating the time-domain matrix into the DAFT
    // domain must reproduce the closed-form H_eff.
    let mut worst_int = 0.0f64;
    for _ in 0..50 {
        let real = draw_channel_regime(&spec, &cfg, &limits, Regime::Idd, &mut rng);
        let h_t = time_channel_integer(&cfg, &real.paths).unwrap();
        let lifted = lift_to_daft(&cfg, &h_t);
        let h_eff = EffectiveChannel::build(&cfg, &real.paths).matrix;
        worst_int = worst_int.max((&lifted - &h_eff).norm() / h_eff.norm());
    }

    // Fractional channels: the O(N log N) frame pipeline must agree with
    // the dense H_eff acting on the same input.
    let mut worst_frac = 0.0f64;
    for _ in 0..50 {
        let real = draw_channel(&spec, &cfg, &mut rng);
        let frame = build_pilot_frame(&cfg, &limits, 30.0, &mut rng).unwrap();
        let r = apply_channel(&cfg, &frame.x, &real.paths, 0.0, &mut rng).unwrap();
        let y = demodulate(&cfg, &r).unwrap();
        let h_eff = EffectiveChannel::build(&cfg, &real.paths).matrix;
        let predicted = &h_eff * DVector::from_vec(frame.x.samples.clone());
        let got = DVector::from_vec(y.samples.clone());
        worst_frac = worst_frac.max((&got - &predicted).norm() / predicted.norm());
    }

    let secs = start.elapsed().as_secs_f64();
    report(
        "02 effective-channel-oracle",
        worst_int < 1e-10 && worst_frac < 1e-8 && secs < 120.0,
        &format!(
            "50 integer channels ≤ {worst_int:.2e}, 50 fractional ≤ {worst_frac:.2e}, {secs:.1} s"
        ),
    );
}

#[test]
fn a03_integer_channels_have_no_inter_carrier_interference() {
    let (cfg, limits) = benchmark_at(256, 4);
    let gain = Complex64::new(0.8, -0.6);
    let mut worst_ratio = 0.0f64;
    for l in 0..=limits.l_max {
        for k in -limits.k_max..=limits.k_max {
            let h =
                EffectiveChannel::build(&cfg, &[ChannelPath::new(gain, l as f64, k as f64)]).matrix;
            for row in 0..h.nrows() {
                let mut peak = 0.0f64;
                let mut total = 0.0f64;
                for col in 0..h.ncols() {
                    let e = h[(row, col)].norm_sqr();
                    total += e;
                    peak = peak.max(e);
                }
                worst_ratio = worst_ratio.max((total - peak) / peak);
            }
        }
    }
    report(
        "03 idd-no-icci",
        worst_ratio < 1e-18,
        &format!("worst off-peak row energy {worst_ratio:.2e} of peak over all 25 integer cells"),
    );
}

#[test]
fn a04_worst_case_sinr_loss_value() {
    let max_loss = |n: usize| {
        let (cfg, _) = benchmark_at(n, 4);
        sinr_loss_surface(&cfg, 100)
            .iter()
            .map(|r| -r.2)
            .fold(0.0f64, f64::max)
    };
    let at_64 = max_loss(64);
    let at_256 = max_loss(256);
    report(
        "04 sinr-loss",
        (at_64 - 7.843).abs() <= 0.02 && (at_64 - at_256).abs() < 0.01,
        &format!("max loss {at_64:.4} dB at N = 64, {at_256:.4} dB at N = 256"),
    );
}

#[test]
fn a05_doubly_underspread_numbers() {
    let (spec, wf) = benchmark_spec();
    let (cfg, _) = derive_limits(&spec, &wf).unwrap();
    let rep = check_doubly_underspread(&spec, &cfg, 30.0, PI / 60.0);
    let differential_ok = (rep.differential_spread - 1.0471e-5).abs() / 1.0471e-5 < 5e-3;
    let whole_ok = (rep.whole_spread - 3.12e-2).abs() / 3.12e-2 < 5e-3;
    report(
        "05 doubly-underspread",
        differential_ok && whole_ok && rep.doubly_underspread && rep.stationary_symbols == 9,
        &format!(
            "differential {:.4e}, whole {:.3e}, {} stationary symbols",
            rep.differential_spread, rep.whole_spread, rep.stationary_symbols
        ),
    );
}

#[test]
fn a06_objectives_are_unimodal_and_gfs_finds_their_peak() {
    let (spec, wf) = benchmark_spec();
    let (cfg, limits) = derive_limits(&spec, &wf).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let params = GfsParams::fibonacci(15, 1e-4);
    let tol = params.final_iu() / 2.0;
    let mut not_unimodal = 0usize;
    let mut gfs_worst = 0.0f64;
    for _ in 0..100 {
        let l = rng.gen_range(0.0..=limits.l_max as f64);
        let k = rng.gen_range(-(limits.k_max as f64)..=limits.k_max as f64);
        let gain = Complex64::from_polar(rng.gen_range(0.5..1.5), rng.gen_range(0.0..2.0 * PI));
        let (y, _) = observe(&cfg, &limits, &[ChannelPath::new(gain, l, k)]);
        let ups = estimate_integer_shift(&y).unwrap();
        let f = |g: f64| mf_objective(&cfg, &y, ups as f64 + g);

        let vals: Vec<f64> = (0..=1000).map(|i| f(-0.5 + i as f64 / 1000.0)).collect();
        if !is_unimodal(&vals) {
            not_unimodal += 1;
        }

        // Reference argmax: coarse-grid winner refined to 1e-6 resolution,
        // well below the half-IU tolerance being verified.
        let coarse = vals
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| -0.5 + i as f64 / 1000.0)
            .unwrap();
        let lo = (coarse - 1e-3).max(-0.5);
        let hi = (coarse + 1e-3).min(0.5);
        let mut best = (f(lo), lo);
        for i in 1..=2000 {
            let g = lo + (hi - lo) * i as f64 / 2000.0;
            let v = f(g);
            if v > best.0 {
                best = (v, g);
            }
        }

        let (gamma, _) = estimate_fraction(&cfg, &y, ups, &FractionMethod::Gfs(params)).unwrap();
        gfs_worst = gfs_worst.max((gamma - best.1).abs());
    }
    report(
        "06 unimodality-and-gfs",
        not_unimodal == 0 && gfs_worst <= tol,
        &format!(
            "{not_unimodal}/100 objectives failed unimodality, GFS error ≤ {gfs_worst:.2e} \
             (allowed {tol:.2e})"
        ),
    );
}

#[test]
fn a07_shift_decode_roundtrip_and_the_ambiguity_boundary() {
    let (cfg, limits) = benchmark_at(256, 4);
    let (cfg_p, limits_p) = benchmark_at(256, 5);

    // Integer channels decode exactly from a single frame.
    let mut exact = true;
    for l in 0..=limits.l_max {
        for k in -limits.k_max..=limits.k_max {
            let ups = (k as f64 - cfg.two_n_c1() * l as f64).round() as i64;
            exact &= decode_integer_shift(&cfg, &limits, ups) == Some((l, k));
        }
    }

    // A fractional delay aliases the single-frame decode onto the wrong
    // integer cell; the dual-frame estimator resolves the same channel.
    let truth = ChannelPath::new(Complex64::new(0.9, 0.3), 2.25, 1.4);
    let (y1, x_p) = observe(&cfg, &limits, &[truth]);
    let ups = estimate_integer_shift(&y1).unwrap();
    let single = decode_integer_shift(&cfg, &limits, ups);
    let single_breaks = single.map_or(true, |(l, _)| (l as f64 - 2.25).abs() > 0.2);

    let (y2, _) = observe(&cfg_p, &limits_p, &[truth]);
    let opts = MfOptions {
        fraction: FractionMethod::Grid { rho: 100 },
        ..MfOptions::default()
    };
    let rep = mf_ce_fdfd(&cfg, &cfg_p, &limits, &y1, &y2, x_p, &opts).unwrap();
    let resolved = rep.paths.len() == 1
        && (rep.paths[0].delay_norm - 2.25).abs() <= 0.01
        && (rep.paths[0].doppler_norm - 1.4).abs() <= 0.01;

    report(
        "07 decode-roundtrip-and-ambiguity",
        exact && single_breaks && resolved,
        &format!(
            "25/25 integer cells exact; single-frame decode of (2.25, 1.4) → {single:?}; \
             dual-frame → ({:.3}, {:.3})",
            rep.paths[0].delay_norm, rep.paths[0].doppler_norm
        ),
    );
}

#[test]
fn a08_noiseless_estimation_accuracy() {
    let (cfg, limits) = benchmark_at(256, 4);
    let (cfg_p, limits_p) = benchmark_at(256, 5);
    let opts = MfOptions {
        fraction: FractionMethod::Gfs(GfsParams::fibonacci(15, 1e-4)),
        ..MfOptions::default()
    };
    let run = |paths: &[ChannelPath]| {
        let (y1, x_p) = observe(&cfg, &limits, paths);
        let (y2, _) = observe(&cfg_p, &limits_p, paths);
        let rep = mf_ce_fdfd(&cfg, &cfg_p, &limits, &y1, &y2, x_p, &opts).unwrap();
        let truth = EffectiveChannel::build(&cfg, paths).matrix;
        let estimate = EffectiveChannel::build(&cfg, &rep.channel_paths()).matrix;
        nmse(&truth, &estimate)
    };

    // Fixed witness channels: the canonical fractional path, then two paths
    // with distinct integer delay parts and clearly separated gains. (With
    // near-equal gains the two frames can rank the paths differently and
    // pair the wrong shifts — an inherent limit of per-frame peak picking,
    // not a tolerance matter.)
    let nmse_single = run(&[ChannelPath::new(Complex64::new(0.9, 0.3), 2.25, 1.4)]);
    let nmse_two = run(&[
        ChannelPath::new(Complex64::new(0.9, 0.2), 1.45, -0.6),
        ChannelPath::new(Complex64::new(-0.35, 0.55), 3.3, 0.8),
    ]);

    report(
        "08 noiseless-accuracy",
        nmse_single < 1e-4 && nmse_two < 1e-3,
        &format!("single-path NMSE {nmse_single:.2e}, two-path distinct-delay NMSE {nmse_two:.2e}"),
    );
}

#[test]
fn a09_monte_carlo_trends() {
    let start = Instant::now();
    let base = ExperimentConfig {
        scheme: "mf_grid".into(),
        regime: "fdfd".into(),
        snr_db_list: vec![0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0],
        trials: 200,
        seed: 9,
        rho: 10,
        gfs_n_g: 15,
        gfs_epsilon: 1e-4,
        ..ExperimentConfig::default()
    };
    let grid_rows = run_sweep(&base).unwrap();
    let gfs_rows = run_sweep(&ExperimentConfig {
        scheme: "mf_gfs".into(),
        ..base.clone()
    })
    .unwrap();
    let at_25 = |scheme: &str| ExperimentConfig {
        scheme: scheme.into(),
        snr_db_list: vec![25.0],
        ..base.clone()
    };
    let perfect_rows = run_sweep(&at_25("perfect_csi")).unwrap();
    let ls_rows = run_sweep(&at_25("ls_baseline")).unwrap();

    // Improvement is strict at the endpoints; consecutive points may wiggle
    // within Monte Carlo noise (2%). That matters once a curve reaches its
    // resolution floor — mf_grid's ρ = 10 quantization floor is flat from
    // ~20 dB on, so the sign of one 200-trial step there is a coin flip
    // even when the trend is clean.
    let monotone = |rows: &[ResultRow]| rows.windows(2).all(|w| w[1].nmse <= w[0].nmse * 1.02);
    let strictly_improves =
        |rows: &[ResultRow]| rows.last().unwrap().nmse < rows.first().unwrap().nmse;
    let trend_ok = monotone(&grid_rows)
        && strictly_improves(&grid_rows)
        && monotone(&gfs_rows)
        && strictly_improves(&gfs_rows);

    let budget_ok = grid_rows
        .iter()
        .zip(&gfs_rows)
        .filter(|(g, _)| g.snr_db >= 20.0)
        .all(|(g, f)| f.nmse <= g.nmse);

    let ber_perfect = perfect_rows[0].ber;
    let ber_gfs = gfs_rows.iter().find(|r| r.snr_db == 25.0).unwrap().ber;
    let ber_ls = ls_rows[0].ber;
    let ber_ok = ber_gfs <= 2.0 * ber_perfect && ber_ls > 5.0 * ber_perfect;

    let secs = start.elapsed().as_secs_f64();
    let nmse_span = |rows: &[ResultRow]| {
        (
            rows.first().unwrap().nmse,
            rows.last().unwrap().nmse,
        )
    };
    let (g0, g30) = nmse_span(&grid_rows);
    let (f0, f30) = nmse_span(&gfs_rows);
    report(
        "09 monte-carlo-trends",
        trend_ok && budget_ok && ber_ok && secs < 900.0,
        &format!(
            "NMSE 0→30 dB: grid {g0:.2e}→{g30:.2e}, gfs {f0:.2e}→{f30:.2e}; \
             BER@25 dB gfs/perfect/ls = {ber_gfs:.2e}/{ber_perfect:.2e}/{ber_ls:.2e}; {secs:.0} s"
        ),
    );
}

#[test]
fn a10_objective_evaluation_counts_scale_linearly() {
    let (cfg, limits) = benchmark_at(256, 4);
    let paths = [ChannelPath::new(Complex64::new(0.7, -0.3), 1.37, 0.82)];
    let (y, _) = observe(&cfg, &limits, &paths);
    let ups = estimate_integer_shift(&y).unwrap();

    let mut grid_pts = Vec::new();
    for rho in (10..=80).step_by(10) {
        let (_, evals) = estimate_fraction(&cfg, &y, ups, &FractionMethod::Grid { rho }).unwrap();
        grid_pts.push((rho as f64, evals as f64));
    }
    let mut gfs_pts = Vec::new();
    for t_g in (5..=30).step_by(5) {
        // ε sits below the deepest schedule's final interval so the width
        // cutoff never ends the search early; the count then measures the
        // schedule itself.
        let params = GfsParams::fibonacci(t_g + 2, 1e-9);
        let result = gfs_optimize(|g| mf_objective(&cfg, &y, ups as f64 + g), -0.5, 0.5, &params)
            .unwrap();
        gfs_pts.push((t_g as f64, result.evals as f64));
    }

    let r2_grid = r_squared(&grid_pts);
    let r2_gfs = r_squared(&gfs_pts);
    report(
        "10 complexity-counters",
        r2_grid > 0.99 && r2_gfs > 0.99,
        &format!("R² = {r2_grid:.6} over ρ ∈ {{10..80}}, {r2_gfs:.6} over T_G ∈ {{5..30}}"),
    );
}

#[test]
fn a11_template_orthogonality_improves_with_xi_and_n() {
    let rows = orthogonality_rows(100, 11).unwrap();
    let medians = |axis: &str| {
        rows.iter()
            .filter(|r| r.axis == axis)
            .map(|r| r.median_nmse_a)
            .collect::<Vec<f64>>()
    };
    let by_xi = medians("xi");
    let by_n = medians("n");
    let nonincreasing = |v: &[f64]| v.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9));
    report(
        "11 orthogonality-monotone",
        by_xi.len() == 8 && by_n.len() == 8 && nonincreasing(&by_xi) && nonincreasing(&by_n),
        &format!(
            "median NMSE_A: ξ = 1→8 gives {:.2e}→{:.2e}, N = 200→1600 gives {:.2e}→{:.2e}",
            by_xi.first().unwrap(),
            by_xi.last().unwrap(),
            by_n.first().unwrap(),
            by_n.last().unwrap()
        ),
    );
}

//! Acceptance criteria A1 to A9. Each test prints one `PASS`/`FAIL` line;
//! run with `--nocapture` to see them all.

use std::process::Command;
use std::time::{Duration, Instant};

use aon_core::harness::{run_sweep, write_rows, OutputFormat, SweepConfig};
use aon_core::model::binomial;
use aon_core::overlap::{mc_gaussian_pair, mc_pair_agreement, sbg_r1_with_boundary};
use aon_core::posterior::{run_trials, PosteriorState};
use aon_core::prelude::*;
use aon_core::stats::combined_stderr;
use num_bigint::BigUint;

fn report(id: &str, pass: bool, detail: String) {
    println!("{id} {} {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "{id} failed: {detail}");
}

#[test]
fn a1_direct_and_counting_errors_agree() {
    let start = Instant::now();
    let channels = [
        Channel::bgt(12, 2, 0.5).unwrap(),
        Channel::sbg(12, 2, BalancedSet::half_space()).unwrap(),
    ];
    let mut worst = 0.0_f64;
    let mut lines = Vec::new();
    for ch in &channels {
        let ns = n_star(&ch.prior(), ch).unwrap();
        let runs = run_trials(ch, 2 * ns, 500, 1, 0, DEFAULT_BUDGET).unwrap();
        for n in [0, 5, ns, 2 * ns] {
            let d: Vec<f64> = runs.iter().map(|r| r[n].direct).collect();
            let c: Vec<f64> = runs.iter().map(|r| r[n].counting).collect();
            let (d, c) = (Estimate::from_samples(&d), Estimate::from_samples(&c));
            let se = combined_stderr(d.stderr, c.stderr);
            let z = if se > 0.0 {
                (d.mean - c.mean).abs() / se
            } else if (d.mean - c.mean).abs() < 1e-12 {
                0.0
            } else {
                f64::INFINITY
            };
            worst = worst.max(z);
            lines.push(format!("{}@n={n}:{:.4}/{:.4}", ch.label(), d.mean, c.mean));
        }
    }
    let elapsed = start.elapsed();
    report(
        "A1",
        worst <= 3.0 && elapsed < Duration::from_secs(60),
        format!(
            "max |direct-counting|/se = {worst:.3} (tol 3), {:.1}s; {}",
            elapsed.as_secs_f64(),
            lines.join(" ")
        ),
    );
}

#[test]
fn a2_prior_mmse_is_one_minus_k_over_n() {
    let mut worst = 0.0_f64;
    let mut cases = 0;
    for n in 1..=12usize {
        for k in 1..=n {
            let prior = KSparsePrior::new(n, k).unwrap();
            let state = PosteriorState::new(&prior, DEFAULT_BUDGET).unwrap();
            let atoms: Vec<Signal> = state.atoms().cloned().collect();
            let mean = atoms
                .iter()
                .map(|t| instance_error(&state, t).direct)
                .sum::<f64>()
                / atoms.len() as f64;
            worst = worst.max((mean - (1.0 - k as f64 / n as f64)).abs());
            cases += 1;
        }
    }
    report(
        "A2",
        worst <= 1e-12,
        format!("{cases} (N,k) pairs, max deviation {worst:.2e} (tol 1e-12)"),
    );
}

#[test]
fn a3_overlap_curves_match_monte_carlo() {
    let draws = 1_000_000;
    let mut worst = 0.0_f64;
    for (i, &q) in [0.2, 0.5].iter().enumerate() {
        let ch = Channel::bgt(8, 4, q).unwrap();
        for shared in [0usize, 2, 4] {
            let rho = shared as f64 / 4.0;
            let est = mc_pair_agreement(&ch, shared, draws, 100 + i as u64).unwrap();
            worst = worst.max((est.r1 - bgt_r1(rho, q).unwrap()).abs() / est.r1_se);
            worst = worst.max((est.r0 - bgt_r0(rho, q).unwrap()).abs() / est.r0_se);
        }
    }
    let e = hermite_coeffs(&BalancedSet::half_space(), 128).unwrap();
    let mut series_ok = true;
    for (i, &rho) in [0.0, 0.3, 0.5, 0.9].iter().enumerate() {
        let s = sbg_r1_with_boundary(rho, &e).unwrap();
        series_ok &= (s.value - sheppard(rho)).abs() <= s.tail_bound + 1e-12;
        let (mc, se) = mc_gaussian_pair(&BalancedSet::half_space(), rho, draws, 200 + i as u64);
        worst = worst.max((mc - sheppard(rho)).abs() / se);
    }
    report(
        "A3",
        worst <= 4.0 && series_ok,
        format!("max |MC - exact|/se = {worst:.3} (tol 4), series within tail bound: {series_ok}"),
    );
}

#[test]
fn a4_critical_sample_size() {
    // big-integer oracle: largest n with 2^n <= C(20,3), since H(Y) = ln 2
    let m = binomial(20, 3);
    assert_eq!(m, BigUint::from(1140u32));
    let mut oracle = 0u32;
    while BigUint::from(2u32).pow(oracle + 1) <= m {
        oracle += 1;
    }
    let bgt = Channel::bgt(20, 3, 0.5).unwrap();
    let sbg = Channel::sbg(20, 3, BalancedSet::half_space()).unwrap();
    let a = n_star(&bgt.prior(), &bgt).unwrap();
    let b = n_star(&sbg.prior(), &sbg).unwrap();
    report(
        "A4",
        a == 10 && b == 10 && oracle == 10,
        format!("bgt n* = {a}, sbg n* = {b}, oracle = {oracle}"),
    );
}

#[test]
fn a5_divergence_is_nonnegative_monotone_convex() {
    let ch = Channel::bgt(14, 2, 0.5).unwrap();
    let prior = ch.prior();
    let (ln_m, h_y) = (prior_entropy(&prior), output_entropy(&ch));
    let runs = run_trials(&ch, 20, 800, 5, 0, DEFAULT_BUDGET).unwrap();
    let per_trial = |n: usize| -> Vec<f64> {
        runs.iter()
            .map(|r| n as f64 * h_y - ln_m + r[n].ln_z0)
            .collect()
    };
    let d: Vec<Vec<f64>> = (0..=20).map(per_trial).collect();
    let mut worst_level = f64::INFINITY;
    let mut worst_step = f64::INFINITY;
    let mut worst_curv = f64::INFINITY;
    let z = |xs: &[f64]| {
        let e = Estimate::from_samples(xs);
        if e.stderr > 0.0 {
            e.mean / e.stderr
        } else if e.mean.abs() < 1e-12 {
            0.0
        } else {
            e.mean.signum() * f64::INFINITY
        }
    };
    for n in 0..=20 {
        worst_level = worst_level.min(z(&d[n]));
        if n >= 1 {
            let step: Vec<f64> = (0..runs.len()).map(|t| d[n][t] - d[n - 1][t]).collect();
            worst_step = worst_step.min(z(&step));
        }
        if n >= 2 {
            let curv: Vec<f64> = (0..runs.len())
                .map(|t| d[n][t] - 2.0 * d[n - 1][t] + d[n - 2][t])
                .collect();
            worst_curv = worst_curv.min(z(&curv));
        }
    }
    let d0 = kl_estimate(&ch, 0, 800, 5, DEFAULT_BUDGET).unwrap();
    report(
        "A5",
        worst_level >= -3.0 && worst_step >= -3.0 && worst_curv >= -3.0 && d0.mean == 0.0,
        format!(
            "min z: level {worst_level:.2}, first diff {worst_step:.2}, second diff {worst_curv:.2} (tol -3); D(0) = {}",
            d0.mean
        ),
    );
}

#[test]
fn a6_slope_matches_predictive_entropy() {
    let ch = Channel::bgt(20, 3, 0.5).unwrap();
    let betas = [0.5, 1.0, 1.5];
    let curve = dn_curve(&ch, &betas, 400, 9, 400, DEFAULT_BUDGET).unwrap();
    let mut worst = 0.0_f64;
    let mut parts = Vec::new();
    for &b in &betas {
        let slope = left_derivative(&curve, b).unwrap();
        let ent = entropy_slope(&curve, b).unwrap();
        let z = (slope.mean - ent.mean).abs() / combined_stderr(slope.stderr, ent.stderr);
        worst = worst.max(z);
        parts.push(format!("beta={b}: {:.4} vs {:.4}", slope.mean, ent.mean));
    }
    report(
        "A6",
        worst <= 3.0,
        format!("max z = {worst:.3} (tol 3); {}", parts.join(", ")),
    );
}

#[test]
fn a7_condition_holds_on_the_grid() {
    let grid = uniform_grid(1001);
    let mut reports = Vec::new();
    for q in [0.1, 0.3, 0.5] {
        reports.push((format!("bgt q={q}"), check_bgt(q, &grid, 1e-10).unwrap()));
    }
    reports.push((
        "half-space".into(),
        check_sbg(&BalancedSet::half_space(), 128, &grid, 1e-10).unwrap(),
    ));
    reports.push((
        "symmetric".into(),
        check_sbg(&BalancedSet::symmetric(), 128, &grid, 1e-10).unwrap(),
    ));
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, r) in &reports {
        ok &= r.holds() && r.min_margin >= -1e-10 && r.equality_at_zero && r.equality_at_one;
        parts.push(format!("{name}: {:.2e}", r.min_margin));
    }
    let arc = arcsine_inequality_check(&grid).unwrap();
    let half = arc.slack_at_half.unwrap();
    let expect = 2f64.sqrt() - 4.0 / 3.0;
    ok &= (half - expect).abs() <= 1e-12 && arc.holds;
    report(
        "A7",
        ok,
        format!(
            "min margins {}; arcsine slack at 1/2 = {half:.15} (expect {expect:.15})",
            parts.join(", ")
        ),
    );
}

#[test]
fn a8_transition_trend() {
    let start = Instant::now();
    let ch = Channel::bgt(20, 3, 0.5).unwrap();
    let ns = n_star(&ch.prior(), &ch).unwrap();
    let n_lo = (0.25 * ns as f64).floor() as usize;
    let n_hi = (2.0 * ns as f64).floor() as usize;
    let lo = mmse_mc(&ch, n_lo, 400, 3, DEFAULT_BUDGET).unwrap();
    let hi = mmse_mc(&ch, n_hi, 400, 3, DEFAULT_BUDGET).unwrap();
    let gap = (lo.mean - hi.mean) / combined_stderr(lo.stderr, hi.stderr);
    let elapsed = start.elapsed();
    report(
        "A8",
        hi.mean < 0.2 && lo.mean > 0.6 && gap > 10.0 && elapsed < Duration::from_secs(300),
        format!(
            "mmse(0.25) = {:.4}, mmse(2.0) = {:.4}, gap = {gap:.1} se (tol 10), {:.1}s",
            lo.mean,
            hi.mean,
            elapsed.as_secs_f64()
        ),
    );
}

#[test]
fn a9_sweeps_are_byte_identical() {
    let cfg = SweepConfig {
        betas: vec![0.25, 0.5, 1.0, 1.5, 2.0],
        trials: 50,
        mc_draws: 20,
        seed: 17,
        ..SweepConfig::default()
    };
    let render = || {
        let mut buf = Vec::new();
        write_rows(&run_sweep(&cfg).unwrap(), OutputFormat::Csv, &mut buf).unwrap();
        buf
    };
    let in_process = render() == render();

    let dir = tempfile::tempdir().unwrap();
    let run_cli = |threads: &str, name: &str| {
        let path = dir.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_aon"))
            .args(["sweep", "--model", "sbg-halfspace", "--n", "14", "--k", "2"])
            .args([
                "--beta",
                "0.5:2:0.5",
                "--trials",
                "40",
                "--mc-draws",
                "10",
                "--seed",
                "3",
            ])
            .arg("--out")
            .arg(&path)
            .env("AON_THREADS", threads)
            .status()
            .unwrap();
        assert!(status.success());
        std::fs::read(path).unwrap()
    };
    let a = run_cli("1", "a.csv");
    let b = run_cli("4", "b.csv");
    report(
        "A9",
        in_process && a == b && !a.is_empty(),
        format!(
            "in-process identical: {in_process}, CLI with 1 vs 4 threads identical: {}",
            a == b
        ),
    );
}

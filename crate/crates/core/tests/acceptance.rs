//! Acceptance criteria, one test per criterion. Each prints a single
//! `criterion N: PASS|FAIL ...` line before asserting.

mod common;

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};
use std::time::{Duration, Instant};

use num_complex::Complex64;
use pnbound::amplitude::{amplitude_stats, AmplitudeModel};
use pnbound::bcrb::{assemble_bim, BimResult};
use pnbound::fisher::{fisher_da, fisher_mbcrb, fisher_nda, FisherBlocks, NdaBudget};
use pnbound::likelihood::SampleLikelihoodContext;
use pnbound::map::{mse_harness, HarnessConfig};
use pnbound::prior::{build_covariance, prior_for, RHO_EPS};
use pnbound::rng;
use pnbound::{make_constellation, ChannelConfig, Mode, PnConfig};
use rand::Rng;

const SEED: u64 = 20240601;
const RHO_MAX: f64 = 1.0 - RHO_EPS;
/// 0-based index of symbol 50.
const K50: usize = 49;

fn verdict(id: &str, pass: bool, detail: String) {
    println!("criterion {id}: {} — {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {id} failed: {detail}");
}

fn nda_fisher(constellation: &str, snr_db: f64) -> FisherBlocks {
    static CACHE: OnceLock<Mutex<HashMap<(String, u64), FisherBlocks>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    let key = (constellation.to_string(), snr_db.to_bits());
    if let Some(f) = cache.lock().unwrap().get(&key) {
        return f.clone();
    }
    let c = make_constellation(constellation).unwrap();
    let sigma2_w = ChannelConfig::new(snr_db).noise_variance(c.energy());
    let seed = rng::derive_seed(SEED, &[rng::label_tag(constellation), snr_db.to_bits()]);
    let f = fisher_nda(&c, sigma2_w, NdaBudget::default(), seed).unwrap();
    cache.lock().unwrap().insert(key, f.clone());
    f
}

fn bound(fisher: &FisherBlocks, rho: f64, sigma2_zeta: f64, n: usize) -> BimResult {
    let pn = PnConfig::new(sigma2_zeta, rho, PnConfig::DEFAULT_SIGMA2_INIT, n).unwrap();
    assemble_bim(fisher, &prior_for(&pn).unwrap()).unwrap()
}

fn db(ratio: f64) -> f64 {
    10.0 * ratio.log10()
}

#[test]
fn criterion_1_synchronization_gain() {
    let start = Instant::now();
    let f = nda_fisher("QPSK", 15.0);
    let mut pass = true;
    let mut detail = Vec::new();
    for (sigma2_zeta, target) in [(1e-3, 1.5), (1e-2, 2.0)] {
        let b0 = bound(&f, 0.0, sigma2_zeta, 100).mse_phi1[K50];
        let b1 = bound(&f, RHO_MAX, sigma2_zeta, 100).mse_phi1[K50];
        let gain = db(b0 / b1);
        pass &= (gain - target).abs() <= 0.5;
        detail.push(format!("σ²_ζ={sigma2_zeta:e}: {gain:.3} dB (target {target} ± 0.5)"));
    }
    let elapsed = start.elapsed();
    pass &= elapsed < Duration::from_secs(300);
    detail.push(format!("{:.1} s", elapsed.as_secs_f64()));
    verdict("1", pass, detail.join("; "));
}

#[test]
fn criterion_2_mbcrb_tightness() {
    let gap = |snr: f64| {
        let c = make_constellation("QPSK").unwrap();
        let sigma2_w = ChannelConfig::new(snr).noise_variance(c.energy());
        let nda = bound(&nda_fisher("QPSK", snr), 0.1, 1e-3, 100).mse_phi1[K50];
        let mb = bound(&fisher_mbcrb(&c, sigma2_w).unwrap(), 0.1, 1e-3, 100).mse_phi1[K50];
        (nda - mb) / nda
    };
    let (g5, g30) = (gap(5.0), gap(30.0));
    verdict(
        "2",
        g30 * 3.0 <= g5 && g30 < 0.05,
        format!(
            "relative gap 5 dB = {:.3}%, 30 dB = {:.3}%, ratio {:.1} (need >= 3, 30 dB < 5%)",
            100.0 * g5,
            100.0 * g30,
            g5 / g30
        ),
    );
}

#[test]
fn criterion_3_constellation_penalty() {
    let q = bound(&nda_fisher("QPSK", 5.0), 0.5, 1e-3, 100).mse_phi1[K50];
    let q16 = bound(&nda_fisher("16QAM", 5.0), 0.5, 1e-3, 100).mse_phi1[K50];
    let penalty = db(q16 / q);
    verdict(
        "3",
        penalty >= 3.0,
        format!("NDA 16QAM / QPSK at 5 dB, symbol 50, N=100, ρ=0.5, σ²_ζ=1e-3: {penalty:.3} dB (need >= 3 dB)"),
    );
}

#[test]
fn criterion_4_block_length_benefit() {
    let mut pass = true;
    let mut detail = Vec::new();
    for c in ["QPSK", "16QAM"] {
        let f = nda_fisher(c, 5.0);
        let long = bound(&f, 0.5, 1e-3, 100).mse_phi1[K50];
        let short = bound(&f, 0.5, 1e-3, 20).mse_phi1[9];
        pass &= long < short;
        detail.push(format!("{c}: N=100 {long:.4e} vs N=20 {short:.4e}"));
    }
    verdict("4", pass, detail.join("; "));
}

#[test]
fn criterion_5_amplitude_noise_collapse() {
    let f = nda_fisher("QPSK", 15.0);
    let grid: Vec<f64> = (0..10).map(|i| i as f64 / 10.0).chain([RHO_MAX]).collect();
    let mut pass = true;
    let mut detail = Vec::new();
    for sigma2_zeta in [1e-3, 1e-2] {
        let eps: Vec<f64> = grid
            .iter()
            .map(|&r| bound(&f, r, sigma2_zeta, 100).sigma2_eps_tilde[K50])
            .collect();
        let monotone = eps.windows(2).all(|w| w[1] < w[0]);
        let ratio = eps[eps.len() - 1] / eps[0];
        let reduced = bound(&f, 1.0, sigma2_zeta, 100).sigma2_eps_tilde[K50];
        pass &= monotone && ratio < 0.05 && reduced == 0.0;
        detail.push(format!(
            "σ²_ζ={sigma2_zeta:e}: monotone={monotone}, ratio={ratio:.4} (need < 0.05), ρ=1 value={reduced}"
        ));
    }
    verdict("5", pass, detail.join("; "));
}

#[test]
fn criterion_6_bound_validity() {
    let start = Instant::now();
    let trials = 2000;
    let mut valid = true;
    let mut tight = true;
    let mut detail = Vec::new();
    for snr in [5.0, 15.0, 30.0] {
        for rho in [0.0, 0.5] {
            let cfg = HarnessConfig {
                pn: PnConfig::new(1e-3, rho, PnConfig::DEFAULT_SIGMA2_INIT, 100).unwrap(),
                channel: ChannelConfig::new(snr),
                constellation: make_constellation("QPSK").unwrap(),
                mode: Mode::Da,
            };
            let seed = rng::derive_seed(SEED, &[rng::label_tag("harness"), snr.to_bits(), rho.to_bits()]);
            let h = mse_harness(&cfg, trials, seed).unwrap();
            let b = h.da_bound.as_ref().unwrap()[K50];
            let (mse, se) = (h.mse_phi1[K50], h.stderr_phi1[K50]);
            valid &= mse >= b - 3.0 * se;
            let gap = db(mse / b);
            if snr == 30.0 {
                tight &= gap < 1.0;
            }
            detail.push(format!(
                "SNR={snr} ρ={rho}: MSE={mse:.4e}±{se:.1e} bound={b:.4e} gap={gap:.2} dB"
            ));
        }
    }
    let elapsed = start.elapsed();
    let in_time = elapsed < Duration::from_secs(600);
    detail.push(format!(
        "MSE >= bound − 3σ everywhere: {valid}; 30 dB gap < 1 dB: {tight}; {:.1} s",
        elapsed.as_secs_f64()
    ));
    verdict("6", valid && tight && in_time, detail.join("; "));
}

#[test]
fn criterion_7_oracle_equivalences() {
    let mut results = Vec::new();

    // (a) finite differences on random DA and NDA cases with general gains.
    let qpsk = make_constellation("QPSK").unwrap();
    let qam = make_constellation("16QAM").unwrap();
    let mut r = rng::stream(SEED, &[rng::label_tag("fd-cases")]);
    let (mut grad_err, mut hess_err): (f64, f64) = (0.0, 0.0);
    for i in 0..3000 {
        let mut z = || Complex64::new(r.random_range(-2.5..2.5), r.random_range(-2.5..2.5));
        let (y, s, h1, h2) = (z(), z(), z() * 0.5, z() * 0.5);
        let sigma2 = r.random_range(0.1..3.0);
        let (p1, p2) = (r.random_range(-3.0..3.0), r.random_range(-3.0..3.0));
        let ctx = match i % 3 {
            0 => SampleLikelihoodContext::known(y, s, sigma2),
            1 => SampleLikelihoodContext::unknown(y, &qpsk, sigma2),
            _ => SampleLikelihoodContext::unknown(y, &qam, sigma2),
        }
        .with_gains(h1, h2);
        let (g, h) = common::finite_difference_errors(&ctx, p1, p2, 1e-5, 1e-5);
        grad_err = grad_err.max(g);
        hess_err = hess_err.max(h);
    }
    results.push((
        "a",
        grad_err < 1e-6 && hess_err < 1e-4,
        format!("max |Δgrad| {grad_err:.2e}, max |Δhess| {hess_err:.2e}"),
    ));

    // (b) structured precision vs dense inverse.
    let mut worst: f64 = 0.0;
    for &n in &[1usize, 50, 512] {
        for &rho in &[0.0, 0.5, 0.9] {
            let cfg = PnConfig::new(1e-3, rho, PnConfig::DEFAULT_SIGMA2_INIT, n).unwrap();
            let prior = build_covariance(&cfg).unwrap();
            let (hi, lo) = common::covariance_dd(&cfg);
            worst = worst.max(common::relative_frobenius(
                &common::dense_inverse(&hi, &lo),
                &prior.precision,
            ));
        }
    }
    results.push((
        "b",
        worst < 1e-8,
        format!("max relative error {worst:.2e} over N ∈ {{1,50,512}}, ρ ∈ {{0,0.5,0.9}}"),
    ));

    // (c) DA Fisher closed form vs Monte Carlo.
    let sigma2_w = 0.5;
    let mc = common::da_fisher_mc(&qpsk, sigma2_w, 1_000_000, SEED);
    let expect = fisher_mbcrb(&qpsk, sigma2_w).unwrap().block(0).0;
    let rel_c = (mc - expect).abs() / expect;
    results.push((
        "c",
        rel_c < 0.01,
        format!("MC {mc:.4} vs closed form {expect:.4} ({:.3}%)", 100.0 * rel_c),
    ));

    // (d) sampler covariance.
    let mut worst_d: f64 = 0.0;
    for rho in [0.0, 0.5, 0.9, 1.0] {
        for s2z in [1e-3, 1e-2] {
            let cfg = PnConfig::new(s2z, rho, PnConfig::DEFAULT_SIGMA2_INIT, 100).unwrap();
            let seed = rng::derive_seed(SEED, &[rho.to_bits(), s2z.to_bits()]);
            worst_d = worst_d.max(common::sampler_covariance_error(&cfg, 100_000, seed));
        }
    }
    results.push((
        "d",
        worst_d < 0.03,
        format!("max relative covariance error {:.2}%", 100.0 * worst_d),
    ));

    // (e) amplitude moments at 30 dB.
    let (mut mean_err, mut var_err): (f64, f64) = (0.0, 0.0);
    let s = Complex64::new(0.6, 0.8);
    let sigma2_w = 1e-3;
    for v in [0.0, 1e-4, 1e-3, 1e-2] {
        let stats = amplitude_stats(&AmplitudeModel::new(v, s.norm(), sigma2_w).unwrap());
        let (m, var) = common::exact_amplitude_moments(v, s, sigma2_w, 1_000_000, SEED);
        mean_err = mean_err.max((stats.mean - m).abs() / m);
        var_err = var_err.max((stats.error_variance - var).abs() / var);
    }
    results.push((
        "e",
        mean_err < 2e-3 && var_err < 0.05,
        format!("mean {:.3}%, variance {:.2}%", 100.0 * mean_err, 100.0 * var_err),
    ));

    // (f) single-symbol NDA γ equals the DA value.
    let one = make_constellation("custom:0.8+0.6j").unwrap();
    let f = fisher_nda(
        &one,
        0.5,
        NdaBudget {
            samples: 50_000,
            delta_grid: 32,
        },
        SEED,
    )
    .unwrap();
    let (g11, g12, _) = f.block(0);
    let (se11, se12, _) = f.stderr();
    let da = 2.0 / 0.5;
    let pass_f = (g11 - da).abs() <= 3.0 * se11 && g12.abs() <= 3.0 * se12 + 1e-12 * da;
    results.push((
        "f",
        pass_f,
        format!("γ11 {g11:.5}±{se11:.1e} vs {da}; γ12 {g12:.1e}±{se12:.1e}"),
    ));

    let pass = results.iter().all(|r| r.1);
    let detail: Vec<String> = results
        .iter()
        .map(|(k, ok, d)| format!("({k}) {} {d}", if *ok { "ok" } else { "FAIL" }))
        .collect();
    verdict("7", pass, detail.join("; "));
}

#[test]
fn criterion_8_degeneracy_continuity() {
    let q = make_constellation("QPSK").unwrap();
    let sigma2_w = ChannelConfig::new(15.0).noise_variance(q.energy());
    let terms = [
        ("NDA", nda_fisher("QPSK", 15.0)),
        ("MBCRB", fisher_mbcrb(&q, sigma2_w).unwrap()),
        ("DA", fisher_da(&vec![q.symbols()[0]; 100], sigma2_w).unwrap()),
    ];
    let mut worst: f64 = 0.0;
    let mut detail = Vec::new();
    for (name, f) in &terms {
        for sigma2_zeta in [1e-3, 1e-2] {
            let general = bound(f, RHO_MAX, sigma2_zeta, 100).mse_phi1;
            let reduced = bound(f, 1.0, sigma2_zeta, 100).mse_phi1;
            let rel = general
                .iter()
                .zip(&reduced)
                .map(|(a, b)| ((a - b) / b).abs())
                .fold(0.0, f64::max);
            worst = worst.max(rel);
            detail.push(format!("{name} σ²_ζ={sigma2_zeta:e}: {:.3}%", 100.0 * rel));
        }
    }
    verdict(
        "8",
        worst < 5e-3,
        format!(
            "max per-symbol relative difference (need < 0.5%): {}",
            detail.join(", ")
        ),
    );
}

//! Independent oracles shared by the integration and acceptance suites.
#![allow(dead_code)]

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use pnbound::likelihood::{loglik_derivs, loglik_nda, SampleLikelihoodContext};
use pnbound::model::Constellation;
use pnbound::prior::{build_covariance, sample_trajectories_with};
use pnbound::rng;
use pnbound::PnConfig;
use rand::Rng;
use rand_distr::StandardNormal;

/// Worst absolute deviation of the analytic gradient from central
/// differences of the log-likelihood (step `h`) and of the analytic Hessian
/// from central differences of the gradient (step `h2`).
pub fn finite_difference_errors(ctx: &SampleLikelihoodContext<'_>, p1: f64, p2: f64, h: f64, h2: f64) -> (f64, f64) {
    let f = |a: f64, b: f64| loglik_nda(ctx, a, b);
    let g = |a: f64, b: f64| loglik_derivs(ctx, a, b).gradient;
    let d = loglik_derivs(ctx, p1, p2);
    let g_fd = [
        (f(p1 + h, p2) - f(p1 - h, p2)) / (2.0 * h),
        (f(p1, p2 + h) - f(p1, p2 - h)) / (2.0 * h),
    ];
    let (gp1, gm1) = (g(p1 + h2, p2), g(p1 - h2, p2));
    let (gp2, gm2) = (g(p1, p2 + h2), g(p1, p2 - h2));
    let h_fd = [
        [(gp1[0] - gm1[0]) / (2.0 * h2), (gp2[0] - gm2[0]) / (2.0 * h2)],
        [(gp1[1] - gm1[1]) / (2.0 * h2), (gp2[1] - gm2[1]) / (2.0 * h2)],
    ];
    let grad_err = (d.gradient[0] - g_fd[0]).abs().max((d.gradient[1] - g_fd[1]).abs());
    let hess_err = (0..2)
        .flat_map(|i| (0..2).map(move |j| (i, j)))
        .map(|(i, j)| (d.hessian[i][j] - h_fd[i][j]).abs())
        .fold(0.0, f64::max);
    (grad_err, hess_err)
}

/// Prior covariance `A ⊗ K` built from its definition in double-double:
/// returns `(hi, lo)` with `hi + lo` the entries to ~2⁻¹⁰⁶ relative.
pub fn covariance_dd(cfg: &PnConfig) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = cfg.n;
    let mut hi = DMatrix::zeros(2 * n, 2 * n);
    let mut lo = DMatrix::zeros(2 * n, 2 * n);
    let pair = [[2.0, 1.0 + cfg.rho], [1.0 + cfg.rho, 2.0]];
    for l in 0..n {
        for k in 0..n {
            let (p, pe) = two_prod(cfg.sigma2_zeta, l.min(k) as f64);
            let (s, se) = two_sum(cfg.sigma2_init, p);
            let (k_hi, k_lo) = (s, se + pe);
            for (a, row) in pair.iter().enumerate() {
                for (b, &m) in row.iter().enumerate() {
                    let (h, he) = two_prod(m, k_hi);
                    hi[(a * n + l, b * n + k)] = h;
                    lo[(a * n + l, b * n + k)] = he + m * k_lo;
                }
            }
        }
    }
    (hi, lo)
}

/// Dense inverse of a symmetric matrix given as `hi + lo`: LU of `hi`,
/// refined by Newton–Schulz steps whose residual `I − (hi + lo)·X` is
/// accumulated with error-free products. Independent of any structure.
pub fn dense_inverse(hi: &DMatrix<f64>, lo: &DMatrix<f64>) -> DMatrix<f64> {
    let mut x = hi.clone().lu().try_inverse().expect("covariance is invertible");
    for _ in 0..2 {
        let r = residual_dd(hi, lo, &x);
        x += &x * r;
    }
    x
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

fn residual_dd(hi: &DMatrix<f64>, lo: &DMatrix<f64>, x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = hi.nrows();
    let small = lo * x;
    DMatrix::from_fn(n, n, |i, j| {
        let (a, b) = (hi.column(i), x.column(j));
        let (mut acc, mut err) = (if i == j { 1.0 } else { 0.0 }, -small[(i, j)]);
        for k in 0..n {
            let (p, pe) = two_prod(-a[k], b[k]);
            let (s, se) = two_sum(acc, p);
            acc = s;
            err += se + pe;
        }
        acc + err
    })
}

pub fn relative_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm()
}

/// Monte-Carlo estimate of `E[−∂²ℓ/∂φ1²]` for known symbols drawn from `c`
/// with Δ = φ1 − φ2 uniform on [0, 2π) and a uniform common phase.
pub fn da_fisher_mc(c: &Constellation, sigma2_w: f64, samples: usize, seed: u64) -> f64 {
    let mut r = rng::stream(seed, &[rng::label_tag("da-fisher-oracle")]);
    let sd = (sigma2_w / 2.0).sqrt();
    let mut acc = 0.0;
    for _ in 0..samples {
        let s = c.symbols()[r.random_range(0..c.order())];
        let theta = r.random_range(0.0..2.0 * PI);
        let delta = r.random_range(0.0..2.0 * PI);
        let (p1, p2) = (theta + 0.5 * delta, theta - 0.5 * delta);
        let w = Complex64::new(
            sd * r.sample::<f64, _>(StandardNormal),
            sd * r.sample::<f64, _>(StandardNormal),
        );
        let y = s * (Complex64::cis(p1) + Complex64::cis(p2)) + w;
        let ctx = SampleLikelihoodContext::known(y, s, sigma2_w);
        acc -= loglik_derivs(&ctx, p1, p2).hessian[0][0];
    }
    acc / samples as f64
}

/// Worst relative deviation of the sample covariance of `blocks` sampled
/// trajectory pairs from the model covariance, over entries with
/// `|C| > σ²_ζ`.
pub fn sampler_covariance_error(cfg: &PnConfig, blocks: usize, seed: u64) -> f64 {
    let dim = 2 * cfg.n;
    let model = if cfg.rho < 1.0 {
        build_covariance(cfg).unwrap().cov
    } else {
        let k = pnbound::prior::random_walk_covariance(cfg.n, cfg.sigma2_init, cfg.sigma2_zeta);
        let mut c = DMatrix::zeros(dim, dim);
        for a in 0..2 {
            for b in 0..2 {
                c.view_mut((a * cfg.n, b * cfg.n), (cfg.n, cfg.n))
                    .copy_from(&(&k * 2.0));
            }
        }
        c
    };
    let mut r = rng::stream(seed, &[rng::label_tag("sampler-oracle")]);
    let batch = 2000;
    let mut acc = DMatrix::<f64>::zeros(dim, dim);
    let mut done = 0;
    while done < blocks {
        let rows = batch.min(blocks - done);
        let mut x = DMatrix::<f64>::zeros(rows, dim);
        for i in 0..rows {
            let t = sample_trajectories_with(cfg, &mut r);
            for (j, v) in t.phi1.iter().chain(&t.phi2).enumerate() {
                x[(i, j)] = *v;
            }
        }
        acc += x.transpose() * &x;
        done += rows;
    }
    acc /= blocks as f64;
    let mut worst: f64 = 0.0;
    for i in 0..dim {
        for j in 0..dim {
            let m = model[(i, j)];
            if m.abs() > cfg.sigma2_zeta {
                worst = worst.max(((acc[(i, j)] - m) / m).abs());
            }
        }
    }
    worst
}

/// Mean and variance of the exact received amplitude
/// `|s (e^{jε1} + e^{jε2}) + w|`, with ε1 = c + ε̃, ε2 = c − ε̃, ε̃ ~ N(0, σ²_ε̃)
/// and an arbitrary common error c.
pub fn exact_amplitude_moments(
    sigma2_eps_tilde: f64,
    s: Complex64,
    sigma2_w: f64,
    samples: usize,
    seed: u64,
) -> (f64, f64) {
    let mut r = rng::stream(seed, &[rng::label_tag("amplitude-oracle")]);
    let sd = (sigma2_w / 2.0).sqrt();
    let (mut m1, mut m2) = (0.0, 0.0);
    for _ in 0..samples {
        let et = sigma2_eps_tilde.sqrt() * r.sample::<f64, _>(StandardNormal);
        let common = 0.3 * r.sample::<f64, _>(StandardNormal);
        let w = Complex64::new(
            sd * r.sample::<f64, _>(StandardNormal),
            sd * r.sample::<f64, _>(StandardNormal),
        );
        let a = (s * (Complex64::cis(common + et) + Complex64::cis(common - et)) + w).norm();
        m1 += a;
        m2 += a * a;
    }
    let n = samples as f64;
    let mean = m1 / n;
    (mean, (m2 / n - mean * mean) * n / (n - 1.0))
}

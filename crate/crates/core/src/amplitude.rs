//! Residual amplitude noise left by imperfect phase estimation.
//!
//! With phase errors ε1, ε2 the useful signal becomes
//! `s (e^{jε1} + e^{jε2}) = 2 s cos(ε̃) e^{j(ε1+ε2)/2}`, ε̃ = (ε1 − ε2)/2, so the
//! received amplitude is
//!
//! ```text
//! |y| = sqrt((2|s| cos ε̃ + Re w')² + Im² w')        exact
//!     ≈ 2|s| cos ε̃ + Re w'                           (a) high SNR
//!     ≈ 2|s| (1 − ε̃²/2) + Re w'                      (b) small phase error
//!     = 2|s| − σ²_ε̃ q |s| + Re w',   q ~ χ²₁
//! ```
//!
//! where `w'` is the noise rotated onto the signal direction, circular with
//! variance σ²_w (so `Re w'` has variance σ²_w / 2).

use rand::Rng;
use rand_distr::StandardNormal;

use crate::bcrb::{half_difference_variance, BimResult};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmplitudeModel {
    pub sigma2_eps_tilde: f64,
    pub symbol_mag: f64,
    pub sigma2_w: f64,
}

impl AmplitudeModel {
    pub fn new(sigma2_eps_tilde: f64, symbol_mag: f64, sigma2_w: f64) -> Result<Self> {
        if sigma2_eps_tilde.is_nan() || sigma2_eps_tilde < 0.0 {
            return Err(Error::invalid("sigma2_eps_tilde", "must be >= 0"));
        }
        if symbol_mag.is_nan() || symbol_mag < 0.0 {
            return Err(Error::invalid("symbol_mag", "must be >= 0"));
        }
        if sigma2_w.is_nan() || sigma2_w <= 0.0 {
            return Err(Error::invalid("sigma2_w", "must be > 0"));
        }
        Ok(Self {
            sigma2_eps_tilde,
            symbol_mag,
            sigma2_w,
        })
    }
}

/// Moments of the small-error amplitude model and a sampler for it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmplitudeStats {
    /// `2|s| − σ²_ε̃ |s|`.
    pub mean: f64,
    /// `2 σ⁴_ε̃ |s|² + σ²_w / 2`.
    pub error_variance: f64,
    pub sampler: AmplitudeSampler,
}

pub fn amplitude_stats(model: &AmplitudeModel) -> AmplitudeStats {
    let AmplitudeModel {
        sigma2_eps_tilde: v,
        symbol_mag: a,
        sigma2_w,
    } = *model;
    AmplitudeStats {
        mean: 2.0 * a - v * a,
        error_variance: 2.0 * v * v * a * a + sigma2_w / 2.0,
        sampler: AmplitudeSampler { model: *model },
    }
}

/// Draws from the approximate and exact amplitude distributions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmplitudeSampler {
    pub model: AmplitudeModel,
}

/// One realization of every quantity in the approximation chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmplitudeDraw {
    pub exact: f64,
    /// High-SNR step only.
    pub approx_a: f64,
    /// Small-error step only.
    pub approx_b: f64,
    /// Both steps.
    pub combined: f64,
    /// The phase-error amplitude loss `σ²_ε̃ q |s|` (equals `ε̃² |s|`).
    pub phase_loss: f64,
}

impl AmplitudeSampler {
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> AmplitudeDraw {
        let m = &self.model;
        let eps = m.sigma2_eps_tilde.sqrt() * rng.sample::<f64, _>(StandardNormal);
        let sd = (m.sigma2_w / 2.0).sqrt();
        let re = sd * rng.sample::<f64, _>(StandardNormal);
        let im = sd * rng.sample::<f64, _>(StandardNormal);
        let a = m.symbol_mag;
        let cos_term = 2.0 * a * eps.cos();
        let quad_term = 2.0 * a * (1.0 - 0.5 * eps * eps);
        AmplitudeDraw {
            exact: (cos_term + re).hypot(im),
            approx_a: cos_term + re,
            approx_b: (quad_term + re).hypot(im),
            combined: quad_term + re,
            phase_loss: eps * eps * a,
        }
    }

    /// Sample of the approximate model `2|s| − σ²_ε̃ q |s| + Re w'`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let m = &self.model;
        let z: f64 = rng.sample(StandardNormal);
        let re: f64 = (m.sigma2_w / 2.0).sqrt() * rng.sample::<f64, _>(StandardNormal);
        2.0 * m.symbol_mag - m.sigma2_eps_tilde * z * z * m.symbol_mag + re
    }
}

/// Relative mean error of each approximation step against the exact
/// amplitude, for a unit-magnitude symbol.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApproximationRow {
    pub snr_db: f64,
    pub sigma2_eps_tilde: f64,
    pub exact_mean: f64,
    pub rel_err_a: f64,
    pub rel_err_b: f64,
    pub rel_err_combined: f64,
}

/// Monte-Carlo table over `(SNR, σ²_ε̃)`. The same random draws drive the
/// exact and approximate amplitudes so the differences are low-noise.
pub fn validate_approximations(
    sigma2_eps_tilde: &[f64],
    snr_grid_db: &[f64],
    samples: usize,
    seed: u64,
) -> Result<Vec<ApproximationRow>> {
    if sigma2_eps_tilde.is_empty() || snr_grid_db.is_empty() || samples == 0 {
        return Err(Error::invalid(
            "grid",
            "sigma2_eps_tilde and SNR grids must be nonempty",
        ));
    }
    let mut rows = Vec::with_capacity(sigma2_eps_tilde.len() * snr_grid_db.len());
    for (i, &snr) in snr_grid_db.iter().enumerate() {
        for (j, &v) in sigma2_eps_tilde.iter().enumerate() {
            let model = AmplitudeModel::new(v, 1.0, 10f64.powf(-snr / 10.0))?;
            let sampler = amplitude_stats(&model).sampler;
            let mut r = rng::stream(seed, &[rng::label_tag("amp-validate"), i as u64, j as u64]);
            let (mut exact, mut da, mut db, mut dc) = (0.0, 0.0, 0.0, 0.0);
            for _ in 0..samples {
                let d = sampler.draw(&mut r);
                exact += d.exact;
                da += d.approx_a - d.exact;
                db += d.approx_b - d.exact;
                dc += d.combined - d.exact;
            }
            let exact_mean = exact / samples as f64;
            let rel = |x: f64| (x / samples as f64).abs() / exact_mean;
            rows.push(ApproximationRow {
                snr_db: snr,
                sigma2_eps_tilde: v,
                exact_mean,
                rel_err_a: rel(da),
                rel_err_b: rel(db),
                rel_err_combined: rel(dc),
            });
        }
    }
    Ok(rows)
}

/// Per-symbol σ²_ε̃ from the inverse BIM.
pub fn eps_tilde_from_bound(bim: &BimResult) -> Vec<f64> {
    half_difference_variance(&bim.mse_phi1, &bim.mse_phi2, &bim.cross_cov)
}

/// `(var1 + var2 − 2 cov) / 4` for a single pair.
pub fn eps_tilde_from_moments(var1: f64, var2: f64, cov: f64) -> f64 {
    half_difference_variance(&[var1], &[var2], &[cov])[0]
}

//! Per-sample log-likelihoods and their analytic derivatives with respect to
//! the two received phases `(φ1, φ2)`.
//!
//! For a known symbol `s` the observation is complex Gaussian with mean
//! `m = s (h1 e^{jφ1} + h2 e^{jφ2})` and variance σ²_w. Writing
//! `u_i = s h_i e^{jφ_i}` and `e = y − u_1 − u_2`:
//!
//! ```text
//! ℓ          = −ln(π σ²) − |e|² / σ²
//! ∂ℓ/∂φ_i    = −(2/σ²) Im(e* u_i)
//! ∂²ℓ/∂φ_i∂φ_k = −(2/σ²) [Re(u_i u_k*) + δ_ik Re(e* u_i)]
//! ```
//!
//! The unknown-symbol likelihood is the uniform mixture over the
//! constellation, evaluated with a max-shifted log-sum-exp.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::model::Constellation;

/// Observation context for one symbol interval.
#[derive(Debug, Clone, Copy)]
pub struct SampleLikelihoodContext<'a> {
    pub y: Complex64,
    pub sigma2_w: f64,
    pub symbols: SymbolKnowledge<'a>,
    pub h1: Complex64,
    pub h2: Complex64,
}

/// What the receiver knows about the transmitted symbol.
#[derive(Debug, Clone, Copy)]
pub enum SymbolKnowledge<'a> {
    Known(Complex64),
    Unknown(&'a Constellation),
}

/// Gradient and Hessian of a log-likelihood in `(φ1, φ2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Derivatives {
    pub value: f64,
    pub gradient: [f64; 2],
    pub hessian: [[f64; 2]; 2],
}

const UNIT: Complex64 = Complex64::new(1.0, 0.0);

impl<'a> SampleLikelihoodContext<'a> {
    pub fn known(y: Complex64, s: Complex64, sigma2_w: f64) -> Self {
        Self {
            y,
            sigma2_w,
            symbols: SymbolKnowledge::Known(s),
            h1: UNIT,
            h2: UNIT,
        }
    }

    pub fn unknown(y: Complex64, constellation: &'a Constellation, sigma2_w: f64) -> Self {
        Self {
            y,
            sigma2_w,
            symbols: SymbolKnowledge::Unknown(constellation),
            h1: UNIT,
            h2: UNIT,
        }
    }

    pub fn with_gains(mut self, h1: Complex64, h2: Complex64) -> Self {
        self.h1 = h1;
        self.h2 = h2;
        self
    }

    fn log_norm(&self) -> f64 {
        -(PI * self.sigma2_w).ln()
    }

    /// Data-aided log-density for symbol `s`, written in the expanded form
    /// `−(|y|² + |s|²|h1 e^{jφ1} + h2 e^{jφ2}|²)/σ² + (2/σ²) Re{y s* (h1 e^{jφ1} + h2 e^{jφ2})*}`.
    fn loglik_symbol(&self, s: Complex64, phi1: f64, phi2: f64) -> f64 {
        let g = self.h1 * Complex64::cis(phi1) + self.h2 * Complex64::cis(phi2);
        let quad = self.y.norm_sqr() + s.norm_sqr() * g.norm_sqr();
        let cross = (self.y * s.conj() * g.conj()).re;
        self.log_norm() + (2.0 * cross - quad) / self.sigma2_w
    }

    fn symbol_derivs(&self, s: Complex64, phi1: f64, phi2: f64) -> Derivatives {
        let u1 = s * self.h1 * Complex64::cis(phi1);
        let u2 = s * self.h2 * Complex64::cis(phi2);
        let e = self.y - u1 - u2;
        let c = 2.0 / self.sigma2_w;
        let g1 = -c * (e.conj() * u1).im;
        let g2 = -c * (e.conj() * u2).im;
        let h11 = -c * (u1.norm_sqr() + (e.conj() * u1).re);
        let h22 = -c * (u2.norm_sqr() + (e.conj() * u2).re);
        let h12 = -c * (u1 * u2.conj()).re;
        Derivatives {
            value: self.log_norm() - e.norm_sqr() / self.sigma2_w,
            gradient: [g1, g2],
            hessian: [[h11, h12], [h12, h22]],
        }
    }
}

/// `ln f(y | φ1, φ2, s)` for a known symbol. Falls back to the mixture when
/// the context carries only a constellation.
pub fn loglik_da(ctx: &SampleLikelihoodContext<'_>, phi1: f64, phi2: f64) -> f64 {
    match ctx.symbols {
        SymbolKnowledge::Known(s) => ctx.loglik_symbol(s, phi1, phi2),
        SymbolKnowledge::Unknown(_) => loglik_nda(ctx, phi1, phi2),
    }
}

/// `ln (1/M) Σ_s f(y | φ1, φ2, s)`.
pub fn loglik_nda(ctx: &SampleLikelihoodContext<'_>, phi1: f64, phi2: f64) -> f64 {
    match ctx.symbols {
        SymbolKnowledge::Known(s) => ctx.loglik_symbol(s, phi1, phi2),
        SymbolKnowledge::Unknown(c) => {
            let terms: Vec<f64> = c.symbols().iter().map(|&s| ctx.loglik_symbol(s, phi1, phi2)).collect();
            log_mean_exp(&terms)
        }
    }
}

fn log_mean_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = terms.iter().map(|t| (t - max).exp()).sum();
    max + (sum / terms.len() as f64).ln()
}

/// Log-likelihood with analytic gradient and Hessian.
///
/// For an unknown symbol this is the quotient rule over per-symbol terms,
/// `Σ∂²f/Σf − (Σ∂f)(Σ∂f)ᵀ/(Σf)²`, carried out with normalized weights
/// `p_s = f_s / Σf` so that nothing under- or overflows.
pub fn loglik_derivs(ctx: &SampleLikelihoodContext<'_>, phi1: f64, phi2: f64) -> Derivatives {
    let c = match ctx.symbols {
        SymbolKnowledge::Known(s) => return ctx.symbol_derivs(s, phi1, phi2),
        SymbolKnowledge::Unknown(c) => c,
    };
    let per: Vec<Derivatives> = c.symbols().iter().map(|&s| ctx.symbol_derivs(s, phi1, phi2)).collect();
    let max = per.iter().map(|d| d.value).fold(f64::NEG_INFINITY, f64::max);
    let mut wsum = 0.0;
    let mut g = [0.0; 2];
    let mut m = [0.0; 3]; // E[H + g gᵀ]: (11, 12, 22)
    for d in &per {
        let w = (d.value - max).exp();
        wsum += w;
        let [g1, g2] = d.gradient;
        g[0] += w * g1;
        g[1] += w * g2;
        m[0] += w * (d.hessian[0][0] + g1 * g1);
        m[1] += w * (d.hessian[0][1] + g1 * g2);
        m[2] += w * (d.hessian[1][1] + g2 * g2);
    }
    let g = [g[0] / wsum, g[1] / wsum];
    let h11 = m[0] / wsum - g[0] * g[0];
    let h12 = m[1] / wsum - g[0] * g[1];
    let h22 = m[2] / wsum - g[1] * g[1];
    Derivatives {
        value: max + (wsum / per.len() as f64).ln(),
        gradient: g,
        hessian: [[h11, h12], [h12, h22]],
    }
}

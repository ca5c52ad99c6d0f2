//! Bayesian information matrix `B = E_φ[F(φ)] + C⁻¹`, its inverse, and the
//! per-symbol bound quantities read off `B⁻¹`.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::fisher::{FisherBlocks, FisherTerm};
use crate::model::Mode;
use crate::prior::PriorModel;

/// Assembled BIM and the bounds it implies.
#[derive(Debug, Clone)]
pub struct BimResult {
    pub mode: Mode,
    /// 2N×2N for the paired prior, N×N for the common-phase prior.
    pub bim: DMatrix<f64>,
    pub bim_inv: DMatrix<f64>,
    /// Lower bound on the MSE of φ1_n, rad².
    pub mse_phi1: Vec<f64>,
    pub mse_phi2: Vec<f64>,
    /// `[B⁻¹]_{n, N+n}`.
    pub cross_cov: Vec<f64>,
    /// Variance of the half-difference of the two phase errors, rad².
    pub sigma2_eps_tilde: Vec<f64>,
}

impl BimResult {
    pub fn n(&self) -> usize {
        self.mse_phi1.len()
    }
}

/// Dense BIM for the given Fisher term and prior.
pub fn bim_matrix(fisher: &FisherBlocks, prior: &PriorModel) -> Result<DMatrix<f64>> {
    let n = prior.n;
    if let Some(len) = fisher.block_len() {
        if len != n {
            return Err(Error::LengthMismatch { expected: n, got: len });
        }
    }
    let mut b = prior.precision.clone();
    if prior.is_common() {
        for i in 0..n {
            b[(i, i)] += fisher.common_phase_information(i);
        }
    } else {
        for i in 0..n {
            let (f11, f12, f22) = fisher.block(i);
            b[(i, i)] += f11;
            b[(n + i, n + i)] += f22;
            b[(i, n + i)] += f12;
            b[(n + i, i)] += f12;
        }
    }
    Ok(b)
}

/// Invert a symmetric positive-definite matrix by Cholesky.
pub fn spd_inverse(b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    match b.clone().cholesky() {
        Some(chol) => {
            let inv = chol.inverse();
            Ok((&inv + inv.transpose()) * 0.5)
        }
        None => {
            let min_eigenvalue = SymmetricEigen::new(b.clone())
                .eigenvalues
                .iter()
                .copied()
                .fold(f64::INFINITY, f64::min);
            Err(Error::NotPositiveDefinite { min_eigenvalue })
        }
    }
}

/// Assemble `B`, invert it and extract per-symbol bounds.
///
/// Under the common-phase prior both paths share one phase, the Fisher term
/// is projected onto that direction, and the half-difference variance is
/// exactly zero.
pub fn assemble_bim(fisher: &FisherBlocks, prior: &PriorModel) -> Result<BimResult> {
    let n = prior.n;
    let bim = bim_matrix(fisher, prior)?;
    let bim_inv = spd_inverse(&bim)?;
    let (mse_phi1, mse_phi2, cross_cov, sigma2_eps_tilde) = if prior.is_common() {
        let d: Vec<f64> = (0..n).map(|i| bim_inv[(i, i)]).collect();
        (d.clone(), d.clone(), d, vec![0.0; n])
    } else {
        let m1: Vec<f64> = (0..n).map(|i| bim_inv[(i, i)]).collect();
        let m2: Vec<f64> = (0..n).map(|i| bim_inv[(n + i, n + i)]).collect();
        let cc: Vec<f64> = (0..n).map(|i| bim_inv[(i, n + i)]).collect();
        let eps = half_difference_variance(&m1, &m2, &cc);
        (m1, m2, cc, eps)
    };
    Ok(BimResult {
        mode: fisher.mode,
        bim,
        bim_inv,
        mse_phi1,
        mse_phi2,
        cross_cov,
        sigma2_eps_tilde,
    })
}

/// `(var1 + var2 − 2 cov) / 4`, clamped at zero against rounding.
pub(crate) fn half_difference_variance(var1: &[f64], var2: &[f64], cov: &[f64]) -> Vec<f64> {
    var1.iter()
        .zip(var2)
        .zip(cov)
        .map(|((a, b), c)| ((a + b - 2.0 * c) / 4.0).max(0.0))
        .collect()
}

/// First-order propagation of Monte-Carlo error in the Fisher term to the
/// per-symbol bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundErrors {
    pub mse_phi1: Vec<f64>,
    pub sigma2_eps_tilde: Vec<f64>,
}

/// Finite-difference sensitivity of the bound to γ11 and γ12, scaled by
/// their standard errors and combined in quadrature. Zero for closed-form
/// Fisher terms.
pub fn propagate_stderr(fisher: &FisherBlocks, prior: &PriorModel, base: &BimResult) -> Result<BoundErrors> {
    let n = prior.n;
    let (g11, g12) = match (&fisher.term, &fisher.mc) {
        (FisherTerm::Uniform { g11, g12, .. }, Some(_)) => (*g11, *g12),
        _ => {
            return Ok(BoundErrors {
                mse_phi1: vec![0.0; n],
                sigma2_eps_tilde: vec![0.0; n],
            })
        }
    };
    let (se11, se12, _) = fisher.stderr();
    let step11 = se11.max(1e-9 * g11.abs()).max(1e-12);
    let step12 = se12.max(1e-9 * g11.abs()).max(1e-12);
    let p11 = assemble_bim(&fisher.with_uniform(g11 + step11, g12), prior)?;
    let p12 = assemble_bim(&fisher.with_uniform(g11, g12 + step12), prior)?;
    let combine = |d11: f64, d12: f64| ((d11 / step11 * se11).powi(2) + (d12 / step12 * se12).powi(2)).sqrt();
    Ok(BoundErrors {
        mse_phi1: (0..n)
            .map(|i| combine(p11.mse_phi1[i] - base.mse_phi1[i], p12.mse_phi1[i] - base.mse_phi1[i]))
            .collect(),
        sigma2_eps_tilde: (0..n)
            .map(|i| {
                combine(
                    p11.sigma2_eps_tilde[i] - base.sigma2_eps_tilde[i],
                    p12.sigma2_eps_tilde[i] - base.sigma2_eps_tilde[i],
                )
            })
            .collect(),
    })
}

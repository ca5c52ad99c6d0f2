//! Expected Fisher information term `E_φ[F(φ)]` of the Bayesian information
//! matrix.
//!
//! The data-aided and modified terms are closed form. The non-data-aided
//! term has no closed form and is estimated by Monte Carlo: the likelihood
//! is invariant to a common rotation of both phases, so the expectation over
//! φ reduces to an average over the phase difference Δ = φ1 − φ2, which the
//! high-variance prior makes uniform on [0, 2π).

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::likelihood::{loglik_derivs, SampleLikelihoodContext};
use crate::model::{Constellation, Mode};
use crate::rng;

/// Per-symbol 2×2 Fisher blocks for the phase pair, in the layout the BIM
/// assembly consumes.
#[derive(Debug, Clone, PartialEq)]
pub enum FisherTerm {
    /// `blockdiag(Γ, Γ)` with `Γ = diag(gamma)`.
    PerSymbol(Vec<f64>),
    /// `[[γ11 I, γ12 I], [γ12 I, γ22 I]]`.
    Uniform { g11: f64, g12: f64, g22: f64 },
}

/// Monte-Carlo provenance of an estimated Fisher term.
#[derive(Debug, Clone, PartialEq)]
pub struct McMeta {
    pub samples_per_point: usize,
    pub delta_grid: usize,
    pub seed: u64,
    pub stderr11: f64,
    pub stderr12: f64,
    pub stderr22: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FisherBlocks {
    pub mode: Mode,
    pub term: FisherTerm,
    pub mc: Option<McMeta>,
}

impl FisherBlocks {
    /// Fisher block `(f11, f12, f22)` at symbol index `n`.
    pub fn block(&self, n: usize) -> (f64, f64, f64) {
        match &self.term {
            FisherTerm::PerSymbol(g) => (g[n], 0.0, g[n]),
            FisherTerm::Uniform { g11, g12, g22 } => (*g11, *g12, *g22),
        }
    }

    /// Block length the term is tied to, if any.
    pub fn block_len(&self) -> Option<usize> {
        match &self.term {
            FisherTerm::PerSymbol(g) => Some(g.len()),
            FisherTerm::Uniform { .. } => None,
        }
    }

    pub fn stderr(&self) -> (f64, f64, f64) {
        self.mc
            .as_ref()
            .map_or((0.0, 0.0, 0.0), |m| (m.stderr11, m.stderr12, m.stderr22))
    }

    /// Information about the common phase when both paths coincide:
    /// `(1,1) F_n (1,1)ᵀ`.
    pub fn common_phase_information(&self, n: usize) -> f64 {
        let (a, b, c) = self.block(n);
        a + 2.0 * b + c
    }

    /// Copy with the uniform scalars replaced (used for perturbation-based
    /// error propagation).
    pub fn with_uniform(&self, g11: f64, g12: f64) -> Self {
        Self {
            mode: self.mode,
            term: FisherTerm::Uniform { g11, g12, g22: g11 },
            mc: self.mc.clone(),
        }
    }
}

fn check_noise(sigma2_w: f64) -> Result<()> {
    if sigma2_w > 0.0 && sigma2_w.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(
            "sigma2_w",
            format!("must be finite and > 0, got {sigma2_w}"),
        ))
    }
}

/// Data-aided term: `[Γ]_{n,n} = 2|s_n|²/σ²_w` on both diagonal blocks.
pub fn fisher_da(symbols: &[Complex64], sigma2_w: f64) -> Result<FisherBlocks> {
    check_noise(sigma2_w)?;
    Ok(FisherBlocks {
        mode: Mode::Da,
        term: FisherTerm::PerSymbol(symbols.iter().map(|s| 2.0 * s.norm_sqr() / sigma2_w).collect()),
        mc: None,
    })
}

/// Modified term: `2E_s/σ²_w` on both diagonal blocks.
pub fn fisher_mbcrb(c: &Constellation, sigma2_w: f64) -> Result<FisherBlocks> {
    check_noise(sigma2_w)?;
    let g = 2.0 * c.energy() / sigma2_w;
    Ok(FisherBlocks {
        mode: Mode::Mbcrb,
        term: FisherTerm::Uniform {
            g11: g,
            g12: 0.0,
            g22: g,
        },
        mc: None,
    })
}

/// Monte-Carlo budget for the non-data-aided term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NdaBudget {
    /// Observations drawn per Δ grid point.
    pub samples: usize,
    /// Number of uniformly spaced Δ values on [0, 2π).
    pub delta_grid: usize,
}

impl Default for NdaBudget {
    fn default() -> Self {
        Self {
            samples: 200_000,
            delta_grid: 64,
        }
    }
}

const CHUNK: usize = 4096;

#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    count: usize,
    diag: f64,
    diag_sq: f64,
    cross: f64,
    cross_sq: f64,
    d11: f64,
    d11_sq: f64,
}

impl Moments {
    fn push(&mut self, h11: f64, h12: f64, h22: f64) {
        let diag = 0.5 * (h11 + h22);
        self.count += 1;
        self.diag += diag;
        self.diag_sq += diag * diag;
        self.cross += h12;
        self.cross_sq += h12 * h12;
        self.d11 += h11;
        self.d11_sq += h11 * h11;
    }
}

/// Neumaier-compensated sum, order-stable for a fixed input order.
fn compensated_sum(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Non-data-aided term `γ_ij = E[−∂² ln f(y|φ1,φ2)/∂φ_i∂φ_j]`.
///
/// For each Δ on the grid, symbols are drawn uniformly and
/// `y ~ CN(s(e^{jΔ/2} + e^{−jΔ/2}), σ²_w)`; the analytic mixture Hessian is
/// averaged, then the grid points are averaged. The diagonal estimate pools
/// `−H11` and `−H22` so that `γ11 = γ22` holds exactly. Work is split into
/// fixed chunks with seeds derived from `(seed, grid index, chunk index)`
/// and merged in a fixed order, so the result is independent of threading.
pub fn fisher_nda(c: &Constellation, sigma2_w: f64, budget: NdaBudget, seed: u64) -> Result<FisherBlocks> {
    check_noise(sigma2_w)?;
    if budget.samples < 2 || budget.delta_grid == 0 {
        return Err(Error::invalid(
            "nda budget",
            "need >= 2 samples and >= 1 delta grid point",
        ));
    }
    let chunks_per_point = budget.samples.div_ceil(CHUNK);
    let jobs: Vec<(usize, usize)> = (0..budget.delta_grid)
        .flat_map(|g| (0..chunks_per_point).map(move |k| (g, k)))
        .collect();
    let sd = (sigma2_w / 2.0).sqrt();

    let partials: Vec<Result<Moments>> = jobs
        .par_iter()
        .map(|&(g, k)| {
            let delta = 2.0 * PI * g as f64 / budget.delta_grid as f64;
            let (phi1, phi2) = (0.5 * delta, -0.5 * delta);
            let gain = Complex64::cis(phi1) + Complex64::cis(phi2);
            let mut rng = rng::stream(seed, &[rng::label_tag("nda"), g as u64, k as u64]);
            let count = CHUNK.min(budget.samples - k * CHUNK);
            let mut m = Moments::default();
            let m_order = c.order();
            for _ in 0..count {
                let s = c.symbols()[rng.random_range(0..m_order)];
                let w = Complex64::new(
                    sd * rng.sample::<f64, _>(StandardNormal),
                    sd * rng.sample::<f64, _>(StandardNormal),
                );
                let ctx = SampleLikelihoodContext::unknown(s * gain + w, c, sigma2_w);
                let h = loglik_derivs(&ctx, phi1, phi2).hessian;
                if !h.iter().flatten().all(|v| v.is_finite()) {
                    return Err(Error::NonFiniteHessian { grid_index: g, delta });
                }
                m.push(-h[0][0], -h[0][1], -h[1][1]);
            }
            Ok(m)
        })
        .collect();
    let partials = partials.into_iter().collect::<Result<Vec<_>>>()?;

    // Per grid point means and variances, then average over the grid.
    let grid = budget.delta_grid as f64;
    let mut means = [Vec::new(), Vec::new()];
    let mut var_of_mean = [0.0f64; 3];
    for point in partials.chunks(chunks_per_point) {
        let n = point.iter().map(|m| m.count).sum::<usize>() as f64;
        let stat = |f: fn(&Moments) -> f64| compensated_sum(point.iter().map(f)) / n;
        let diag = stat(|m| m.diag);
        let cross = stat(|m| m.cross);
        let d11 = stat(|m| m.d11);
        let var = |mean: f64, sq: f64| ((sq - mean * mean) * n / (n - 1.0)).max(0.0) / n;
        var_of_mean[0] += var(diag, stat(|m| m.diag_sq));
        var_of_mean[1] += var(cross, stat(|m| m.cross_sq));
        var_of_mean[2] += var(d11, stat(|m| m.d11_sq));
        means[0].push(diag);
        means[1].push(cross);
    }
    let g11 = compensated_sum(means[0].iter().copied()) / grid;
    let g12 = compensated_sum(means[1].iter().copied()) / grid;
    let stderr11 = var_of_mean[0].sqrt() / grid;
    let stderr12 = var_of_mean[1].sqrt() / grid;
    Ok(FisherBlocks {
        mode: Mode::Nda,
        term: FisherTerm::Uniform { g11, g12, g22: g11 },
        mc: Some(McMeta {
            samples_per_point: budget.samples,
            delta_grid: budget.delta_grid,
            seed,
            stderr11,
            stderr12,
            stderr22: stderr11,
        }),
    })
}

/// Deterministic cross-check of [`fisher_nda`] by trapezoidal quadrature
/// over `y` on a `points × points` grid spanning mean ± 6σ for each symbol.
/// Practical only at small σ²_w where the grid resolves the mixture.
pub fn fisher_nda_quadrature(c: &Constellation, sigma2_w: f64, delta_grid: usize, points: usize) -> Result<(f64, f64)> {
    check_noise(sigma2_w)?;
    let sd = (sigma2_w / 2.0).sqrt();
    let radius = 6.0 * sd;
    let h = 2.0 * radius / (points - 1) as f64;
    let weight = |i: usize| if i == 0 || i == points - 1 { 0.5 } else { 1.0 };
    let per_delta: Vec<(f64, f64)> = (0..delta_grid)
        .into_par_iter()
        .map(|g| {
            let delta = 2.0 * PI * g as f64 / delta_grid as f64;
            let (phi1, phi2) = (0.5 * delta, -0.5 * delta);
            let gain = Complex64::cis(phi1) + Complex64::cis(phi2);
            let (mut a, mut b) = (0.0, 0.0);
            for &s in c.symbols() {
                let mean = s * gain;
                for i in 0..points {
                    for j in 0..points {
                        let off = Complex64::new(-radius + i as f64 * h, -radius + j as f64 * h);
                        let dens = (-off.norm_sqr() / sigma2_w).exp() / (PI * sigma2_w);
                        let w = weight(i) * weight(j) * dens * h * h;
                        let ctx = SampleLikelihoodContext::unknown(mean + off, c, sigma2_w);
                        let hs = loglik_derivs(&ctx, phi1, phi2).hessian;
                        a += w * -0.5 * (hs[0][0] + hs[1][1]);
                        b += w * -hs[0][1];
                    }
                }
            }
            (a / c.order() as f64, b / c.order() as f64)
        })
        .collect();
    let n = delta_grid as f64;
    Ok((
        per_delta.iter().map(|p| p.0).sum::<f64>() / n,
        per_delta.iter().map(|p| p.1).sum::<f64>() / n,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::make_constellation;

    fn small() -> NdaBudget {
        NdaBudget {
            samples: 20_000,
            delta_grid: 16,
        }
    }

    #[test]
    fn da_entries() {
        let f = fisher_da(&[Complex64::new(1.0, 1.0)], 0.5).unwrap();
        assert_eq!(f.block(0), (8.0, 0.0, 8.0));
        let q = make_constellation("QPSK").unwrap();
        let f = fisher_da(q.symbols(), 1.0).unwrap();
        for n in 0..4 {
            assert!((f.block(n).0 - 2.0).abs() < 1e-12);
        }
        assert!(fisher_da(q.symbols(), 0.0).is_err());
    }

    #[test]
    fn mbcrb_entries() {
        let q = make_constellation("QPSK").unwrap();
        assert!((fisher_mbcrb(&q, 0.1).unwrap().block(0).0 - 20.0).abs() < 1e-12);
        let one = make_constellation("custom:1.5-0.5j").unwrap();
        let s = one.symbols()[0];
        assert!((fisher_mbcrb(&one, 0.3).unwrap().block(0).0 - fisher_da(&[s], 0.3).unwrap().block(0).0).abs() < 1e-12);
        let q16 = make_constellation("16QAM").unwrap();
        let (a, b) = (
            fisher_mbcrb(&q, 0.2).unwrap().block(0),
            fisher_mbcrb(&q16, 0.2).unwrap().block(0),
        );
        assert!((a.0 - b.0).abs() < 1e-12 * a.0 && a.1 == 0.0 && b.1 == 0.0);
    }

    #[test]
    fn nda_is_deterministic_and_symmetric() {
        let q = make_constellation("QPSK").unwrap();
        let a = fisher_nda(&q, 0.3, small(), 5).unwrap();
        let b = fisher_nda(&q, 0.3, small(), 5).unwrap();
        assert_eq!(a, b);
        let (g11, g12, g22) = a.block(0);
        assert_eq!(g11, g22);
        assert!(g12.is_finite());
        assert!(a.stderr().0 > 0.0);
        let c = fisher_nda(&q, 0.3, small(), 6).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn nda_single_point_reduces_to_da() {
        let one = make_constellation("custom:1+0j").unwrap();
        let sigma2 = 0.5;
        let f = fisher_nda(&one, sigma2, small(), 1).unwrap();
        let (g11, g12, _) = f.block(0);
        let (se11, se12, _) = f.stderr();
        assert!((g11 - 2.0 / sigma2).abs() < 3.0 * se11, "{g11} ± {se11}");
        assert!(g12.abs() < 3.0 * se12 + 1e-9, "{g12} ± {se12}");
    }

    #[test]
    fn thread_count_does_not_change_result() {
        let q = make_constellation("16QAM").unwrap();
        let a = fisher_nda(&q, 0.2, small(), 9).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| fisher_nda(&q, 0.2, small(), 9).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn quadrature_agrees_with_monte_carlo() {
        let q = make_constellation("QPSK").unwrap();
        let sigma2 = 0.05;
        let mc = fisher_nda(
            &q,
            sigma2,
            NdaBudget {
                samples: 40_000,
                delta_grid: 16,
            },
            3,
        )
        .unwrap();
        let (qa, qb) = fisher_nda_quadrature(&q, sigma2, 16, 121).unwrap();
        let (g11, g12, _) = mc.block(0);
        let (se11, se12, _) = mc.stderr();
        assert!((g11 - qa).abs() < 4.0 * se11, "{g11} vs {qa} (se {se11})");
        assert!((g12 - qb).abs() < 4.0 * se12, "{g12} vs {qb} (se {se12})");
    }
}

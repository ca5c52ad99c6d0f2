//! Correlated Wiener phase noise: trajectory sampler and the Gaussian prior
//! over the stacked phase vector `[φ1_1..φ1_N, φ2_1..φ2_N]`.
//!
//! The prior covariance factors as `A ⊗ K` with
//! `A = [[2, 1+ρ], [1+ρ, 2]]` and `K_{l,k} = σ²₀ + σ²_ζ·min(l−1, k−1)`.
//! `K` is the covariance of a random walk, so `K⁻¹` is tridiagonal and the
//! precision `A⁻¹ ⊗ K⁻¹` is available in closed form.

use nalgebra::{DMatrix, Matrix2};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::PnConfig;
use crate::rng;

/// Largest ρ accepted by the paired (invertible) prior is `1 − RHO_EPS`.
pub const RHO_EPS: f64 = 1e-6;

/// Unwrapped phase paths seen by the receiver through each transmitter.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseTrajectories {
    pub phi1: Vec<f64>,
    pub phi2: Vec<f64>,
}

impl PhaseTrajectories {
    pub fn len(&self) -> usize {
        self.phi1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phi1.is_empty()
    }

    /// Stacked vector `[phi1; phi2]`.
    pub fn stacked(&self) -> Vec<f64> {
        self.phi1.iter().chain(&self.phi2).copied().collect()
    }
}

/// Symmetric tridiagonal matrix stored as main and first off diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl Tridiagonal {
    pub fn n(&self) -> usize {
        self.diag.len()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            diag: self.diag.iter().map(|d| d * c).collect(),
            off: self.off.iter().map(|o| o * c).collect(),
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.n();
        DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                self.diag[i]
            } else if i + 1 == j {
                self.off[i]
            } else if j + 1 == i {
                self.off[j]
            } else {
                0.0
            }
        })
    }

    fn row_sum(&self, i: usize) -> f64 {
        let mut r = self.diag[i];
        if i > 0 {
            r += self.off[i - 1];
        }
        if i + 1 < self.n() {
            r += self.off[i];
        }
        r
    }

    /// `self · x`, written in terms of neighbour differences so that large
    /// common offsets in `x` cancel exactly for random-walk precisions
    /// (whose interior row sums are zero).
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n();
        (0..n)
            .map(|i| {
                let mut acc = self.row_sum(i) * x[i];
                if i > 0 {
                    acc += self.off[i - 1] * (x[i - 1] - x[i]);
                }
                if i + 1 < n {
                    acc += self.off[i] * (x[i + 1] - x[i]);
                }
                acc
            })
            .collect()
    }

    /// `xᵀ · self · y` in the same difference form.
    pub fn quadratic_form(&self, x: &[f64], y: &[f64]) -> f64 {
        let n = self.n();
        let diag: f64 = (0..n).map(|i| self.row_sum(i) * x[i] * y[i]).sum();
        let diffs: f64 = (0..n.saturating_sub(1))
            .map(|i| self.off[i] * (x[i + 1] - x[i]) * (y[i + 1] - y[i]))
            .sum();
        diag - diffs
    }
}

/// Random-walk covariance `K_{l,k} = σ²₀ + σ²_ζ·min(l, k)` (0-based indices).
pub fn random_walk_covariance(n: usize, sigma2_init: f64, sigma2_zeta: f64) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |l, k| sigma2_init + sigma2_zeta * l.min(k) as f64)
}

/// Closed-form inverse of [`random_walk_covariance`].
///
/// First diagonal `1/σ²₀ + 1/σ²_ζ`, interior `2/σ²_ζ`, last `1/σ²_ζ`,
/// off-diagonal `−1/σ²_ζ`. Requires `σ²_ζ > 0` when `n > 1`.
pub fn random_walk_precision(n: usize, sigma2_init: f64, sigma2_zeta: f64) -> Result<Tridiagonal> {
    if n == 1 {
        return Ok(Tridiagonal {
            diag: vec![1.0 / sigma2_init],
            off: Vec::new(),
        });
    }
    if sigma2_zeta <= 0.0 {
        return Err(Error::invalid(
            "sigma2_zeta",
            "must be > 0 for a block longer than one symbol (prior precision is unbounded)",
        ));
    }
    let q = 1.0 / sigma2_zeta;
    let mut diag = vec![2.0 * q; n];
    diag[0] = 1.0 / sigma2_init + q;
    diag[n - 1] = q;
    Ok(Tridiagonal {
        diag,
        off: vec![-q; n - 1],
    })
}

/// Correlation structure of the prior.
#[derive(Debug, Clone, PartialEq)]
pub enum PriorLayout {
    /// Two distinct phases per symbol; precision is `pair_precision ⊗ K⁻¹`.
    Paired { pair_precision: Matrix2<f64> },
    /// ρ = 1: one common phase per symbol with covariance `2K`.
    Common,
}

/// Gaussian prior over the phase vector.
#[derive(Debug, Clone)]
pub struct PriorModel {
    /// Dense covariance (2N×2N paired, N×N common).
    pub cov: DMatrix<f64>,
    /// Dense precision, the exact structured inverse of `cov`.
    pub precision: DMatrix<f64>,
    pub rho: f64,
    pub sigma2_zeta: f64,
    pub sigma2_init: f64,
    pub n: usize,
    pub layout: PriorLayout,
    /// Tridiagonal time factor of the precision: `K⁻¹` (paired) or
    /// `(2K)⁻¹` (common).
    pub time_precision: Tridiagonal,
}

impl PriorModel {
    /// Number of unknown phases (2N paired, N common).
    pub fn dim(&self) -> usize {
        match self.layout {
            PriorLayout::Paired { .. } => 2 * self.n,
            PriorLayout::Common => self.n,
        }
    }

    pub fn is_common(&self) -> bool {
        matches!(self.layout, PriorLayout::Common)
    }

    /// Log prior density up to its constant: `−½ φᵀ C⁻¹ φ`.
    pub fn log_density_unnormalized(&self, phi: &[f64]) -> f64 {
        let n = self.n;
        let k = &self.time_precision;
        let quad = match &self.layout {
            PriorLayout::Common => k.quadratic_form(phi, phi),
            PriorLayout::Paired { pair_precision: a } => {
                let (x, y) = phi.split_at(n);
                a[(0, 0)] * k.quadratic_form(x, x)
                    + 2.0 * a[(0, 1)] * k.quadratic_form(x, y)
                    + a[(1, 1)] * k.quadratic_form(y, y)
            }
        };
        -0.5 * quad
    }

    /// `C⁻¹ φ` using the Kronecker structure.
    pub fn precision_mul(&self, phi: &[f64]) -> Vec<f64> {
        let n = self.n;
        match &self.layout {
            PriorLayout::Common => self.time_precision.mul_vec(phi),
            PriorLayout::Paired { pair_precision: a } => {
                let k1 = self.time_precision.mul_vec(&phi[..n]);
                let k2 = self.time_precision.mul_vec(&phi[n..]);
                let mut out = Vec::with_capacity(2 * n);
                out.extend(k1.iter().zip(&k2).map(|(x, y)| a[(0, 0)] * x + a[(0, 1)] * y));
                out.extend(k1.iter().zip(&k2).map(|(x, y)| a[(1, 0)] * x + a[(1, 1)] * y));
                out
            }
        }
    }
}

/// `A = [[2, 1+ρ], [1+ρ, 2]]`.
pub fn pair_covariance(rho: f64) -> Matrix2<f64> {
    Matrix2::new(2.0, 1.0 + rho, 1.0 + rho, 2.0)
}

/// Closed-form `A⁻¹`; `det A = (1−ρ)(3+ρ)`.
pub fn pair_precision(rho: f64) -> Matrix2<f64> {
    let det = (1.0 - rho) * (3.0 + rho);
    Matrix2::new(2.0, -(1.0 + rho), -(1.0 + rho), 2.0) / det
}

fn kron2(a: &Matrix2<f64>, k: &DMatrix<f64>) -> DMatrix<f64> {
    let n = k.nrows();
    DMatrix::from_fn(2 * n, 2 * n, |i, j| a[(i / n, j / n)] * k[(i % n, j % n)])
}

/// Prior covariance `C = A ⊗ K` and its structured inverse for ρ < 1.
pub fn build_covariance(cfg: &PnConfig) -> Result<PriorModel> {
    cfg.validate()?;
    if cfg.rho > 1.0 - RHO_EPS {
        return Err(Error::DegenerateRho {
            rho: cfg.rho,
            eps: RHO_EPS,
        });
    }
    let k = random_walk_covariance(cfg.n, cfg.sigma2_init, cfg.sigma2_zeta);
    let k_inv = random_walk_precision(cfg.n, cfg.sigma2_init, cfg.sigma2_zeta)?;
    let a_inv = pair_precision(cfg.rho);
    Ok(PriorModel {
        cov: kron2(&pair_covariance(cfg.rho), &k),
        precision: kron2(&a_inv, &k_inv.to_dense()),
        rho: cfg.rho,
        sigma2_zeta: cfg.sigma2_zeta,
        sigma2_init: cfg.sigma2_init,
        n: cfg.n,
        layout: PriorLayout::Paired { pair_precision: a_inv },
        time_precision: k_inv,
    })
}

/// Exact prior at ρ = 1: one common phase, per-step variance `2σ²_ζ`,
/// initial variance `2σ²₀`.
pub fn reduced_model_rho1(cfg: &PnConfig) -> Result<PriorModel> {
    cfg.validate()?;
    if cfg.rho != 1.0 {
        return Err(Error::NotFullySynchronized(cfg.rho));
    }
    let cov = random_walk_covariance(cfg.n, 2.0 * cfg.sigma2_init, 2.0 * cfg.sigma2_zeta);
    let time_precision = random_walk_precision(cfg.n, 2.0 * cfg.sigma2_init, 2.0 * cfg.sigma2_zeta)?;
    Ok(PriorModel {
        cov,
        precision: time_precision.to_dense(),
        rho: cfg.rho,
        sigma2_zeta: cfg.sigma2_zeta,
        sigma2_init: cfg.sigma2_init,
        n: cfg.n,
        layout: PriorLayout::Common,
        time_precision,
    })
}

/// Paired prior for ρ < 1, reduced model for ρ = 1.
pub fn prior_for(cfg: &PnConfig) -> Result<PriorModel> {
    if cfg.rho == 1.0 {
        reduced_model_rho1(cfg)
    } else {
        build_covariance(cfg)
    }
}

/// Draw one block of correlated phase-noise trajectories.
pub fn sample_trajectories(cfg: &PnConfig, seed: u64) -> PhaseTrajectories {
    let mut rng = rng::stream(seed, &[rng::label_tag("wiener")]);
    sample_trajectories_with(cfg, &mut rng)
}

/// Sampler body. Transmit pairs are built as `(z1, ρ z1 + √(1−ρ²) z2)`,
/// which gives each marginal the full variance and covariance `ρ·var`;
/// this holds for both the initial phases and the innovations. The
/// receiver oscillator is common to both paths.
pub fn sample_trajectories_with<R: Rng + ?Sized>(cfg: &PnConfig, rng: &mut R) -> PhaseTrajectories {
    let rho = cfg.rho;
    let mix = (1.0 - rho * rho).max(0.0).sqrt();
    let sd0 = cfg.sigma2_init.sqrt();
    let sdz = cfg.sigma2_zeta.sqrt();
    let mut normal = || rng.sample::<f64, _>(StandardNormal);

    let correlated_pair = |sd: f64, z1: f64, z2: f64| (sd * z1, sd * (rho * z1 + mix * z2));

    let (mut t1, mut t2) = correlated_pair(sd0, normal(), normal());
    let mut r = sd0 * normal();
    let mut phi1 = Vec::with_capacity(cfg.n);
    let mut phi2 = Vec::with_capacity(cfg.n);
    for i in 0..cfg.n {
        if i > 0 {
            let (d1, d2) = correlated_pair(sdz, normal(), normal());
            t1 += d1;
            t2 += d2;
            r += sdz * normal();
        }
        phi1.push(t1 + r);
        phi2.push(t2 + r);
    }
    PhaseTrajectories { phi1, phi2 }
}

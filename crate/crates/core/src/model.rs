//! Shared domain types: constellations, phase-noise and channel
//! configuration, received blocks.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prior::{sample_trajectories, PhaseTrajectories};
use crate::rng;

/// Which Bayesian information matrix is being built.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Mode {
    /// Data-aided: symbols known.
    Da,
    /// Modified bound: expectation over symbols taken inside the Fisher term.
    Mbcrb,
    /// Non-data-aided: symbols unknown, uniform over the constellation.
    Nda,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Da => "DA",
            Mode::Mbcrb => "MBCRB",
            Mode::Nda => "NDA",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "DA" => Ok(Mode::Da),
            "MBCRB" => Ok(Mode::Mbcrb),
            "NDA" => Ok(Mode::Nda),
            other => Err(Error::Config(format!("unknown mode `{other}`"))),
        }
    }
}

/// A finite symbol alphabet with a uniform prior over its points.
#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    name: String,
    symbols: Vec<Complex64>,
    energy: f64,
}

impl Constellation {
    /// Build a constellation from explicit points. Points are kept as given
    /// (no normalization).
    pub fn new(name: impl Into<String>, symbols: Vec<Complex64>) -> Result<Self> {
        if symbols.is_empty() {
            return Err(Error::InvalidConstellation("no symbols".into()));
        }
        if symbols.iter().any(|s| !s.re.is_finite() || !s.im.is_finite()) {
            return Err(Error::InvalidConstellation("non-finite symbol".into()));
        }
        let energy = symbols.iter().map(|s| s.norm_sqr()).sum::<f64>() / symbols.len() as f64;
        if !(energy > 0.0 && energy.is_finite()) {
            return Err(Error::InvalidConstellation(format!(
                "average energy must be finite and positive, got {energy}"
            )));
        }
        Ok(Self {
            name: name.into(),
            symbols,
            energy,
        })
    }

    pub fn bpsk() -> Self {
        Self::new("BPSK", vec![Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.0)]).expect("static constellation")
    }

    pub fn qpsk() -> Self {
        let a = FRAC_1_SQRT_2;
        let symbols = [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)]
            .iter()
            .map(|&(re, im)| Complex64::new(re * a, im * a))
            .collect();
        Self::new("QPSK", symbols).expect("static constellation")
    }

    pub fn qam16() -> Self {
        let scale = 1.0 / 10f64.sqrt();
        let levels = [-3.0, -1.0, 1.0, 3.0];
        let symbols = levels
            .iter()
            .flat_map(|&re| levels.iter().map(move |&im| Complex64::new(re * scale, im * scale)))
            .collect();
        Self::new("16QAM", symbols).expect("static constellation")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn symbols(&self) -> &[Complex64] {
        &self.symbols
    }

    /// Constellation order M.
    pub fn order(&self) -> usize {
        self.symbols.len()
    }

    /// Average symbol energy E_s.
    pub fn energy(&self) -> f64 {
        self.energy
    }

    /// Largest k such that rotating every point by 2π/k maps the set onto
    /// itself. 1 for sets without rotational symmetry.
    pub fn rotational_symmetry_order(&self) -> usize {
        let tol = 1e-9 * self.energy.sqrt();
        let contains = |p: Complex64| self.symbols.iter().any(|s| (s - p).norm() < tol);
        (1..=self.symbols.len().max(1))
            .rev()
            .find(|&k| {
                let rot = Complex64::from_polar(1.0, 2.0 * PI / k as f64);
                self.symbols.iter().all(|&s| contains(s * rot))
            })
            .unwrap_or(1)
    }
}

/// Look up a constellation by label.
///
/// Accepts `QPSK`, `16QAM`, `BPSK` (unit average energy) or
/// `custom:<z1>,<z2>,...` with points written like `1+0j` or `-0.5-2i`,
/// which pass through unnormalized.
pub fn make_constellation(name: &str) -> Result<Constellation> {
    let trimmed = name.trim();
    match trimmed.to_ascii_uppercase().as_str() {
        "QPSK" | "4QAM" => return Ok(Constellation::qpsk()),
        "16QAM" | "QAM16" => return Ok(Constellation::qam16()),
        "BPSK" => return Ok(Constellation::bpsk()),
        _ => {}
    }
    let list = trimmed
        .strip_prefix("custom:")
        .ok_or_else(|| Error::UnknownConstellation(trimmed.to_string()))?;
    let symbols = list
        .split(',')
        .map(|tok| parse_complex(tok.trim()))
        .collect::<Result<Vec<_>>>()?;
    Constellation::new("custom", symbols)
}

fn parse_complex(tok: &str) -> Result<Complex64> {
    tok.replace('j', "i")
        .parse::<Complex64>()
        .map_err(|_| Error::InvalidConstellation(format!("cannot parse symbol `{tok}`")))
}

/// `n` i.i.d. uniform draws from the constellation.
pub fn draw_symbols(c: &Constellation, n: usize, seed: u64) -> Vec<Complex64> {
    let mut rng = rng::stream(seed, &[rng::label_tag("symbols")]);
    draw_symbols_with(c, n, &mut rng)
}

pub(crate) fn draw_symbols_with<R: Rng + ?Sized>(c: &Constellation, n: usize, rng: &mut R) -> Vec<Complex64> {
    let m = c.order();
    (0..n).map(|_| c.symbols[rng.random_range(0..m)]).collect()
}

/// Phase-noise process parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PnConfig {
    /// Innovation variance of one oscillator per symbol, rad².
    pub sigma2_zeta: f64,
    /// Synchronization factor between the two transmit oscillators.
    pub rho: f64,
    /// Initial-phase variance of each oscillator, rad².
    pub sigma2_init: f64,
    /// Block length in symbols.
    pub n: usize,
}

impl PnConfig {
    pub const DEFAULT_SIGMA2_INIT: f64 = 1e4;

    pub fn new(sigma2_zeta: f64, rho: f64, sigma2_init: f64, n: usize) -> Result<Self> {
        let cfg = Self {
            sigma2_zeta,
            rho,
            sigma2_init,
            n,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma2_zeta >= 0.0 && self.sigma2_zeta.is_finite()) {
            return Err(Error::invalid(
                "sigma2_zeta",
                format!("must be >= 0, got {}", self.sigma2_zeta),
            ));
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::invalid("rho", format!("must lie in [0, 1], got {}", self.rho)));
        }
        if !(self.sigma2_init > 0.0 && self.sigma2_init.is_finite()) {
            return Err(Error::invalid(
                "sigma2_init",
                format!("must be > 0, got {}", self.sigma2_init),
            ));
        }
        if self.n == 0 {
            return Err(Error::invalid("n", "block length must be >= 1"));
        }
        Ok(())
    }
}

/// Downlink channel: SNR and the two known gains.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelConfig {
    pub snr_db: f64,
    pub h1: Complex64,
    pub h2: Complex64,
}

impl ChannelConfig {
    /// Unit gains at the given SNR.
    pub fn new(snr_db: f64) -> Self {
        Self {
            snr_db,
            h1: Complex64::new(1.0, 0.0),
            h2: Complex64::new(1.0, 0.0),
        }
    }

    /// σ²_w = E_s / 10^(snr_db/10). SNR is per transmitted symbol energy
    /// over the complex noise variance.
    pub fn noise_variance(&self, symbol_energy: f64) -> f64 {
        symbol_energy / 10f64.powf(self.snr_db / 10.0)
    }
}

/// One block of received samples together with whatever ground truth the
/// simulator knew.
#[derive(Debug, Clone)]
pub struct ReceivedBlock {
    pub y: Vec<Complex64>,
    pub s: Option<Vec<Complex64>>,
    pub phases: Option<PhaseTrajectories>,
}

impl ReceivedBlock {
    pub fn new(y: Vec<Complex64>, s: Option<Vec<Complex64>>, phases: Option<PhaseTrajectories>) -> Result<Self> {
        let n = y.len();
        if let Some(s) = &s {
            if s.len() != n {
                return Err(Error::LengthMismatch {
                    expected: n,
                    got: s.len(),
                });
            }
        }
        if let Some(p) = &phases {
            if p.len() != n {
                return Err(Error::LengthMismatch {
                    expected: n,
                    got: p.len(),
                });
            }
        }
        Ok(Self { y, s, phases })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Draw phases, symbols and noise and form
    /// y_n = s_n (h1 e^{jφ1_n} + h2 e^{jφ2_n}) + w_n.
    pub fn simulate(pn: &PnConfig, channel: &ChannelConfig, constellation: &Constellation, seed: u64) -> Result<Self> {
        pn.validate()?;
        let phases = sample_trajectories(pn, rng::derive_seed(seed, &[rng::label_tag("phases")]));
        let mut rng = rng::stream(seed, &[rng::label_tag("observe")]);
        let s = draw_symbols_with(constellation, pn.n, &mut rng);
        let sigma2_w = channel.noise_variance(constellation.energy());
        let sd = (sigma2_w / 2.0).sqrt();
        let y = s
            .iter()
            .zip(phases.phi1.iter().zip(&phases.phi2))
            .map(|(&sn, (&p1, &p2))| {
                let mean = sn * (channel.h1 * Complex64::cis(p1) + channel.h2 * Complex64::cis(p2));
                let w = Complex64::new(
                    sd * rng.sample::<f64, _>(StandardNormal),
                    sd * rng.sample::<f64, _>(StandardNormal),
                );
                mean + w
            })
            .collect();
        Self::new(y, Some(s), Some(phases))
    }
}

//! Declarative experiment description and the figure presets.
//!
//! Specs are flat TOML: every key is a scalar or a flat list. Example:
//!
//! ```toml
//! name = "rho-sweep"
//! mode = ["NDA", "MBCRB"]
//! constellation = "QPSK"
//! n = 100
//! snr_db = 15
//! rho = [0.0, 0.5, 0.999999]
//! sigma2_zeta = 1e-3
//! sweep = "rho"          # snr_db | rho | sigma2_zeta | symbol
//! report = 50            # 1-based symbol index, or "all"
//! split = ["sigma2_zeta"]
//! seed = 7
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fisher::NdaBudget;
use crate::model::{make_constellation, Mode, PnConfig};

/// A scalar or a list in the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn to_vec(&self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVar {
    SnrDb,
    Rho,
    Sigma2Zeta,
    Symbol,
}

impl SweepVar {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepVar::SnrDb => "snr_db",
            SweepVar::Rho => "rho",
            SweepVar::Sigma2Zeta => "sigma2_zeta",
            SweepVar::Symbol => "symbol",
        }
    }
}

/// Dimensions a run can be split into separate CSV files along.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitKey {
    N,
    Constellation,
    SnrDb,
    Rho,
    Sigma2Zeta,
}

/// Which symbols of a block appear in the output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Report {
    AllSymbols,
    /// 1-based symbol index.
    Symbol(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub name: String,
    pub modes: Vec<Mode>,
    pub constellations: Vec<String>,
    pub n: Vec<usize>,
    pub snr_db: Vec<f64>,
    pub rho: Vec<f64>,
    pub sigma2_zeta: Vec<f64>,
    pub sigma2_init: f64,
    pub sweep: SweepVar,
    pub report: Report,
    pub split: Vec<SplitKey>,
    pub nda_samples: usize,
    pub nda_delta_grid: usize,
    pub estimator: bool,
    pub estimator_trials: usize,
    pub seed: u64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    name: Option<String>,
    mode: OneOrMany<String>,
    constellation: OneOrMany<String>,
    n: OneOrMany<usize>,
    snr_db: OneOrMany<f64>,
    rho: OneOrMany<f64>,
    sigma2_zeta: OneOrMany<f64>,
    sigma2_init: Option<f64>,
    sweep: String,
    report: Option<toml::Value>,
    split: Option<OneOrMany<String>>,
    nda_samples: Option<usize>,
    nda_delta_grid: Option<usize>,
    estimator: Option<bool>,
    estimator_trials: Option<usize>,
    seed: Option<u64>,
}

fn field_err(field: &str, reason: impl std::fmt::Display) -> Error {
    Error::Config(format!("field `{field}`: {reason}"))
}

fn parse_split(key: &str) -> Result<SplitKey> {
    Ok(match key {
        "n" => SplitKey::N,
        "constellation" => SplitKey::Constellation,
        "snr_db" => SplitKey::SnrDb,
        "rho" => SplitKey::Rho,
        "sigma2_zeta" => SplitKey::Sigma2Zeta,
        other => return Err(field_err("split", format!("unknown key `{other}`"))),
    })
}

impl ExperimentSpec {
    /// Parse and validate a flat TOML spec.
    pub fn from_toml(text: &str) -> Result<Self> {
        let raw: RawSpec = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        let modes = raw
            .mode
            .to_vec()
            .iter()
            .map(|m| m.parse::<Mode>().map_err(|e| field_err("mode", e)))
            .collect::<Result<Vec<_>>>()?;
        let sweep = match raw.sweep.as_str() {
            "snr_db" => SweepVar::SnrDb,
            "rho" => SweepVar::Rho,
            "sigma2_zeta" => SweepVar::Sigma2Zeta,
            "symbol" => SweepVar::Symbol,
            other => return Err(field_err("sweep", format!("unknown sweep variable `{other}`"))),
        };
        let report = match raw.report {
            None => Report::AllSymbols,
            Some(toml::Value::String(s)) if s == "all" => Report::AllSymbols,
            Some(toml::Value::Integer(k)) if k >= 1 => Report::Symbol(k as usize),
            Some(other) => {
                return Err(field_err(
                    "report",
                    format!("expected \"all\" or a symbol index >= 1, got {other}"),
                ))
            }
        };
        let split = match raw.split {
            None => vec![SplitKey::N, SplitKey::Constellation],
            Some(keys) => keys
                .to_vec()
                .iter()
                .map(|k| parse_split(k))
                .collect::<Result<Vec<_>>>()?,
        };
        let budget = NdaBudget::default();
        let spec = ExperimentSpec {
            name: raw.name.unwrap_or_else(|| "experiment".into()),
            modes,
            constellations: raw.constellation.to_vec(),
            n: raw.n.to_vec(),
            snr_db: raw.snr_db.to_vec(),
            rho: raw.rho.to_vec(),
            sigma2_zeta: raw.sigma2_zeta.to_vec(),
            sigma2_init: raw.sigma2_init.unwrap_or(PnConfig::DEFAULT_SIGMA2_INIT),
            sweep,
            report,
            split,
            nda_samples: raw.nda_samples.unwrap_or(budget.samples),
            nda_delta_grid: raw.nda_delta_grid.unwrap_or(budget.delta_grid),
            estimator: raw.estimator.unwrap_or(false),
            estimator_trials: raw.estimator_trials.unwrap_or(200),
            seed: raw.seed.unwrap_or(1),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty()
            || !self
                .name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
        {
            return Err(field_err("name", "must be nonempty and use [A-Za-z0-9_-]"));
        }
        let nonempty = |field: &str, len: usize| {
            if len == 0 {
                Err(field_err(field, "grid must be nonempty"))
            } else {
                Ok(())
            }
        };
        nonempty("mode", self.modes.len())?;
        nonempty("constellation", self.constellations.len())?;
        nonempty("n", self.n.len())?;
        nonempty("snr_db", self.snr_db.len())?;
        nonempty("rho", self.rho.len())?;
        nonempty("sigma2_zeta", self.sigma2_zeta.len())?;
        for c in &self.constellations {
            make_constellation(c).map_err(|e| field_err("constellation", e))?;
        }
        if let Some(&r) = self.rho.iter().find(|r| !(0.0..=1.0).contains(*r)) {
            return Err(field_err("rho", format!("{r} outside [0, 1]")));
        }
        if let Some(&r) = self.rho.iter().find(|&&r| r > 1.0 - crate::prior::RHO_EPS && r < 1.0) {
            return Err(field_err(
                "rho",
                format!("{r} is within 1e-6 of 1; use 1 for the fully synchronized model"),
            ));
        }
        if let Some(&s) = self.snr_db.iter().find(|s| !(-10.0..=50.0).contains(*s)) {
            return Err(field_err("snr_db", format!("{s} outside [-10, 50]")));
        }
        if let Some(&s) = self.sigma2_zeta.iter().find(|&&s| !(s > 0.0 && s.is_finite())) {
            return Err(field_err("sigma2_zeta", format!("{s} must be finite and > 0")));
        }
        if !(self.sigma2_init > 0.0 && self.sigma2_init.is_finite()) {
            return Err(field_err("sigma2_init", "must be finite and > 0"));
        }
        if self.n.contains(&0) {
            return Err(field_err("n", "block length must be >= 1"));
        }
        if let Report::Symbol(k) = self.report {
            if let Some(&n) = self.n.iter().find(|&&n| k > n) {
                return Err(field_err("report", format!("symbol {k} exceeds block length {n}")));
            }
        }
        if self.sweep == SweepVar::Symbol && self.report != Report::AllSymbols {
            return Err(field_err("report", "sweep = \"symbol\" requires report = \"all\""));
        }
        if self.nda_samples < 2 {
            return Err(field_err("nda_samples", "must be >= 2"));
        }
        if self.nda_delta_grid == 0 {
            return Err(field_err("nda_delta_grid", "must be >= 1"));
        }
        if self.estimator && self.estimator_trials < 100 {
            return Err(field_err(
                "estimator_trials",
                "must be >= 100 when the estimator is enabled",
            ));
        }
        Ok(())
    }

    pub fn nda_budget(&self) -> NdaBudget {
        NdaBudget {
            samples: self.nda_samples,
            delta_grid: self.nda_delta_grid,
        }
    }

    /// Flat TOML that parses back to this spec.
    pub fn to_toml(&self) -> String {
        let list_f = |v: &[f64]| {
            format!(
                "[{}]",
                v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(", ")
            )
        };
        let list_s = |v: &[String]| {
            format!(
                "[{}]",
                v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", ")
            )
        };
        let modes: Vec<String> = self.modes.iter().map(|m| m.as_str().to_string()).collect();
        let split: Vec<String> = self
            .split
            .iter()
            .map(|k| {
                match k {
                    SplitKey::N => "n",
                    SplitKey::Constellation => "constellation",
                    SplitKey::SnrDb => "snr_db",
                    SplitKey::Rho => "rho",
                    SplitKey::Sigma2Zeta => "sigma2_zeta",
                }
                .to_string()
            })
            .collect();
        let report = match self.report {
            Report::AllSymbols => "\"all\"".to_string(),
            Report::Symbol(k) => k.to_string(),
        };
        format!(
            "name = {:?}\nmode = {}\nconstellation = {}\nn = [{}]\nsnr_db = {}\nrho = {}\nsigma2_zeta = {}\n\
             sigma2_init = {:e}\nsweep = {:?}\nreport = {}\nsplit = {}\nnda_samples = {}\nnda_delta_grid = {}\n\
             estimator = {}\nestimator_trials = {}\nseed = {}\n",
            self.name,
            list_s(&modes),
            list_s(&self.constellations),
            self.n.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(", "),
            list_f(&self.snr_db),
            list_f(&self.rho),
            list_f(&self.sigma2_zeta),
            self.sigma2_init,
            self.sweep.as_str(),
            report,
            list_s(&split),
            self.nda_samples,
            self.nda_delta_grid,
            self.estimator,
            self.estimator_trials,
            self.seed,
        )
    }
}

/// Figure presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Bound vs symbol index; ρ = 0.5, σ²_ζ = 1e-3, 5 dB, N ∈ {20, 100}.
    Fig2,
    /// Bound at symbol 50 of 100 vs SNR; ρ = 0.1, σ²_ζ = 1e-3.
    Fig3,
    /// Bound at symbol 50 vs ρ at 15 dB for σ²_ζ ∈ {1e-3, 1e-2}.
    Fig4,
    /// σ²_ε̃ at symbol 50 vs ρ at 15 dB (same sweep as Fig4).
    Fig5,
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fig2" => Ok(Preset::Fig2),
            "fig3" => Ok(Preset::Fig3),
            "fig4" => Ok(Preset::Fig4),
            "fig5" => Ok(Preset::Fig5),
            other => Err(Error::Config(format!(
                "unknown preset `{other}` (expected fig2|fig3|fig4|fig5)"
            ))),
        }
    }
}

/// ρ grid used by the synchronization presets: 0, 0.1, …, 0.9, the largest
/// value the paired prior accepts, and the exact ρ = 1 model.
pub fn rho_grid() -> Vec<f64> {
    let mut g: Vec<f64> = (0..10).map(|i| i as f64 / 10.0).collect();
    g.push(1.0 - crate::prior::RHO_EPS);
    g.push(1.0);
    g
}

impl Preset {
    pub fn spec(self) -> ExperimentSpec {
        let budget = NdaBudget::default();
        let base = ExperimentSpec {
            name: String::new(),
            modes: vec![Mode::Nda, Mode::Mbcrb],
            constellations: vec!["QPSK".into(), "16QAM".into()],
            n: vec![100],
            snr_db: vec![5.0],
            rho: vec![0.5],
            sigma2_zeta: vec![1e-3],
            sigma2_init: PnConfig::DEFAULT_SIGMA2_INIT,
            sweep: SweepVar::Symbol,
            report: Report::AllSymbols,
            split: vec![SplitKey::N, SplitKey::Constellation],
            nda_samples: budget.samples,
            nda_delta_grid: budget.delta_grid,
            estimator: false,
            estimator_trials: 200,
            seed: 1,
        };
        match self {
            Preset::Fig2 => ExperimentSpec {
                name: "fig2".into(),
                n: vec![20, 100],
                ..base
            },
            Preset::Fig3 => ExperimentSpec {
                name: "fig3".into(),
                snr_db: (0..=12).map(|i| 2.5 * i as f64).collect(),
                rho: vec![0.1],
                sweep: SweepVar::SnrDb,
                report: Report::Symbol(50),
                split: Vec::new(),
                ..base
            },
            Preset::Fig4 | Preset::Fig5 => ExperimentSpec {
                name: if self == Preset::Fig4 { "fig4" } else { "fig5" }.into(),
                modes: vec![Mode::Nda, Mode::Mbcrb],
                constellations: vec!["QPSK".into()],
                snr_db: vec![15.0],
                rho: rho_grid(),
                sigma2_zeta: vec![1e-3, 1e-2],
                sweep: SweepVar::Rho,
                report: Report::Symbol(50),
                split: vec![SplitKey::Sigma2Zeta],
                ..base
            },
        }
    }
}

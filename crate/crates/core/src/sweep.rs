//! Evaluation of an [`ExperimentSpec`] over its parameter grid.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::bcrb::{assemble_bim, propagate_stderr};
use crate::error::Result;
use crate::experiment::{ExperimentSpec, Report, SweepVar};
use crate::fisher::{fisher_da, fisher_mbcrb, fisher_nda, FisherBlocks};
use crate::map::{mse_harness, HarnessConfig, HarnessResult};
use crate::model::{draw_symbols, make_constellation, ChannelConfig, Mode, PnConfig};
use crate::prior::prior_for;
use crate::rng::{derive_seed, label_tag};

/// One grid point: every per-symbol output is derived from it.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub mode: Mode,
    pub constellation: String,
    pub n: usize,
    pub snr_db: f64,
    pub rho: f64,
    pub sigma2_zeta: f64,
}

/// One output line.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub sweep_var: SweepVar,
    pub sweep_value: f64,
    pub mode: Mode,
    pub constellation: String,
    pub n: usize,
    /// 1-based.
    pub symbol_index: usize,
    pub bound: f64,
    pub bound_stderr: f64,
    pub sigma2_eps_tilde: f64,
    pub empirical_mse: Option<f64>,
    pub seed: u64,
    pub snr_db: f64,
    pub rho: f64,
    pub sigma2_zeta: f64,
}

/// Grid points in output order: constellation, n, σ²_ζ, ρ, SNR, mode.
pub fn grid_points(spec: &ExperimentSpec) -> Vec<SweepPoint> {
    let mut points = Vec::new();
    for c in &spec.constellations {
        for &n in &spec.n {
            for &sigma2_zeta in &spec.sigma2_zeta {
                for &rho in &spec.rho {
                    for &snr_db in &spec.snr_db {
                        for &mode in &spec.modes {
                            points.push(SweepPoint {
                                mode,
                                constellation: c.clone(),
                                n,
                                snr_db,
                                rho,
                                sigma2_zeta,
                            });
                        }
                    }
                }
            }
        }
    }
    points
}

fn nda_key(constellation: &str, snr_db: f64) -> (String, u64) {
    (constellation.to_string(), snr_db.to_bits())
}

/// Seed of the NDA Fisher estimate for a (constellation, SNR) pair.
pub fn nda_seed(master: u64, constellation: &str, snr_db: f64) -> u64 {
    derive_seed(
        master,
        &[label_tag("nda-fisher"), label_tag(constellation), snr_db.to_bits()],
    )
}

/// Seed of the pilot sequence used by DA bounds for a (constellation, N) pair.
pub fn da_symbol_seed(master: u64, constellation: &str, n: usize) -> u64 {
    derive_seed(master, &[label_tag("da-symbols"), label_tag(constellation), n as u64])
}

fn estimator_seed(master: u64, p: &SweepPoint, mode: Mode) -> u64 {
    derive_seed(
        master,
        &[
            label_tag("estimator"),
            label_tag(mode.as_str()),
            label_tag(&p.constellation),
            p.n as u64,
            p.snr_db.to_bits(),
            p.rho.to_bits(),
            p.sigma2_zeta.to_bits(),
        ],
    )
}

struct PointResult {
    bound: Vec<f64>,
    stderr: Vec<f64>,
    eps: Vec<f64>,
    empirical: Option<Vec<f64>>,
}

fn fisher_for(
    spec: &ExperimentSpec,
    p: &SweepPoint,
    nda: &HashMap<(String, u64), FisherBlocks>,
) -> Result<FisherBlocks> {
    let c = make_constellation(&p.constellation)?;
    let sigma2_w = ChannelConfig::new(p.snr_db).noise_variance(c.energy());
    match p.mode {
        Mode::Da => fisher_da(
            &draw_symbols(&c, p.n, da_symbol_seed(spec.seed, &p.constellation, p.n)),
            sigma2_w,
        ),
        Mode::Mbcrb => fisher_mbcrb(&c, sigma2_w),
        Mode::Nda => Ok(nda[&nda_key(&p.constellation, p.snr_db)].clone()),
    }
}

fn evaluate(
    spec: &ExperimentSpec,
    p: &SweepPoint,
    nda: &HashMap<(String, u64), FisherBlocks>,
    estimator: Option<&HarnessResult>,
) -> Result<PointResult> {
    let pn = PnConfig::new(p.sigma2_zeta, p.rho, spec.sigma2_init, p.n)?;
    let prior = prior_for(&pn)?;
    let fisher = fisher_for(spec, p, nda)?;
    let bim = assemble_bim(&fisher, &prior)?;
    let errs = propagate_stderr(&fisher, &prior, &bim)?;
    Ok(PointResult {
        bound: bim.mse_phi1,
        stderr: errs.mse_phi1,
        eps: bim.sigma2_eps_tilde,
        empirical: estimator.map(|h| h.mse_phi1.clone()),
    })
}

/// Estimator flavour paired with a bound mode.
fn estimator_mode(mode: Mode) -> Mode {
    if mode == Mode::Da {
        Mode::Da
    } else {
        Mode::Nda
    }
}

fn estimator_key(p: &SweepPoint) -> (Mode, String, usize, u64, u64, u64) {
    (
        estimator_mode(p.mode),
        p.constellation.clone(),
        p.n,
        p.snr_db.to_bits(),
        p.rho.to_bits(),
        p.sigma2_zeta.to_bits(),
    )
}

/// Bounds only.
pub fn bound_sweep(spec: &ExperimentSpec) -> Result<Vec<SweepRow>> {
    run_sweep(spec, false)
}

/// Evaluate every grid point, in parallel, and flatten into rows in grid
/// order. With `estimator` set, each distinct (estimator mode, channel, PN)
/// configuration is also run through the MAP harness once.
pub fn run_sweep(spec: &ExperimentSpec, estimator: bool) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    let points = grid_points(spec);

    let mut nda_keys: Vec<(String, f64)> = Vec::new();
    for p in points.iter().filter(|p| p.mode == Mode::Nda) {
        if !nda_keys
            .iter()
            .any(|(c, s)| c == &p.constellation && s.to_bits() == p.snr_db.to_bits())
        {
            nda_keys.push((p.constellation.clone(), p.snr_db));
        }
    }
    let nda: HashMap<(String, u64), FisherBlocks> = nda_keys
        .par_iter()
        .map(|(c, snr)| {
            let con = make_constellation(c)?;
            let sigma2_w = ChannelConfig::new(*snr).noise_variance(con.energy());
            let f = fisher_nda(&con, sigma2_w, spec.nda_budget(), nda_seed(spec.seed, c, *snr))?;
            Ok((nda_key(c, *snr), f))
        })
        .collect::<Result<_>>()?;

    let mut harness: HashMap<(Mode, String, usize, u64, u64, u64), HarnessResult> = HashMap::new();
    if estimator {
        let mut unique: Vec<&SweepPoint> = Vec::new();
        for p in &points {
            if !unique.iter().any(|q| estimator_key(q) == estimator_key(p)) {
                unique.push(p);
            }
        }
        // Each harness run is internally parallel over trials.
        for p in unique {
            let mode = estimator_mode(p.mode);
            let cfg = HarnessConfig {
                pn: PnConfig::new(p.sigma2_zeta, p.rho, spec.sigma2_init, p.n)?,
                channel: ChannelConfig::new(p.snr_db),
                constellation: make_constellation(&p.constellation)?,
                mode,
            };
            let h = mse_harness(&cfg, spec.estimator_trials, estimator_seed(spec.seed, p, mode))?;
            harness.insert(estimator_key(p), h);
        }
    }

    let results: Vec<PointResult> = points
        .par_iter()
        .map(|p| evaluate(spec, p, &nda, harness.get(&estimator_key(p))))
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    for (p, r) in points.iter().zip(&results) {
        let symbols: Vec<usize> = match spec.report {
            Report::AllSymbols => (1..=p.n).collect(),
            Report::Symbol(k) => vec![k],
        };
        for k in symbols {
            let i = k - 1;
            let sweep_value = match spec.sweep {
                SweepVar::SnrDb => p.snr_db,
                SweepVar::Rho => p.rho,
                SweepVar::Sigma2Zeta => p.sigma2_zeta,
                SweepVar::Symbol => k as f64,
            };
            rows.push(SweepRow {
                sweep_var: spec.sweep,
                sweep_value,
                mode: p.mode,
                constellation: p.constellation.clone(),
                n: p.n,
                symbol_index: k,
                bound: r.bound[i],
                bound_stderr: r.stderr[i],
                sigma2_eps_tilde: r.eps[i],
                empirical_mse: r.empirical.as_ref().map(|e| e[i]),
                seed: spec.seed,
                snr_db: p.snr_db,
                rho: p.rho,
                sigma2_zeta: p.sigma2_zeta,
            });
        }
    }
    Ok(rows)
}

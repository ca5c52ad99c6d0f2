//! CSV output, run manifests, and plot/summary generation from CSVs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::experiment::{ExperimentSpec, SplitKey};
use crate::sweep::SweepRow;

pub const COLUMNS: [&str; 14] = [
    "sweep_var_name",
    "sweep_value",
    "mode",
    "constellation",
    "n",
    "symbol_index",
    "bound_rad2",
    "bound_stderr_rad2",
    "sigma2_eps_tilde_rad2",
    "empirical_mse_rad2",
    "seed",
    "snr_db",
    "rho",
    "sigma2_zeta_rad2",
];

fn sci(x: f64) -> String {
    format!("{x:.12e}")
}

fn record(r: &SweepRow) -> Vec<String> {
    vec![
        r.sweep_var.as_str().to_string(),
        r.sweep_value.to_string(),
        r.mode.as_str().to_string(),
        r.constellation.clone(),
        r.n.to_string(),
        r.symbol_index.to_string(),
        sci(r.bound),
        sci(r.bound_stderr),
        sci(r.sigma2_eps_tilde),
        r.empirical_mse.map(sci).unwrap_or_default(),
        r.seed.to_string(),
        r.snr_db.to_string(),
        r.rho.to_string(),
        r.sigma2_zeta.to_string(),
    ]
}

/// Serialize rows as CSV text with a header.
pub fn to_csv_string(rows: &[SweepRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(COLUMNS)?;
    for r in rows {
        w.write_record(record(r))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '.' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn split_suffix(r: &SweepRow, keys: &[SplitKey]) -> String {
    keys.iter()
        .map(|k| match k {
            SplitKey::N => format!("n{}", r.n),
            SplitKey::Constellation => sanitize(&r.constellation),
            SplitKey::SnrDb => format!("snr{}", r.snr_db),
            SplitKey::Rho => format!("rho{}", r.rho),
            SplitKey::Sigma2Zeta => format!("s2z{:e}", r.sigma2_zeta),
        })
        .map(|s| format!("_{s}"))
        .collect()
}

/// Write rows into one CSV per distinct split-key combination, in first
/// appearance order. Returns the file paths.
pub fn write_csvs(rows: &[SweepRow], spec: &ExperimentSpec, out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir)?;
    let mut groups: Vec<(String, Vec<SweepRow>)> = Vec::new();
    for r in rows {
        let suffix = split_suffix(r, &spec.split);
        match groups.iter_mut().find(|(s, _)| *s == suffix) {
            Some((_, g)) => g.push(r.clone()),
            None => groups.push((suffix, vec![r.clone()])),
        }
    }
    let mut paths = Vec::new();
    for (suffix, g) in groups {
        let path = out_dir.join(format!("{}{}.csv", spec.name, suffix));
        fs::write(&path, to_csv_string(&g)?)?;
        paths.push(path);
    }
    Ok(paths)
}

#[derive(Debug, Serialize)]
pub struct RunManifest<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub seed: u64,
    pub estimator: bool,
    pub threads: usize,
    pub wall_time_s: f64,
    pub files: Vec<String>,
    pub config: &'a ExperimentSpec,
    pub config_toml: String,
}

impl<'a> RunManifest<'a> {
    pub fn new(spec: &'a ExperimentSpec, files: &[PathBuf], threads: usize, wall_time_s: f64) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            seed: spec.seed,
            estimator: spec.estimator,
            threads,
            wall_time_s,
            files: files.iter().map(|p| p.display().to_string()).collect(),
            config: spec,
            config_toml: spec.to_toml(),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))?;
        fs::write(path, text)?;
        Ok(())
    }
}

/// A row as read back from a CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub sweep_var: String,
    pub sweep_value: f64,
    pub mode: String,
    pub constellation: String,
    pub n: usize,
    pub symbol_index: usize,
    pub bound: f64,
    pub sigma2_eps_tilde: f64,
    pub empirical_mse: Option<f64>,
    pub snr_db: Option<f64>,
    pub rho: Option<f64>,
    pub sigma2_zeta: Option<f64>,
}

const REQUIRED: [&str; 10] = [
    "sweep_var_name",
    "sweep_value",
    "mode",
    "constellation",
    "n",
    "symbol_index",
    "bound_rad2",
    "bound_stderr_rad2",
    "sigma2_eps_tilde_rad2",
    "empirical_mse_rad2",
];

fn parse_field<T: std::str::FromStr>(value: &str, column: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("column `{column}`: cannot parse `{value}`")))
}

/// Parse CSV text produced by [`write_csvs`].
pub fn read_csv_str(text: &str) -> Result<Vec<CsvRow>> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let header = rdr.headers()?.clone();
    let index = |name: &str| header.iter().position(|h| h == name);
    for col in REQUIRED {
        if index(col).is_none() {
            return Err(Error::MissingColumn(col.to_string()));
        }
    }
    let col = |name: &str| index(name).expect("checked above");
    let opt = |rec: &csv::StringRecord, name: &str| -> Result<Option<f64>> {
        match index(name).and_then(|i| rec.get(i)) {
            Some(v) if !v.trim().is_empty() => Ok(Some(parse_field(v, name)?)),
            _ => Ok(None),
        }
    };
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let get = |name: &str| rec.get(col(name)).unwrap_or("");
        rows.push(CsvRow {
            sweep_var: get("sweep_var_name").to_string(),
            sweep_value: parse_field(get("sweep_value"), "sweep_value")?,
            mode: get("mode").to_string(),
            constellation: get("constellation").to_string(),
            n: parse_field(get("n"), "n")?,
            symbol_index: parse_field(get("symbol_index"), "symbol_index")?,
            bound: parse_field(get("bound_rad2"), "bound_rad2")?,
            sigma2_eps_tilde: parse_field(get("sigma2_eps_tilde_rad2"), "sigma2_eps_tilde_rad2")?,
            empirical_mse: opt(&rec, "empirical_mse_rad2")?,
            snr_db: opt(&rec, "snr_db")?,
            rho: opt(&rec, "rho")?,
            sigma2_zeta: opt(&rec, "sigma2_zeta_rad2")?,
        });
    }
    Ok(rows)
}

pub fn read_csv(path: &Path) -> Result<Vec<CsvRow>> {
    read_csv_str(&fs::read_to_string(path)?)
}

/// Series identity: everything except the swept quantity.
fn series_label(r: &CsvRow) -> String {
    let mut s = format!("{} {} N={}", r.mode, r.constellation, r.n);
    if r.sweep_var != "symbol" {
        write!(s, " k={}", r.symbol_index).unwrap();
    }
    if r.sweep_var != "snr_db" {
        if let Some(v) = r.snr_db {
            write!(s, " SNR={v}dB").unwrap();
        }
    }
    if r.sweep_var != "rho" {
        if let Some(v) = r.rho {
            write!(s, " rho={v}").unwrap();
        }
    }
    if r.sweep_var != "sigma2_zeta" {
        if let Some(v) = r.sigma2_zeta {
            write!(s, " s2z={v:e}").unwrap();
        }
    }
    s
}

fn group_series(rows: &[CsvRow]) -> Vec<(String, Vec<&CsvRow>)> {
    let mut out: Vec<(String, Vec<&CsvRow>)> = Vec::new();
    for r in rows {
        let label = series_label(r);
        match out.iter_mut().find(|(l, _)| *l == label) {
            Some((_, g)) => g.push(r),
            None => out.push((label, vec![r])),
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportOutput {
    pub script: String,
    pub summary: String,
}

/// `10 log10(bound(ρ=0) / bound(ρ_max))` for each ρ-swept series, where
/// `ρ_max` is the largest swept ρ below 1, keyed by series label without σ²_ζ.
fn improvements(rows: &[CsvRow]) -> BTreeMap<String, Vec<(f64, f64)>> {
    let mut by_series: BTreeMap<(String, u64), Vec<&CsvRow>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.sweep_var == "rho") {
        let key = format!("{} {} N={} k={}", r.mode, r.constellation, r.n, r.symbol_index);
        let key = match r.snr_db {
            Some(v) => format!("{key} SNR={v}dB"),
            None => key,
        };
        let s2z = r.sigma2_zeta.unwrap_or(f64::NAN);
        by_series.entry((key, s2z.to_bits())).or_default().push(r);
    }
    let mut out: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for ((key, s2z), g) in by_series {
        let at0 = g.iter().find(|r| r.sweep_value == 0.0);
        let top = g
            .iter()
            .filter(|r| r.sweep_value < 1.0)
            .max_by(|a, b| a.sweep_value.total_cmp(&b.sweep_value));
        if let (Some(a), Some(b)) = (at0, top) {
            if b.sweep_value > 0.0 {
                out.entry(key)
                    .or_default()
                    .push((f64::from_bits(s2z), 10.0 * (a.bound / b.bound).log10()));
            }
        }
    }
    out
}

fn datablock(script: &mut String, name: &str, points: &[(f64, f64)]) {
    writeln!(script, "${name} << EOD").unwrap();
    for (x, y) in points {
        writeln!(script, "{x:e} {y:.12e}").unwrap();
    }
    writeln!(script, "EOD").unwrap();
}

/// Build a gnuplot script and a text summary from parsed CSVs.
pub fn build_report(files: &[(String, Vec<CsvRow>)]) -> ReportOutput {
    let mut script =
        String::from("set terminal pngcairo size 900,600\nset logscale y\nset grid\nset key outside right\n");
    let mut summary = String::new();
    let mut block = 0usize;
    for (file, rows) in files {
        let Some(first) = rows.first() else {
            writeln!(summary, "{file}: no rows").unwrap();
            continue;
        };
        let stem = Path::new(file)
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("plot")
            .to_string();
        let xlabel = match first.sweep_var.as_str() {
            "snr_db" => "SNR [dB]",
            "rho" => "rho",
            "sigma2_zeta" => "sigma2_zeta [rad^2]",
            _ => "symbol index",
        };
        let series = group_series(rows);
        let mut bound_plots = Vec::new();
        let mut eps_plots = Vec::new();
        for (label, g) in &series {
            let name = format!("d{block}");
            block += 1;
            datablock(
                &mut script,
                &format!("{name}_bound"),
                &g.iter().map(|r| (r.sweep_value, r.bound)).collect::<Vec<_>>(),
            );
            bound_plots.push(format!("${name}_bound using 1:2 with linespoints title \"{label}\""));
            if g.iter().all(|r| r.empirical_mse.is_some()) {
                let pts: Vec<(f64, f64)> = g.iter().map(|r| (r.sweep_value, r.empirical_mse.unwrap())).collect();
                datablock(&mut script, &format!("{name}_mse"), &pts);
                bound_plots.push(format!("${name}_mse using 1:2 with points title \"MAP {label}\""));
            }
            let eps: Vec<(f64, f64)> = g
                .iter()
                .filter(|r| r.sigma2_eps_tilde > 0.0)
                .map(|r| (r.sweep_value, r.sigma2_eps_tilde))
                .collect();
            if !eps.is_empty() {
                datablock(&mut script, &format!("{name}_eps"), &eps);
                eps_plots.push(format!("${name}_eps using 1:2 with linespoints title \"{label}\""));
            }
        }
        writeln!(
            script,
            "set output \"{stem}_bound.png\"\nset xlabel \"{xlabel}\"\nset ylabel \"MSE [rad^2]\""
        )
        .unwrap();
        writeln!(script, "plot {}", bound_plots.join(", \\\n     ")).unwrap();
        if !eps_plots.is_empty() {
            writeln!(
                script,
                "set output \"{stem}_eps.png\"\nset ylabel \"sigma2_eps_tilde [rad^2]\""
            )
            .unwrap();
            writeln!(script, "plot {}", eps_plots.join(", \\\n     ")).unwrap();
        }
        writeln!(
            summary,
            "{file}: {} rows, {} series, sweep {}",
            rows.len(),
            series.len(),
            first.sweep_var
        )
        .unwrap();
    }

    let all: Vec<CsvRow> = files.iter().flat_map(|(_, r)| r.iter().cloned()).collect();
    for (key, mut vals) in improvements(&all) {
        vals.sort_by(|a, b| a.0.total_cmp(&b.0));
        let parts: Vec<String> = vals
            .iter()
            .map(|(s2z, db)| format!("improvement(σ²_ζ={s2z:e}) = {db:.2} dB"))
            .collect();
        writeln!(summary, "{key}: {}", parts.join("; ")).unwrap();
    }
    ReportOutput { script, summary }
}

/// Read the CSVs and build the report.
pub fn report_files(paths: &[PathBuf]) -> Result<ReportOutput> {
    let files = paths
        .iter()
        .map(|p| Ok((p.display().to_string(), read_csv(p)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(build_report(&files))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::SweepVar;
    use crate::model::Mode;

    fn row(rho: f64, s2z: f64, bound: f64, mse: Option<f64>) -> SweepRow {
        SweepRow {
            sweep_var: SweepVar::Rho,
            sweep_value: rho,
            mode: Mode::Nda,
            constellation: "QPSK".into(),
            n: 100,
            symbol_index: 50,
            bound,
            bound_stderr: 0.0,
            sigma2_eps_tilde: bound / 10.0,
            empirical_mse: mse,
            seed: 1,
            snr_db: 15.0,
            rho,
            sigma2_zeta: s2z,
        }
    }

    #[test]
    fn csv_round_trip_keeps_precision() {
        let rows = vec![row(0.0, 1e-3, 1.0 / 3.0, None), row(0.5, 1e-3, 2.0 / 7.0, Some(0.3))];
        let text = to_csv_string(&rows).unwrap();
        assert!(text.starts_with(&COLUMNS.join(",")));
        let back = read_csv_str(&text).unwrap();
        assert_eq!(back.len(), 2);
        assert!((back[0].bound - 1.0 / 3.0).abs() < 1e-12 / 3.0);
        assert_eq!(back[0].empirical_mse, None);
        assert_eq!(back[1].empirical_mse, Some(0.3));
    }

    #[test]
    fn missing_column_is_named() {
        let text = "sweep_var_name,sweep_value,mode\nrho,0,NDA\n";
        match read_csv_str(text) {
            Err(Error::MissingColumn(c)) => assert_eq!(c, "constellation"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn summary_reports_improvement() {
        let mut rows = Vec::new();
        for (s2z, gain) in [(1e-3, 10f64.powf(0.15)), (1e-2, 10f64.powf(0.2))] {
            rows.push(row(0.0, s2z, gain * 1e-3, None));
            rows.push(row(0.999999, s2z, 1e-3, None));
            rows.push(row(1.0, s2z, 0.5e-3, None));
        }
        let text = to_csv_string(&rows).unwrap();
        let out = build_report(&[("fig4.csv".into(), read_csv_str(&text).unwrap())]);
        assert!(
            out.summary
                .contains("improvement(σ²_ζ=1e-3) = 1.50 dB; improvement(σ²_ζ=1e-2) = 2.00 dB"),
            "{}",
            out.summary
        );
    }

    #[test]
    fn empty_estimator_column_omits_series() {
        let rows = vec![row(0.0, 1e-3, 1e-3, None), row(0.5, 1e-3, 1e-3, None)];
        let out = build_report(&[("a.csv".into(), read_csv_str(&to_csv_string(&rows).unwrap()).unwrap())]);
        assert!(!out.script.contains("MAP "));
        assert!(out.script.contains("plot $d0_bound"));
        let rows = vec![row(0.0, 1e-3, 1e-3, Some(2e-3)), row(0.5, 1e-3, 1e-3, Some(2e-3))];
        let out = build_report(&[("a.csv".into(), read_csv_str(&to_csv_string(&rows).unwrap()).unwrap())]);
        assert!(out.script.contains("MAP NDA"));
    }
}

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};

use pnbound::experiment::{ExperimentSpec, Preset};
use pnbound::report::{report_files, write_csvs, RunManifest};
use pnbound::sweep::run_sweep;
use pnbound::{Error, Result};

#[derive(Parser)]
#[command(
    name = "pnbound",
    version,
    about = "Phase-noise estimation bounds for two-transmitter CoMP links"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Override the master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,

    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Run the MAP estimator alongside the bounds.
    #[arg(long, global = true, value_enum)]
    estimator: Option<Switch>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment described by a TOML file.
    Run { spec: PathBuf },
    /// Run a figure preset.
    Preset { name: String },
    /// Build a gnuplot script and summary from CSV outputs.
    Report {
        #[arg(required = true)]
        csv: Vec<PathBuf>,
    },
}

fn execute(cli: Cli) -> Result<()> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Error::Config(format!("--threads: {e}")))?;
    }
    let mut spec = match &cli.command {
        Command::Run { spec } => {
            let text = std::fs::read_to_string(spec).map_err(|e| Error::Config(format!("{}: {e}", spec.display())))?;
            ExperimentSpec::from_toml(&text)?
        }
        Command::Preset { name } => name.parse::<Preset>()?.spec(),
        Command::Report { csv } => {
            let out = report_files(csv)?;
            std::fs::create_dir_all(&cli.out_dir)?;
            std::fs::write(cli.out_dir.join("plot.gp"), &out.script)?;
            std::fs::write(cli.out_dir.join("summary.txt"), &out.summary)?;
            print!("{}", out.summary);
            return Ok(());
        }
    };
    if let Some(seed) = cli.seed {
        spec.seed = seed;
    }
    match cli.estimator {
        Some(Switch::On) => spec.estimator = true,
        Some(Switch::Off) => spec.estimator = false,
        None => {}
    }
    spec.validate()?;

    let start = Instant::now();
    let rows = run_sweep(&spec, spec.estimator)?;
    let files = write_csvs(&rows, &spec, &cli.out_dir)?;
    let manifest = RunManifest::new(
        &spec,
        &files,
        rayon::current_num_threads(),
        start.elapsed().as_secs_f64(),
    );
    manifest.write(&cli.out_dir.join(format!("{}_manifest.json", spec.name)))?;
    for f in &files {
        println!("{}", f.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config_error() {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}

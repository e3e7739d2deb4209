use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use heightscope::geometry::Preset;
use heightscope::harness::{self, emit, GammaValues, ScenarioConfig, SweepOptions};
use heightscope::Error;

#[derive(Parser)]
#[command(name = "heightscope", version, about = "Monte Carlo sweeps of group-sparse radar height estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Run a sweep and write results.csv or results.json.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (default: all cores). Results do not depend on it.
        #[arg(long)]
        jobs: Option<usize>,
        /// Output directory (default: the config's `output`, else `results`).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
        /// Fill the wall_time_s column.
        #[arg(long)]
        timing: bool,
        /// Threshold sidecar written by `calibrate-gamma`.
        #[arg(long)]
        gamma: Option<PathBuf>,
    },
    /// List antenna layout presets.
    Presets,
    /// Calibrate thresholds on noise-only data and write them to a sidecar.
    CalibrateGamma {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        jobs: Option<usize>,
        /// Sidecar path (default: `<config>.gamma.json`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::UnknownPreset(_) => 2,
        _ => 3,
    }
}

fn read_gamma(path: &Path) -> Result<GammaValues, Error> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn sidecar_path(config: &Path) -> PathBuf {
    let mut s = config.as_os_str().to_owned();
    s.push(".gamma.json");
    PathBuf::from(s)
}

fn run(cfg: ScenarioConfig, jobs: usize, out: PathBuf, format: Format, timing: bool, gamma: GammaValues) -> Result<(), Error> {
    std::fs::create_dir_all(&out)?;
    let opts = SweepOptions { jobs, timing, gamma };
    let report = match format {
        Format::Csv => {
            let path = out.join("results.csv");
            let mut sink = emit::CsvSink::create(&path)?;
            let report = harness::run_sweep(&cfg, &opts, &mut |r| {
                eprintln!("{}", emit::csv_row(r));
                sink.push(r)
            })?;
            eprintln!("wrote {}", path.display());
            report
        }
        Format::Json => {
            let report = harness::run_sweep(&cfg, &opts, &mut |r| {
                eprintln!("{}", emit::csv_row(r));
                Ok(())
            })?;
            let path = out.join("results.json");
            harness::write_json(&path, &cfg, &report.gamma, &report.rows)?;
            eprintln!("wrote {}", path.display());
            report
        }
    };
    if report.rows.is_empty() {
        return Err(Error::Dimension("sweep produced no rows".into()));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let jobs = |j: Option<usize>| j.unwrap_or(0);
    let result = match cli.command {
        Command::Presets => {
            for p in Preset::ALL {
                let layout = p.layout();
                println!("{:<14} {:>4} channels  {}", p.name(), layout.virtual_channels(), p.description());
            }
            Ok(())
        }
        Command::Run { config, seed, jobs: j, out, format, timing, gamma } => (|| {
            let mut cfg = harness::parse_config(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let gamma = gamma.map(|p| read_gamma(&p)).transpose()?.unwrap_or_default();
            let out = out.or_else(|| cfg.output.clone().map(PathBuf::from)).unwrap_or_else(|| PathBuf::from("results"));
            run(cfg, jobs(j), out, format, timing, gamma)
        })(),
        Command::CalibrateGamma { config, jobs: j, out } => (|| {
            let cfg = harness::parse_config(&config)?;
            let g = harness::calibrate_gamma(&cfg, jobs(j), &GammaValues::default())?;
            let path = out.unwrap_or_else(|| sidecar_path(&config));
            let text = serde_json::to_string_pretty(&g).map_err(|e| Error::Config(e.to_string()))?;
            std::fs::write(&path, format!("{text}\n"))?;
            println!("{text}");
            eprintln!("wrote {}", path.display());
            Ok(())
        })(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hrgap_core::features::{DeviationMode, TargetKind};
use hrgap_core::models::ModelKind;
use hrgap_core::Error;

mod commands;
mod config;
mod data;

use config::RunConfig;

/// Estimate missing wearable heart rate from smartphone accelerometer, GPS
/// and time of day.
#[derive(Debug, Parser)]
#[command(name = "hrgap", version)]
struct Cli {
    /// TOML run configuration; see `hrgap config print-defaults`.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override every seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (results do not depend on this).
    #[arg(long, global = true, value_parser = clap::value_parser!(u16).range(1..))]
    threads: Option<u16>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct DataArg {
    /// Aligned CSV, participant directory, or directory of participant
    /// directories.
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate synthetic participants as raw channel CSVs.
    Simulate {
        #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
        participants: Option<u32>,
        /// Study length in days.
        #[arg(long)]
        days: Option<f64>,
        /// Heart-rate gap pattern, repeatable: dropout:P, nightly:START:HOURS, battery:DAY.
        #[arg(long = "gap")]
        gaps: Vec<String>,
        /// Disable measurement noise.
        #[arg(long)]
        noise_free: bool,
    },
    /// Align raw channels onto the 1 Hz grid and write aligned.csv.
    Align(DataArg),
    /// Write the complete-case feature table.
    Featurize {
        #[command(flatten)]
        data: DataArg,
        #[arg(long, value_enum)]
        target: Option<Target>,
        #[arg(long, value_enum)]
        deviation: Option<Deviation>,
    },
    /// Fit one model on all participants and save it.
    Train {
        #[command(flatten)]
        data: DataArg,
        #[arg(long, value_enum)]
        model: Option<Kind>,
        #[arg(long, value_enum)]
        target: Option<Target>,
    },
    /// Cross-validate the model suite and write the report.
    Evaluate {
        #[command(flatten)]
        data: DataArg,
        #[arg(long, value_enum, default_value_t = Mode::Personalized)]
        mode: Mode,
    },
    /// Random-forest feature importance (split gain and OOB permutation).
    Importance {
        #[command(flatten)]
        data: DataArg,
        /// Only this participant (bpm target); otherwise all participants
        /// pooled with a z-scored target.
        #[arg(long)]
        participant: Option<String>,
    },
    /// Fill heart-rate gaps with a trained model.
    Fill {
        #[command(flatten)]
        data: DataArg,
        #[arg(long)]
        model: PathBuf,
        /// Output CSV (default: <out>/filled.csv).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Configuration helpers.
    Config {
        #[command(subcommand)]
        action: ConfigAction,
    },
}

#[derive(Debug, Subcommand)]
enum ConfigAction {
    /// Print the full default configuration as TOML.
    PrintDefaults,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    Personalized,
    Generalized,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Target {
    Bpm,
    Zscore,
}

impl From<Target> for TargetKind {
    fn from(t: Target) -> Self {
        match t {
            Target::Bpm => TargetKind::Bpm,
            Target::Zscore => TargetKind::Zscore,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Deviation {
    None,
    Magnitude,
    All,
}

impl From<Deviation> for DeviationMode {
    fn from(d: Deviation) -> Self {
        match d {
            Deviation::None => DeviationMode::None,
            Deviation::Magnitude => DeviationMode::Magnitude,
            Deviation::All => DeviationMode::All,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Kind {
    Ridge,
    Svr,
    Forest,
}

impl From<Kind> for ModelKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Ridge => ModelKind::Ridge,
            Kind::Svr => ModelKind::Svr,
            Kind::Forest => ModelKind::Forest,
        }
    }
}

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<Error>()) {
        Some(e) if e.is_numeric() => EXIT_NUMERIC,
        Some(Error::InvalidParameter(_)) => EXIT_USAGE,
        _ => EXIT_DATA,
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(usize::from(n))
            .build_global()?;
    }
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.set_seed(seed);
    }
    if let Some(out) = cli.out {
        cfg.paths.out_dir = out;
    }
    let data_dir = |arg: DataArg| arg.data.unwrap_or_else(|| cfg.paths.data_dir.clone());

    match cli.command {
        Command::Simulate {
            participants,
            days,
            gaps,
            noise_free,
        } => {
            if let Some(n) = participants {
                cfg.simulate.n_participants = n as usize;
            }
            if let Some(d) = days {
                cfg.simulate.duration_s = (d * 86_400.0).round() as i64;
            }
            if !gaps.is_empty() {
                cfg.gaps.patterns = gaps;
            }
            if noise_free {
                cfg.simulate.noise_std = 0.0;
            }
            commands::simulate(&cfg)
        }
        Command::Align(arg) => commands::align(&cfg, &data_dir(arg)),
        Command::Featurize { data, target, deviation } => {
            if let Some(d) = deviation {
                cfg.features.deviation_mode = d.into();
            }
            let target = target.map_or(TargetKind::Bpm, Into::into);
            commands::featurize(&cfg, &data_dir(data), target)
        }
        Command::Train { data, model, target } => {
            if let Some(m) = model {
                cfg.train.model = m.into();
            }
            if let Some(t) = target {
                cfg.train.target = t.into();
            }
            commands::train(&cfg, &data_dir(data))
        }
        Command::Evaluate { data, mode } => {
            commands::evaluate(&cfg, &data_dir(data), matches!(mode, Mode::Generalized))
        }
        Command::Importance { data, participant } => {
            commands::importance(&cfg, &data_dir(data), participant.as_deref())
        }
        Command::Fill { data, model, output } => {
            let output = output.unwrap_or_else(|| cfg.paths.out_dir.join("filled.csv"));
            commands::fill(&cfg, &data_dir(data), &model, &output)
        }
        Command::Config {
            action: ConfigAction::PrintDefaults,
        } => {
            print!("{}", RunConfig::default().to_toml());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fedstock_cli::commands::{compare, evaluate, synth, train};
use fedstock_cli::{CliError, ExperimentConfig, Layout};
use fedstock_core::fl::Regime;

#[derive(Debug, Parser)]
#[command(name = "fedstock", version, about = "Federated livestock growth forecasting experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; defaults to the machine's parallelism.
    #[arg(long)]
    threads: Option<usize>,
    /// Master seed; overrides `seed`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the dataset and its manifest.
    Synth {
        #[command(flatten)]
        common: Common,
    },
    /// Train one regime on the generated dataset.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = parse_regime)]
        regime: Regime,
    },
    /// Score trained regimes on the test split (all trained ones by default).
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = parse_regime)]
        regime: Vec<Regime>,
    },
    /// Side-by-side table, strata and small-farm series from reports.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Regime the deltas are measured against.
        #[arg(long, value_parser = parse_regime)]
        baseline: Option<Regime>,
        /// Report files; defaults to every report under `<out>/reports`.
        reports: Vec<PathBuf>,
    },
}

fn parse_regime(s: &str) -> Result<Regime, String> {
    Regime::parse(s).ok_or_else(|| {
        let names: Vec<&str> = Regime::ALL.iter().map(|r| r.name()).collect();
        format!("unknown regime `{s}`; expected one of {}", names.join(", "))
    })
}

fn setup(common: &Common) -> Result<(ExperimentConfig, Layout), CliError> {
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = common.threads {
        if n == 0 {
            return Err(CliError::config("--threads", "must be >= 1"));
        }
        pool = pool.num_threads(n);
    }
    // only fails if a global pool already exists, which cannot happen here
    let _ = pool.build_global();
    let layout = Layout::new(cfg.output_dir.clone());
    Ok((cfg, layout))
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Synth { common } => {
            let (cfg, layout) = setup(&common)?;
            let m = synth(&cfg, &layout)?;
            println!("{} farms, {} animals -> {}", m.totals.farms, m.totals.animals, layout.data_dir().display());
        }
        Command::Train { common, regime } => {
            let (cfg, layout) = setup(&common)?;
            let record = train(&cfg, &layout, regime)?;
            for d in &record.diverged {
                eprintln!("warning: client {} diverged in epoch {} and was dropped", d.client, d.epoch);
            }
            println!("{regime} -> {}", layout.model_dir(regime).display());
        }
        Command::Evaluate { common, regime } => {
            let (cfg, layout) = setup(&common)?;
            for r in evaluate(&cfg, &layout, &regime)? {
                println!("{:<13} RMSE {:.3} kg  MAE {:.3} kg", r.regime.name(), r.report.overall.rmse_kg, r.report.overall.mae_kg);
            }
        }
        Command::Compare { common, baseline, reports } => {
            let (cfg, layout) = setup(&common)?;
            for p in compare(&cfg, &layout, &reports, baseline)? {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("FEDSTOCK_LOG", "warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

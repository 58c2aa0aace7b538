use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use imdd::harness::{self, SweepKind};
use imdd::{ExperimentConfig, HarnessError};

#[derive(Parser)]
#[command(name = "imdd", version, about = "Simulated IM/DD link with learned transceivers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (must exist); overrides `out_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for evaluation and sweeps.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate transmissions and write train/test datasets.
    Generate,
    /// Train end to end (auto-encoder) or train a PAM receiver on data.
    Train,
    /// Retrain the auto-encoder receiver on the recorded training set.
    Retrain,
    /// Fit the Volterra equalizer.
    FitVolterra,
    /// Evaluate the model on the test set.
    Eval {
        /// Estimation window; defaults to the configured one.
        #[arg(long)]
        window: Option<usize>,
    },
    /// Sweep distance or estimation window.
    Sweep {
        #[arg(long, value_enum)]
        kind: SweepKind,
        /// Comma-separated grid; defaults to the configured grid.
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<f64>>,
    },
    /// Collect eval and sweep results into report.csv.
    Report,
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| HarnessError::Config(format!("thread pool: {e}")))?;
    }
    let load = || -> Result<ExperimentConfig, HarnessError> {
        let path = cli
            .config
            .as_ref()
            .ok_or_else(|| HarnessError::Config("--config is required".into()))?;
        let mut cfg = ExperimentConfig::load(path)?;
        if let Some(s) = cli.seed {
            cfg.seed = s;
        }
        Ok(cfg)
    };
    let out_dir = |cfg: Option<&ExperimentConfig>| -> Result<PathBuf, HarnessError> {
        cli.out
            .clone()
            .or_else(|| cfg.and_then(|c| c.out_dir.clone()))
            .ok_or_else(|| HarnessError::Config("no output directory: pass --out or set out_dir".into()))
    };
    match &cli.command {
        Command::Report => {
            let cfg = cli.config.as_ref().map(|_| load()).transpose()?;
            let rows = harness::cmd_report(&out_dir(cfg.as_ref())?)?;
            println!("source,scheme,distance,W,BLER,BER,hdfec_pass");
            for r in rows {
                let e = r.row;
                println!(
                    "{},{},{},{},{},{},{}",
                    r.source, e.scheme, e.distance, e.window, e.bler, e.ber, e.hdfec_pass
                );
            }
        }
        cmd => {
            let cfg = load()?;
            let out = out_dir(Some(&cfg))?;
            match cmd {
                Command::Generate => print_manifest(harness::cmd_generate(&cfg, &out)?),
                Command::Train => print_manifest(harness::cmd_train(&cfg, &out)?),
                Command::Retrain => print_manifest(harness::cmd_retrain(&cfg, &out)?),
                Command::FitVolterra => print_manifest(harness::cmd_fit_volterra(&cfg, &out)?),
                Command::Eval { window } => write_csv(&[harness::cmd_eval(&cfg, &out, *window)?])?,
                Command::Sweep { kind, grid } => write_csv(&harness::cmd_sweep(&cfg, &out, *kind, grid.clone())?)?,
                Command::Report => unreachable!(),
            }
        }
    }
    Ok(())
}

fn write_csv<T: serde::Serialize>(rows: &[T]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(std::io::stdout());
    for r in rows {
        w.serialize(r).map_err(|e| HarnessError::Io {
            path: PathBuf::from("<stdout>"),
            source: std::io::Error::other(e.to_string()),
        })?;
    }
    w.flush().map_err(|e| HarnessError::Io {
        path: PathBuf::from("<stdout>"),
        source: e,
    })
}

fn print_manifest(m: harness::Manifest) {
    println!("file,sha256");
    for (file, hash) in &m.files {
        println!("{file},{hash}");
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

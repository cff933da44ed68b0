use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use lqrbo::{execute, ExperimentConfig, HarnessError, Study};

#[derive(Parser)]
#[command(version, about = "LQR-kernel Bayesian optimization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Prior and posterior fits of each kernel on two example plants
    FitDemo,
    /// GP regression accuracy over random linear plants
    RmseStudy,
    /// Bayesian optimization regret on random linear plants
    BoStudy,
    /// Bayesian optimization regret on the sine plant
    BoNonlinear,
    /// Kernel values and Gram spectra
    KernelEval,
}

#[derive(Args)]
struct Common {
    /// JSON file merged onto the study preset
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of replicates
    #[arg(long, global = true)]
    replicates: Option<usize>,
    /// Output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Comma-separated kernel ids
    #[arg(long, global = true, value_delimiter = ',')]
    kernels: Option<Vec<String>>,
}

impl Command {
    fn study(self) -> Study {
        match self {
            Command::FitDemo => Study::FitDemo,
            Command::RmseStudy => Study::RmseStudy,
            Command::BoStudy => Study::BoLinear,
            Command::BoNonlinear => Study::BoNonlinear,
            Command::KernelEval => Study::KernelEval,
        }
    }
}

fn configure(cli: &Cli) -> Result<ExperimentConfig, HarnessError> {
    let c = &cli.common;
    let mut cfg = ExperimentConfig::load(cli.command.study(), c.config.as_deref())?;
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    if let Some(n) = c.replicates {
        cfg.replicates = n;
    }
    if let Some(out) = &c.out {
        cfg.out = out.clone();
    }
    if let Some(ids) = &c.kernels {
        cfg.select_kernels(ids)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure(&cli).and_then(|cfg| execute(&cfg));
    match result {
        Ok(report) => {
            if let Some(s) = &report.summary {
                println!(
                    "{:<10} {:>3} {:>10} {:>10} {:>10} {:>5} {:>5} {:>5}",
                    "kernel", "N", "mean", "std", "median", "n", "excl", "fail"
                );
                let fmt = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.4}"));
                for r in &s.rows {
                    println!(
                        "{:<10} {:>3} {:>10} {:>10} {:>10} {:>5} {:>5} {:>5}",
                        r.kernel,
                        r.n_evals,
                        fmt(r.mean),
                        fmt(r.std),
                        fmt(r.median),
                        r.n,
                        r.n_excluded,
                        r.n_failed
                    );
                }
            }
            for f in &report.files {
                println!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use adabn::config::ExperimentConfig;
use adabn::datasets::load_dataset;
use adabn::experiment::{execute, Command, Results};
use adabn::report::emit_reports;
use adabn_core::train::{EpochMetrics, Observer};
use clap::{Args, Parser, Subcommand};

/// Train small CNNs with plain, absent or adaptively gated batch
/// normalization and write reports.
#[derive(Parser)]
#[command(name = "adabn", version)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Train one model on the first cross-validation fold.
    Train(Common),
    /// K-fold cross-validation of the configured scenario.
    Crossval(Common),
    /// Cross-validate all three scenarios for every batch size.
    Compare(Common),
    /// Gated-batch fractions per batch size, without training.
    Gatereport(Common),
    /// Finite-difference check of every layer gradient.
    Gradcheck(Common),
}

#[derive(Args)]
struct Common {
    /// Config file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Suppress progress lines on stderr.
    #[arg(long)]
    quiet: bool,
    /// `key=value` settings that override the config file.
    overrides: Vec<String>,
}

struct Progress {
    quiet: bool,
    fold: usize,
    folds: usize,
    started: Instant,
}

impl Observer for Progress {
    fn fold_start(&mut self, fold: usize, folds: usize) {
        self.fold = fold;
        self.folds = folds;
    }

    fn epoch_end(&mut self, m: &EpochMetrics) {
        if !self.quiet {
            eprintln!(
                "fold {}/{} epoch {:>2}  loss {:.4}  val acc {:.4}  ({:.0}s)",
                self.fold + 1,
                self.folds,
                m.epoch,
                m.mean_loss,
                m.val_accuracy,
                self.started.elapsed().as_secs_f64()
            );
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    let (command, common) = match cli.command {
        Sub::Train(c) => (Command::Train, c),
        Sub::Crossval(c) => (Command::Crossval, c),
        Sub::Compare(c) => (Command::Compare, c),
        Sub::Gatereport(c) => (Command::Gatereport, c),
        Sub::Gradcheck(c) => (Command::Gradcheck, c),
    };
    let cfg = ExperimentConfig::resolve(common.config.as_deref(), &common.overrides)?;
    let started = Instant::now();
    let mut progress = Progress { quiet: common.quiet, fold: 0, folds: 1, started };
    let results = execute(command, &cfg, || load_dataset(&cfg), &mut progress)?;
    let seconds = started.elapsed().as_secs_f64();
    let written = emit_reports(&common.out, command, &cfg, &results, seconds)?;
    let ok = match &results {
        Results::Gradcheck { report } => {
            for c in &report.checks {
                println!("{:<16} worst {:.3e}  tol {:.0e}  {}", c.layer, c.worst, c.tolerance, if c.passed() { "ok" } else { "FAIL" });
            }
            println!("{:<16} worst {:.3e}  tol {:.0e}", "composed", report.composed_worst, report.composed_tolerance);
            report.passed()
        }
        Results::Crossval { summary } => {
            println!("accuracy {}", adabn::report::percent_cell(summary.mean, summary.std));
            true
        }
        Results::Train { metrics, .. } => {
            println!("accuracy {:.6}", metrics.final_accuracy);
            true
        }
        _ => true,
    };
    for p in written {
        println!("wrote {}", p.display());
    }
    Ok(ok)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: gradient check failed");
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

//! `catn`: compression-aware training, compression and reporting.

use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand};

use catn_cli::commands;

#[derive(Parser)]
#[command(
    name = "catn",
    about = "Train small networks under low-rank / sparse-group regularizers, \
             then prune and factorize them with parameter/MAC accounting"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model from a config file.
    Train {
        /// Training config (key-value text; see README for the grammar).
        #[arg(long)]
        config: PathBuf,
        /// Output model path.
        #[arg(long)]
        out: PathBuf,
        /// Override the config's RNG seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Metrics log path (default: OUT with a .metrics.jsonl extension).
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Prune and factorize a trained model, writing a compression report.
    Compress {
        #[arg(long)]
        model: PathBuf,
        /// Fraction of singular-value energy to keep per layer, in (0, 1].
        #[arg(long)]
        energy: f64,
        /// Output path for the compressed model.
        #[arg(long)]
        out: PathBuf,
        /// Output path for the JSON report.
        #[arg(long)]
        report: PathBuf,
        /// Dataset SPEC for the accuracy columns (default: the eval/train
        /// data recorded in the model's config echo).
        #[arg(long)]
        data: Option<String>,
    },
    /// Print top-1 accuracy of a model on a dataset.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        /// Dataset SPEC (synth:, idx:, csv: or bin:).
        #[arg(long)]
        data: String,
    },
    /// Train, prune zeroed units at the reload epoch, and continue training
    /// the smaller network.
    ReloadFinetune {
        #[arg(long)]
        config: PathBuf,
        /// Epoch (1-based) after which to prune and reload; defaults to the
        /// config's reload_epoch.
        #[arg(long)]
        reload_epoch: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Consolidate compression reports into one CSV.
    Report {
        /// Report JSON files.
        #[arg(required = true)]
        paths: Vec<PathBuf>,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Train {
            config,
            out,
            seed,
            log,
        } => {
            let outcome = commands::cmd_train(&config, &out, seed, log.as_deref())?;
            if let Some(r) = outcome.records.last() {
                println!(
                    "trained {} epochs: loss {:.4}, eval accuracy {}, params {}",
                    r.epoch,
                    r.train_loss,
                    r.eval_accuracy
                        .map(|a| format!("{:.2}%", 100.0 * a))
                        .unwrap_or_else(|| "n/a".into()),
                    r.params
                );
            }
            println!("model written to {}", out.display());
        }
        Command::Compress {
            model,
            energy,
            out,
            report,
            data,
        } => {
            let file = commands::cmd_compress(&model, energy, &out, &report, data.as_deref())?;
            let t = &file.report.totals;
            println!(
                "params {} -> {} ({:+.1}%), MACs {} -> {} ({:+.1}%)",
                t.params_before,
                t.params_after,
                100.0 * (t.params_after as f64 / t.params_before as f64 - 1.0),
                t.macs_before,
                t.macs_after,
                100.0 * (t.macs_after as f64 / t.macs_before as f64 - 1.0),
            );
            if let (Some(a), Some(b)) = (file.report.accuracy_before, file.report.accuracy_after) {
                println!("accuracy {:.2}% -> {:.2}%", 100.0 * a, 100.0 * b);
            }
            println!("compressed model: {}", out.display());
            println!("report: {}", report.display());
        }
        Command::Evaluate { model, data } => {
            commands::cmd_evaluate(&model, &data)?;
        }
        Command::ReloadFinetune {
            config,
            reload_epoch,
            out,
            seed,
            log,
        } => {
            let outcome = commands::cmd_reload_finetune(
                &config,
                reload_epoch,
                &out,
                seed,
                log.as_deref(),
            )?;
            if let Some(r) = outcome.records.last() {
                println!(
                    "finished {} epochs (reload applied): params {}, eval accuracy {}",
                    r.epoch,
                    r.params,
                    r.eval_accuracy
                        .map(|a| format!("{:.2}%", 100.0 * a))
                        .unwrap_or_else(|| "n/a".into()),
                );
            }
            println!("model written to {}", out.display());
        }
        Command::Report { paths, out } => {
            commands::cmd_report(&paths, &out)?;
            println!("CSV written to {}", out.display());
        }
    }
    Ok(())
}

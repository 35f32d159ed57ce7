//! Subcommand implementations shared by the binary and the test suites.

use std::path::Path;

use anyhow::{Context, Result};

use catn_core::compressor::{compress_network, count_macs, count_params, CompressionConfig};

use crate::config::TrainConfig;
use crate::dataspec::load_eval_dataset;
use crate::model_file::ModelFile;
use crate::pipeline::{accuracy, run_training, TrainOutcome};
use crate::report::{ReportFile, REPORT_VERSION};

/// `train`: run the config, write the model, return the outcome.
pub fn cmd_train(
    config_path: &Path,
    out_path: &Path,
    seed_override: Option<u64>,
    log_path: Option<&Path>,
) -> Result<TrainOutcome> {
    let mut cfg = TrainConfig::parse_file(config_path)?;
    if let Some(seed) = seed_override {
        cfg.seed = seed;
    }
    let default_log = out_path.with_extension("metrics.jsonl");
    let log = log_path.unwrap_or(&default_log);
    // Plain training never reloads; the reload-finetune subcommand does.
    let outcome = run_training(&cfg, None, Some(log))?;
    outcome.model.save(out_path)?;
    Ok(outcome)
}

/// `reload-finetune`: train, prune at the reload epoch, keep training the
/// smaller network, write the final model.
pub fn cmd_reload_finetune(
    config_path: &Path,
    reload_epoch: Option<usize>,
    out_path: &Path,
    seed_override: Option<u64>,
    log_path: Option<&Path>,
) -> Result<TrainOutcome> {
    let mut cfg = TrainConfig::parse_file(config_path)?;
    if let Some(seed) = seed_override {
        cfg.seed = seed;
    }
    let reload_epoch = reload_epoch.or(cfg.reload_epoch).ok_or_else(|| {
        anyhow::anyhow!("pass --reload-epoch or set reload_epoch in the config")
    })?;
    if reload_epoch < 1 || reload_epoch >= cfg.epochs {
        anyhow::bail!(
            "reload epoch {reload_epoch} must be in [1, epochs) with epochs = {}",
            cfg.epochs
        );
    }
    let default_log = out_path.with_extension("metrics.jsonl");
    let log = log_path.unwrap_or(&default_log);
    let outcome = run_training(&cfg, Some(reload_epoch), Some(log))?;
    outcome.model.save(out_path)?;
    Ok(outcome)
}

/// `compress`: prune + factorize a saved model, write the compressed model
/// and the report. Accuracy before/after is measured on the config's eval
/// data when it can be loaded (or `data_override` when given).
pub fn cmd_compress(
    model_path: &Path,
    energy: f64,
    out_path: &Path,
    report_path: &Path,
    data_override: Option<&str>,
) -> Result<ReportFile> {
    let model = ModelFile::load(model_path)?;
    let cfg = TrainConfig::parse(&model.config_echo)
        .context("model's embedded config echo does not parse")?;

    let (compressed, mut report) =
        compress_network(&model.net, &CompressionConfig::with_energy(energy))?;

    let eval_spec = data_override
        .map(str::to_string)
        .or_else(|| cfg.eval_data.clone())
        .unwrap_or_else(|| cfg.data.clone());
    match load_eval_dataset(&eval_spec, &model.norm) {
        Ok(ds) => {
            report.accuracy_before = Some(accuracy(&model.net, &ds)?);
            report.accuracy_after = Some(accuracy(&compressed, &ds)?);
        }
        Err(e) => {
            eprintln!("note: skipping accuracy measurement ({e})");
        }
    }

    let compressed_model = ModelFile {
        net: compressed,
        seed: model.seed,
        epochs_trained: model.epochs_trained,
        config_echo: model.config_echo.clone(),
        norm: model.norm.clone(),
    };
    compressed_model.save(out_path)?;

    let file = ReportFile {
        version: REPORT_VERSION,
        model: model_path.display().to_string(),
        tau: cfg.tau,
        lambda_first: cfg.lambda_first,
        lambda_rest: cfg.lambda_rest,
        alpha: cfg.alpha,
        energy,
        report,
    };
    file.save(report_path)?;
    Ok(file)
}

/// `evaluate`: top-1 accuracy of a saved model on a dataset SPEC.
pub fn cmd_evaluate(model_path: &Path, data_spec: &str) -> Result<f64> {
    let model = ModelFile::load(model_path)?;
    let ds = load_eval_dataset(data_spec, &model.norm)?;
    let acc = accuracy(&model.net, &ds)?;
    println!(
        "{}",
        serde_json::json!({
            "model": model_path.display().to_string(),
            "samples": ds.len(),
            "accuracy": acc,
            "params": count_params(&model.net),
            "macs": count_macs(&model.net).map_err(anyhow::Error::from)?,
        })
    );
    Ok(acc)
}

/// `report`: consolidate report JSON files into a CSV.
pub fn cmd_report(paths: &[std::path::PathBuf], out_csv: &Path) -> Result<()> {
    let csv = crate::report::consolidate_csv(paths)?;
    std::fs::write(out_csv, csv)
        .with_context(|| format!("cannot write {}", out_csv.display()))?;
    Ok(())
}

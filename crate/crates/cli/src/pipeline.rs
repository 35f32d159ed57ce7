//! The training pipeline: proximal stochastic gradient descent with
//! per-epoch metrics, plus the reload-and-finetune variant that prunes the
//! network mid-training and continues on the smaller model.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use catn_core::compressor::{count_params, prune_zero_units};
use catn_core::data::{batches, derive_seed, permutation, Dataset};
use catn_core::linalg::effective_rank;
use catn_core::nn::{
    cross_entropy, reshape_kernel_to_matrix, sgd_step, MomentumState, Network, Tensor4,
};
use catn_core::regularizers::{apply_prox_schedule, regularizer_value};

use crate::config::{ProxFrequency, TrainConfig};
use crate::dataspec::DataSpec;
use crate::model_file::ModelFile;

const ZERO_UNIT_TOL: f64 = 1e-6;
const RANK_REL_TOL: f64 = 1e-7;

/// One line of the JSON-lines metrics log.
///
/// `median_batch_ms` is carried in memory but excluded from the metrics
/// log so that identical (config, seed, data) runs produce bit-identical
/// logs; wall-clock timings go to a separate `.timing.jsonl` file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based count of completed epochs.
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub eval_accuracy: Option<f64>,
    /// Regularizer value over the whole network.
    pub regularizer: f64,
    /// Fixed-probe-batch data loss plus the regularizer.
    pub objective: f64,
    /// Effective rank of each regularized layer's parameter matrix.
    pub effective_ranks: Vec<usize>,
    /// Units with (near-)zero parameter rows, per regularized layer.
    pub zeroed_units: Vec<usize>,
    pub params: usize,
    #[serde(skip, default)]
    pub median_batch_ms: f64,
    pub reloaded: bool,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: ModelFile,
    pub records: Vec<EpochRecord>,
    pub eval_accuracy: Option<f64>,
}

/// Top-1 accuracy of a network on a dataset (eval mode, chunked).
pub fn accuracy(net: &Network<f64>, ds: &Dataset<f64>) -> Result<f64> {
    let mut correct = 0usize;
    let chunk = 256;
    let mut start = 0;
    while start < ds.len() {
        let end = (start + chunk).min(ds.len());
        let idx: Vec<usize> = (start..end).collect();
        let (images, labels) = ds.gather(&idx);
        let logits = net.forward_eval(&images)?;
        for (i, &label) in labels.iter().enumerate() {
            if argmax(logits.row(i)) == label {
                correct += 1;
            }
        }
        start = end;
    }
    Ok(correct as f64 / ds.len() as f64)
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Flip each sample left-right with probability one half, seeded.
fn horizontal_flip(batch: &mut Tensor4<f64>, seed: u64) {
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let [n, c, h, w] = batch.dims();
    for b in 0..n {
        if !rng.random_bool(0.5) {
            continue;
        }
        for ci in 0..c {
            for y in 0..h {
                for x in 0..w / 2 {
                    let a = batch.at(b, ci, y, x);
                    let z = batch.at(b, ci, y, w - 1 - x);
                    *batch.at_mut(b, ci, y, x) = z;
                    *batch.at_mut(b, ci, y, w - 1 - x) = a;
                }
            }
        }
    }
}

/// `X.metrics.jsonl -> X.timing.jsonl`; any other name gets `.timing.jsonl`
/// appended.
fn timing_log_path(log: &Path) -> std::path::PathBuf {
    let s = log.display().to_string();
    match s.strip_suffix(".metrics.jsonl") {
        Some(stem) => std::path::PathBuf::from(format!("{stem}.timing.jsonl")),
        None => std::path::PathBuf::from(format!("{s}.timing.jsonl")),
    }
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mid = values.len() / 2;
    if values.len() % 2 == 0 {
        (values[mid - 1] + values[mid]) / 2.0
    } else {
        values[mid]
    }
}

fn per_layer_stats(net: &Network<f64>) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut ranks = Vec::new();
    let mut zeroed = Vec::new();
    for layer in &net.layers {
        if !layer.is_regularized() {
            continue;
        }
        let theta = reshape_kernel_to_matrix(layer)?;
        ranks.push(effective_rank(&theta, RANK_REL_TOL)?);
        let dead = (0..theta.rows())
            .filter(|&r| {
                theta.row(r).iter().map(|&x| x * x).sum::<f64>().sqrt() <= ZERO_UNIT_TOL
            })
            .count();
        zeroed.push(dead);
    }
    Ok((ranks, zeroed))
}

/// Train per the config. `reload_epoch = Some(e)` prunes zeroed units after
/// completing epoch `e` and continues training the smaller network.
pub fn run_training(
    cfg: &TrainConfig,
    reload_epoch: Option<usize>,
    log_path: Option<&Path>,
) -> Result<TrainOutcome> {
    let spec = DataSpec::parse(&cfg.data)?;
    let loaded = spec.load().context("loading training data")?;
    let mut train = loaded.train;
    let mut eval = match &cfg.eval_data {
        Some(s) => Some(DataSpec::parse(s)?.load().context("loading eval data")?.train),
        None => loaded.eval,
    };

    let norm = if cfg.normalize {
        let n = train.fit_normalizer();
        if let Some(e) = eval.as_mut() {
            e.apply_normalizer(&n);
        }
        Some(n)
    } else {
        None
    };

    let class_count = train.class_count;
    let mut net = cfg.build_network(train.sample_shape(), class_count)?;
    let has_bn = net
        .layers
        .iter()
        .any(|l| matches!(l, catn_core::nn::Layer::BatchNorm(_)));
    if has_bn && train.len() % cfg.batch_size == 1 {
        bail!(
            "dataset size {} with batch_size {} leaves a final batch of one sample; \
             batch normalization needs at least two -- adjust batch_size",
            train.len(),
            cfg.batch_size
        );
    }

    let mut momentum = MomentumState::zeros_like(&net);
    let mut records: Vec<EpochRecord> = Vec::with_capacity(cfg.epochs);
    let mut log_file = match log_path {
        Some(p) => Some(
            std::fs::File::create(p)
                .with_context(|| format!("cannot create metrics log {}", p.display()))?,
        ),
        None => None,
    };
    let mut timing_file = match log_path {
        Some(p) => {
            let t = timing_log_path(p);
            Some(
                std::fs::File::create(&t)
                    .with_context(|| format!("cannot create timing log {}", t.display()))?,
            )
        }
        None => None,
    };

    // Fixed probe batch for the objective trace.
    let probe_order = permutation(train.len(), derive_seed(cfg.seed, 0x0B5E, 0));
    let probe_idx: Vec<usize> = probe_order
        .into_iter()
        .take(cfg.batch_size.min(train.len()))
        .collect();
    let (probe_images, probe_labels) = train.gather(&probe_idx);

    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at_epoch(epoch);
        let epoch_batches = batches(&train, cfg.batch_size, derive_seed(cfg.seed, 0xE0C, epoch as u64));
        let mut losses = Vec::with_capacity(epoch_batches.len());
        let mut batch_ms = Vec::with_capacity(epoch_batches.len());
        let mut since_prox = 0usize;

        for (bi, (images, labels)) in epoch_batches.into_iter().enumerate() {
            let mut images = images;
            if cfg.hflip {
                horizontal_flip(
                    &mut images,
                    derive_seed(cfg.seed, 0xF11A + epoch as u64, bi as u64),
                );
            }
            let t0 = Instant::now();
            let (logits, cache) = net.forward_train(&images)?;
            let (loss, dlogits) = cross_entropy(&logits, &labels)?;
            if !loss.is_finite() {
                bail!("training diverged (non-finite loss) at epoch {}", epoch + 1);
            }
            let grads = net.backward(&cache, &dlogits)?;
            sgd_step(&mut net, &grads, &mut momentum, lr, cfg.momentum, cfg.weight_decay)?;
            batch_ms.push(t0.elapsed().as_secs_f64() * 1e3);
            losses.push(loss);

            since_prox += 1;
            if let ProxFrequency::Batches(n) = cfg.prox_frequency {
                if since_prox == n {
                    let rc = cfg.reg_config(&net, lr);
                    apply_prox_schedule(&mut net, &rc)?;
                    since_prox = 0;
                }
            }
        }
        // Per-epoch prox after the epoch's SGD steps (also flushes a
        // partial batch-frequency window).
        let run_epoch_prox = match cfg.prox_frequency {
            ProxFrequency::Epoch => true,
            ProxFrequency::Batches(_) => since_prox > 0,
        };
        if run_epoch_prox {
            let rc = cfg.reg_config(&net, lr);
            apply_prox_schedule(&mut net, &rc)?;
        }

        let mut reloaded = false;
        if reload_epoch == Some(epoch + 1) {
            let outcome = prune_zero_units(&net, ZERO_UNIT_TOL)
                .context("pruning at the reload epoch")?;
            for warning in &outcome.warnings {
                eprintln!("reload: {warning}");
            }
            net = outcome.network;
            momentum = MomentumState::zeros_like(&net);
            reloaded = true;
        }

        let train_loss = losses.iter().sum::<f64>() / losses.len().max(1) as f64;
        let eval_accuracy = match &eval {
            Some(ds) => Some(accuracy(&net, ds)?),
            None => None,
        };
        let reg = regularizer_value(&net, &cfg.reg_config(&net, lr))?;
        let probe_logits = net.forward_eval(&probe_images)?;
        let (probe_loss, _) = cross_entropy(&probe_logits, &probe_labels)?;
        let (effective_ranks, zeroed_units) = per_layer_stats(&net)?;
        let record = EpochRecord {
            epoch: epoch + 1,
            lr,
            train_loss,
            eval_accuracy,
            regularizer: reg,
            objective: probe_loss + reg,
            effective_ranks,
            zeroed_units,
            params: count_params(&net),
            median_batch_ms: median(&mut batch_ms),
            reloaded,
        };
        if let Some(f) = log_file.as_mut() {
            let line = serde_json::to_string(&record)?;
            writeln!(f, "{line}").context("writing metrics log")?;
        }
        if let Some(f) = timing_file.as_mut() {
            let line = serde_json::json!({
                "epoch": record.epoch,
                "median_batch_ms": record.median_batch_ms,
                "reloaded": record.reloaded,
            });
            writeln!(f, "{line}").context("writing timing log")?;
        }
        records.push(record);
    }

    let eval_accuracy = records.last().and_then(|r| r.eval_accuracy);
    Ok(TrainOutcome {
        model: ModelFile {
            net,
            seed: cfg.seed,
            epochs_trained: cfg.epochs as u32,
            config_echo: cfg.raw.clone(),
            norm,
        },
        records,
        eval_accuracy,
    })
}

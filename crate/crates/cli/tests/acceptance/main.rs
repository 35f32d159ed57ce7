//! Acceptance suite. Each test prints one `criterion N: PASS` line (visible
//! with `--nocapture`); failures panic with a matching FAIL message.
//!
//! Training-based criteria share a process-wide cache of trained models so
//! that the tau grid is trained once, and all training runs are serialized
//! through one lock so timing measurements are not distorted by concurrent
//! numeric work.

mod oracles;

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};
use std::time::Instant;

use catn_cli::config::TrainConfig;
use catn_cli::dataspec::DataSpec;
use catn_cli::pipeline::{accuracy, run_training, TrainOutcome};
use catn_core::compressor::{
    compress_network, count_macs, count_params, factorize_layer,
    CompressionConfig,
};
use catn_core::data::Dataset;
use catn_core::linalg::{nuclear_norm, svt, Matrix};
use catn_core::nn::{
    BatchNormLayer, ConvKind, ConvLayer, DenseLayer, Layer, Network, Tensor4,
};
use catn_core::regularizers::{prox_nuclear_layer, prox_sparse_group_lasso};
use oracles::OMat;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Planted rank-2 teacher task shared by the training criteria.
fn grid_config(tau: f64, lambda: f64, epochs: usize) -> String {
    format!(
        "\
data = synth:seed=21,train=4096,eval=1024,in=1x7x7,conv=16x3x3@2,conv=16x3x3@2,classes=10
epochs = {epochs}
batch_size = 64
lr = 0.1
lr_decay = 0.1
lr_period = 38
momentum = 0.9
weight_decay = 1e-4
tau = {tau}
alpha = 0.2
lambda = {lambda}
seed = 33

[layer]
type = conv
filters = 16
kernel = 3x3
padding = valid
batchnorm = false
relu = true

[layer]
type = conv
filters = 48
kernel = 3x3
padding = valid
batchnorm = false
relu = true

[layer]
type = dense
units = 10
"
    )
}

fn train_lock() -> &'static Mutex<HashMap<String, Arc<TrainOutcome>>> {
    static CACHE: OnceLock<Mutex<HashMap<String, Arc<TrainOutcome>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Train (or fetch) the model for a config; all training is serialized by
/// the cache lock.
fn trained(config_text: &str, reload_epoch: Option<usize>) -> Arc<TrainOutcome> {
    let key = format!("{reload_epoch:?}::{config_text}");
    let mut cache = train_lock().lock().unwrap();
    if let Some(hit) = cache.get(&key) {
        return hit.clone();
    }
    let cfg = TrainConfig::parse(config_text).expect("acceptance config parses");
    let outcome = Arc::new(run_training(&cfg, reload_epoch, None).expect("training succeeds"));
    cache.insert(key, outcome.clone());
    outcome
}

/// Run training without consulting or filling the cache (for independent
/// repeat runs); still holds the lock so runs never overlap.
fn trained_fresh(config_text: &str) -> TrainOutcome {
    let _guard = train_lock().lock().unwrap();
    let cfg = TrainConfig::parse(config_text).expect("acceptance config parses");
    run_training(&cfg, None, None).expect("training succeeds")
}

fn eval_set(config_text: &str) -> Dataset<f64> {
    let cfg = TrainConfig::parse(config_text).unwrap();
    DataSpec::parse(&cfg.data)
        .unwrap()
        .load()
        .unwrap()
        .eval
        .expect("grid config has an eval split")
}

fn check(criterion: usize, cond: bool, detail: &str) {
    assert!(cond, "criterion {criterion}: FAIL — {detail}");
}

#[test]
fn criterion_1_prox_operators_match_numeric_minimizers() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xACC1);

    // Singular-value thresholding vs ADMM on the proximity objective.
    let mut worst_svt = 0.0f64;
    for case in 0..200u64 {
        let rows = rng.random_range(2..=12);
        let cols = rng.random_range(2..=9);
        let a = OMat::random(rows, cols, 51_000 + case);
        let rho: f64 = rng.random_range(0.05..1.0);
        let tau: f64 = rng.random_range(0.05..3.0);
        let ours = prox_nuclear_layer(
            &Matrix::from_vec(rows, cols, a.data.clone()).unwrap(),
            rho,
            tau,
        )
        .unwrap();
        let oracle = oracles::minimize_nuclear_prox(&a, rho * tau);
        let gap = ours
            .data()
            .iter()
            .zip(&oracle.data)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt();
        worst_svt = worst_svt.max(gap);
        check(
            1,
            gap <= 1e-4,
            &format!("svt case {case} ({rows}x{cols}): Frobenius gap {gap}"),
        );
    }

    // Sparse group Lasso prox vs ADMM built from one-term proximal maps.
    let mut worst_sgl = 0.0f64;
    for case in 0..200 {
        let p = rng.random_range(1..=12);
        let theta: Vec<f64> = (0..p).map(|_| rng.random_range(-3.0..3.0)).collect();
        let rho: f64 = rng.random_range(0.05..1.0);
        let lambda: f64 = rng.random_range(0.05..2.0);
        let alpha: f64 = rng.random_range(0.0..=1.0);
        let ours = prox_sparse_group_lasso(&theta, rho, lambda, alpha).unwrap();
        let oracle = oracles::minimize_sgl_prox(
            &theta,
            rho * alpha * lambda,
            rho * (1.0 - alpha) * lambda * (p as f64).sqrt(),
        );
        let gap = ours
            .iter()
            .zip(&oracle)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt();
        worst_sgl = worst_sgl.max(gap);
        check(1, gap <= 1e-5, &format!("sgl case {case} (P={p}): gap {gap}"));
    }

    println!(
        "criterion 1: PASS — 200 svt cases (worst gap {worst_svt:.2e} <= 1e-4), \
         200 sgl cases (worst gap {worst_sgl:.2e} <= 1e-5), {:.1}s",
        t0.elapsed().as_secs_f64()
    );
}

#[test]
fn criterion_2_gradients_match_finite_differences() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xACC2);
    let mut random_batch = |dims: [usize; 4]| {
        let len = dims.iter().product();
        Tensor4::from_vec(dims, (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    };
    let conv = |kind, k, c, dh, dw, stride, pad, seed| {
        Layer::Conv(ConvLayer::<f64>::he_init(kind, k, c, dh, dw, stride, pad, pad, seed))
    };

    let mut total = 0usize;
    // Layer-kind grid over strides, paddings and shapes.
    let cases: Vec<(&str, Network<f64>, [usize; 4], Vec<usize>)> = vec![
        (
            "conv 3x3 same + dense",
            Network::new(
                (2, 5, 5),
                vec![
                    conv(ConvKind::Full, 3, 2, 3, 3, 1, 1, 1),
                    Layer::Relu,
                    Layer::Flatten,
                    Layer::Dense(DenseLayer::he_init(3, 75, 2)),
                ],
            )
            .unwrap(),
            [2, 2, 5, 5],
            vec![0, 2],
        ),
        (
            "conv 3x3 stride 2 valid",
            Network::new(
                (1, 6, 6),
                vec![
                    conv(ConvKind::Full, 2, 1, 3, 3, 2, 0, 3),
                    Layer::Relu,
                    Layer::Flatten,
                    Layer::Dense(DenseLayer::he_init(2, 8, 4)),
                ],
            )
            .unwrap(),
            [2, 1, 6, 6],
            vec![1, 0],
        ),
        (
            "conv 2x2 even kernel",
            Network::new(
                (1, 5, 5),
                vec![
                    conv(ConvKind::Full, 2, 1, 2, 2, 1, 0, 5),
                    Layer::Flatten,
                    Layer::Dense(DenseLayer::he_init(2, 32, 6)),
                ],
            )
            .unwrap(),
            [2, 1, 5, 5],
            vec![0, 1],
        ),
        (
            "conv 3x3 stride 2 pad 1",
            Network::new(
                (2, 5, 5),
                vec![
                    conv(ConvKind::Full, 2, 2, 3, 3, 2, 1, 7),
                    Layer::Flatten,
                    Layer::Dense(DenseLayer::he_init(2, 18, 8)),
                ],
            )
            .unwrap(),
            [2, 2, 5, 5],
            vec![1, 1],
        ),
        (
            "1x1 conv",
            Network::new(
                (3, 4, 4),
                vec![
                    conv(ConvKind::Full, 2, 3, 1, 1, 1, 0, 9),
                    Layer::Relu,
                    Layer::Flatten,
                    Layer::Dense(DenseLayer::he_init(3, 32, 10)),
                ],
            )
            .unwrap(),
            [2, 3, 4, 4],
            vec![2, 0],
        ),
        (
            "decomposed vertical/horizontal pair",
            Network::new(
                (1, 6, 6),
                vec![
                    conv(ConvKind::Vertical, 3, 1, 3, 1, 1, 0, 11),
                    Layer::Relu,
                    conv(ConvKind::Horizontal, 2, 3, 1, 3, 1, 0, 12),
                    Layer::Relu,
                    Layer::Flatten,
                    Layer::Dense(DenseLayer::he_init(2, 32, 13)),
                ],
            )
            .unwrap(),
            [2, 1, 6, 6],
            vec![0, 1],
        ),
        (
            "conv + batchnorm",
            Network::new(
                (1, 5, 5),
                vec![
                    conv(ConvKind::Full, 3, 1, 3, 3, 1, 1, 14),
                    Layer::BatchNorm(BatchNormLayer::new(3)),
                    Layer::Relu,
                    Layer::Flatten,
                    Layer::Dense(DenseLayer::he_init(2, 75, 15)),
                ],
            )
            .unwrap(),
            [3, 1, 5, 5],
            vec![0, 1, 1],
        ),
        (
            "dense stack",
            Network::new(
                (6, 1, 1),
                vec![
                    Layer::Dense(DenseLayer::he_init(5, 6, 16)),
                    Layer::Relu,
                    Layer::Dense(DenseLayer::he_init(3, 5, 17)),
                ],
            )
            .unwrap(),
            [4, 6, 1, 1],
            vec![0, 1, 2, 0],
        ),
    ];
    for (name, net, dims, labels) in cases {
        let batch = random_batch(dims);
        total += oracles::check_gradients(name, &net, &batch, &labels, 1e-4);
    }
    println!(
        "criterion 2: PASS — {total} parameters over 8 layer-kind/stride/padding cases \
         at rel 1e-4, {:.1}s",
        t0.elapsed().as_secs_f64()
    );
}

#[test]
fn criterion_3_rank_shrinkage_and_unit_zeroing() {
    let t0 = Instant::now();
    let baseline = trained(&grid_config(0.0, 0.0, 55), None);
    let base_rank: usize = baseline.records.last().unwrap().effective_ranks.iter().sum();
    let base_acc = baseline.eval_accuracy.unwrap();

    let mut summary = format!("baseline sum-rank {base_rank}, acc {base_acc:.4}");
    let mut qualifying = false;
    for tau in [1.0, 5.0, 10.0] {
        let run = trained(&grid_config(tau, 0.0, 55), None);
        let last = run.records.last().unwrap();
        let sum_rank: usize = last.effective_ranks.iter().sum();
        let zeroed: usize = last.zeroed_units.iter().sum();
        let acc = run.eval_accuracy.unwrap();
        check(
            3,
            sum_rank < base_rank,
            &format!("tau {tau}: summed rank {sum_rank} not below baseline {base_rank}"),
        );
        if zeroed >= 1 && acc >= base_acc - 0.02 {
            qualifying = true;
        }
        summary.push_str(&format!(
            "; tau {tau}: rank {sum_rank}, zeroed {zeroed}, acc {acc:.4}"
        ));
    }
    check(
        3,
        qualifying,
        &format!("no tau produced >=1 zeroed unit within 2 points of baseline ({summary})"),
    );
    println!(
        "criterion 3: PASS — {summary}, {:.0}s",
        t0.elapsed().as_secs_f64()
    );
}

#[test]
fn criterion_4_compression_aware_beats_post_hoc() {
    let t0 = Instant::now();
    let energy = 1.0;
    let eval = eval_set(&grid_config(0.0, 0.0, 55));
    let cfg = CompressionConfig::with_energy(energy);

    let mut params = Vec::new();
    let mut accs = Vec::new();
    for (tau, lambda) in [(0.0, 0.0), (5.0, 0.0), (5.0, 0.03)] {
        let run = trained(&grid_config(tau, lambda, 55), None);
        let before = accuracy(&run.model.net, &eval).unwrap();
        let (compressed, report) = compress_network(&run.model.net, &cfg).unwrap();
        let after = accuracy(&compressed, &eval).unwrap();
        check(
            4,
            after >= before - 0.01,
            &format!(
                "pipeline tau={tau} lambda={lambda}: compression dropped accuracy \
                 {before:.4} -> {after:.4} (more than 1 point)"
            ),
        );
        params.push(report.totals.params_after);
        accs.push(after);
    }
    check(
        4,
        params[1] < params[0],
        &format!("tau>0 compress ({}) not below tau=0 compress ({})", params[1], params[0]),
    );
    check(
        4,
        params[2] < params[1],
        &format!(
            "tau>0 + group Lasso compress ({}) not below tau>0 compress ({})",
            params[2], params[1]
        ),
    );
    println!(
        "criterion 4: PASS — params at energy {energy}: baseline {} > low-rank {} > \
         low-rank+group {} (accs {:.4}/{:.4}/{:.4}), {:.0}s",
        params[0],
        params[1],
        params[2],
        accs[0],
        accs[1],
        accs[2],
        t0.elapsed().as_secs_f64()
    );
}

#[test]
fn criterion_5_full_energy_compression_is_lossless() {
    let t0 = Instant::now();
    let run = trained(&grid_config(5.0, 0.03, 55), None);
    let eval = eval_set(&grid_config(5.0, 0.03, 55));
    assert_eq!(eval.len(), 1024);

    let (compressed, report) =
        compress_network(&run.model.net, &CompressionConfig::with_energy(1.0)).unwrap();
    check(
        5,
        report.totals.params_after < report.totals.params_before,
        "full-energy compression did not shrink the planted-task model at all",
    );

    let before = run.model.net.forward_eval(&eval.images).unwrap();
    let after = compressed.forward_eval(&eval.images).unwrap();
    let mut max_abs = 0.0f64;
    for (x, y) in before.data().iter().zip(after.data()) {
        max_abs = max_abs.max((x - y).abs());
    }
    check(
        5,
        max_abs <= 1e-8,
        &format!("logit max-abs difference {max_abs:.3e} exceeds 1e-8"),
    );
    let mut flipped = 0usize;
    for i in 0..before.rows() {
        let pa = argmax(before.row(i));
        let pb = argmax(after.row(i));
        if pa != pb {
            flipped += 1;
        }
    }
    check(5, flipped == 0, &format!("{flipped} predictions changed"));
    println!(
        "criterion 5: PASS — 1024 samples, 0 prediction changes, logit max-abs diff \
         {max_abs:.2e} <= 1e-8 (params {} -> {}), {:.0}s",
        report.totals.params_before,
        report.totals.params_after,
        t0.elapsed().as_secs_f64()
    );
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

#[test]
fn criterion_6_accounting_is_exact() {
    let t0 = Instant::now();
    // MAC counter vs the literal loop-count oracle over a 20-configuration
    // grid of kernel shapes, strides and paddings.
    let mut checked = 0u64;
    for (k, dh, dw, stride, pad) in [
        (4usize, 3usize, 3usize, 1usize, 0usize),
        (4, 3, 3, 1, 1),
        (8, 3, 3, 2, 1),
        (2, 1, 1, 1, 0),
        (6, 5, 5, 1, 2),
        (3, 2, 2, 1, 0),
        (5, 3, 1, 1, 0),
        (5, 1, 3, 1, 0),
        (7, 3, 3, 3, 0),
        (1, 7, 7, 1, 3),
    ] {
        for c in [1usize, 3] {
            let (_, oh, ow) = Layer::Conv(ConvLayer::<f64>::he_init(
                ConvKind::Full,
                k,
                c,
                dh,
                dw,
                stride,
                pad,
                pad,
                600 + checked,
            ))
            .output_shape((c, 12, 12))
            .unwrap();
            let dense_in = k * oh * ow;
            let net = Network::new(
                (c, 12, 12),
                vec![
                    Layer::Conv(ConvLayer::<f64>::he_init(
                        ConvKind::Full,
                        k,
                        c,
                        dh,
                        dw,
                        stride,
                        pad,
                        pad,
                        600 + checked,
                    )),
                    Layer::Relu,
                    Layer::Flatten,
                    Layer::Dense(DenseLayer::he_init(4, dense_in, 700 + checked)),
                ],
            )
            .unwrap();
            let ours = count_macs(&net).unwrap();
            let oracle = oracles::macs_by_loop_count(&net);
            check(
                6,
                ours == oracle,
                &format!("config {checked}: count_macs {ours} != loop oracle {oracle}"),
            );
            checked += 1;
        }
    }
    check(6, checked == 20, "grid must cover 20 configurations");

    // Factorized-layer parameter counts: exactly r*(C*dH*dW + K) + K.
    for (k, c, d, rank, seed) in [
        (8usize, 3usize, 3usize, 2usize, 801u64),
        (16, 4, 3, 5, 802),
        (6, 1, 5, 1, 803),
        (12, 2, 1, 2, 804),
    ] {
        let layer = Layer::Conv(ConvLayer::<f64>::he_init(
            ConvKind::Full,
            k,
            c,
            d,
            d,
            1,
            0,
            0,
            seed,
        ));
        let (a, b) = factorize_layer(&layer, rank).unwrap();
        let net = Network::new((c, 10, 10), vec![a, b]).unwrap();
        let expect = rank * (c * d * d + k) + k;
        let got = count_params(&net);
        check(
            6,
            got == expect,
            &format!("factorized K={k} C={c} d={d} r={rank}: {got} params != formula {expect}"),
        );
    }
    println!(
        "criterion 6: PASS — MAC counts exact on 20 configurations, factorized parameter \
         formula exact on 4 layers, {:.1}s",
        t0.elapsed().as_secs_f64()
    );
}

#[test]
fn criterion_7_reload_and_finetune_speedup() {
    let t0 = Instant::now();
    let heavy = grid_config(1.0, 0.2, 50);
    let no_reload = trained(&heavy, None);
    let reload = trained(&heavy, Some(15));

    let tail = |o: &TrainOutcome| -> Vec<f64> {
        o.records
            .iter()
            .filter(|r| r.epoch > 15)
            .map(|r| r.median_batch_ms)
            .collect()
    };
    let mut a = tail(&no_reload);
    let mut b = tail(&reload);
    let med = |v: &mut Vec<f64>| -> f64 {
        v.sort_by(|x, y| x.partial_cmp(y).unwrap());
        v[v.len() / 2]
    };
    let (ma, mb) = (med(&mut a), med(&mut b));
    check(
        7,
        mb <= 0.8 * ma,
        &format!("median post-reload batch time {mb:.2}ms not 20% below no-reload {ma:.2}ms"),
    );

    let pa = no_reload.records.last().unwrap().params;
    let pb = reload.records.last().unwrap().params;
    check(
        7,
        (pb as f64) <= 0.5 * pa as f64,
        &format!("reload params {pb} not at least 50% below no-reload {pa}"),
    );

    let (acc_a, acc_b) = (
        no_reload.eval_accuracy.unwrap(),
        reload.eval_accuracy.unwrap(),
    );
    check(
        7,
        acc_b >= acc_a - 0.02,
        &format!("reload accuracy {acc_b:.4} more than 2 points below no-reload {acc_a:.4}"),
    );
    println!(
        "criterion 7: PASS — step time {ma:.2} -> {mb:.2} ms ({:.0}% lower), params {pa} -> {pb} \
         ({:.0}% lower), accuracy {acc_a:.4} -> {acc_b:.4}, {:.0}s",
        100.0 * (1.0 - mb / ma),
        100.0 * (1.0 - pb as f64 / pa as f64),
        t0.elapsed().as_secs_f64()
    );
}

#[test]
fn criterion_8_training_is_bit_deterministic() {
    let t0 = Instant::now();
    let config = grid_config(10.0, 0.0, 55);
    let first = trained(&config, None);
    let second = trained_fresh(&config);

    let dir = tempfile::tempdir().unwrap();
    let pa = dir.path().join("a.catn");
    let pb = dir.path().join("b.catn");
    first.model.save(&pa).unwrap();
    second.model.save(&pb).unwrap();
    let bytes_a = std::fs::read(&pa).unwrap();
    let bytes_b = std::fs::read(&pb).unwrap();
    check(
        8,
        bytes_a == bytes_b,
        "two same-seed runs produced different model files",
    );
    println!(
        "criterion 8: PASS — two runs of the criterion-3 configuration produced identical \
         {}-byte model files, {:.0}s",
        bytes_a.len(),
        t0.elapsed().as_secs_f64()
    );
}

#[test]
fn criterion_9_prox_invariant_suite() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xACC9);
    let frob = |a: &[f64], b: &[f64]| -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
    };

    for case in 0..500u64 {
        let rows = rng.random_range(2..=6);
        let cols = rng.random_range(2..=6);
        let a = OMat::random(rows, cols, 90_000 + case);
        let b = OMat::random(rows, cols, 91_000 + case);
        let ma = Matrix::from_vec(rows, cols, a.data.clone()).unwrap();
        let mb = Matrix::from_vec(rows, cols, b.data.clone()).unwrap();
        let rho: f64 = rng.random_range(0.05..1.0);
        let tau: f64 = rng.random_range(0.0..2.5);

        // Non-expansiveness of the nuclear prox.
        let pa = prox_nuclear_layer(&ma, rho, tau).unwrap();
        let pb = prox_nuclear_layer(&mb, rho, tau).unwrap();
        check(
            9,
            frob(pa.data(), pb.data()) <= frob(&a.data, &b.data) + 1e-10,
            &format!("nuclear prox expanded distances (case {case})"),
        );

        // Nuclear-norm monotonicity and the svt semigroup.
        let s: f64 = rng.random_range(0.0..1.0);
        let t: f64 = rng.random_range(0.0..1.0);
        check(
            9,
            nuclear_norm(&pa).unwrap() <= nuclear_norm(&ma).unwrap() + 1e-10,
            &format!("nuclear norm grew under svt (case {case})"),
        );
        let two_step = svt(&svt(&ma, s).unwrap(), t).unwrap();
        let one_step = svt(&ma, s + t).unwrap();
        check(
            9,
            frob(two_step.data(), one_step.data()) <= 1e-8,
            &format!("svt semigroup violated (case {case})"),
        );

        // Sparse group Lasso: non-expansiveness plus the alpha limits.
        let p = rng.random_range(1..=10);
        let va: Vec<f64> = (0..p).map(|_| rng.random_range(-2.0..2.0)).collect();
        let vb: Vec<f64> = (0..p).map(|_| rng.random_range(-2.0..2.0)).collect();
        let lambda: f64 = rng.random_range(0.0..2.0);
        let alpha: f64 = rng.random_range(0.0..=1.0);
        let sa = prox_sparse_group_lasso(&va, rho, lambda, alpha).unwrap();
        let sb = prox_sparse_group_lasso(&vb, rho, lambda, alpha).unwrap();
        check(
            9,
            frob(&sa, &sb) <= frob(&va, &vb) + 1e-10,
            &format!("sgl prox expanded distances (case {case})"),
        );

        let pure_l1 = prox_sparse_group_lasso(&va, rho, lambda, 1.0).unwrap();
        for (o, &x) in pure_l1.iter().zip(&va) {
            let expect = x.signum() * (x.abs() - rho * lambda).max(0.0);
            check(
                9,
                (o - expect).abs() <= 1e-12,
                &format!("alpha=1 did not reduce to soft-thresholding (case {case})"),
            );
        }
        let pure_group = prox_sparse_group_lasso(&va, rho, lambda, 0.0).unwrap();
        let norm: f64 = va.iter().map(|x| x * x).sum::<f64>().sqrt();
        let thr = rho * lambda * (p as f64).sqrt();
        if norm <= thr {
            check(
                9,
                pure_group.iter().all(|&x| x == 0.0),
                &format!("alpha=0 should zero small vectors (case {case})"),
            );
        } else {
            let scale = 1.0 - thr / norm;
            for (o, &x) in pure_group.iter().zip(&va) {
                check(
                    9,
                    (o - x * scale).abs() <= 1e-12,
                    &format!("alpha=0 did not reduce to group shrinkage (case {case})"),
                );
            }
        }
    }
    println!(
        "criterion 9: PASS — 500 cases per invariant (non-expansiveness, semigroup, \
         monotonicity, alpha limits), {:.1}s",
        t0.elapsed().as_secs_f64()
    );
}

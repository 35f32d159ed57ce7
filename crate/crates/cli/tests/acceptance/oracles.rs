//! Independent numeric oracles for the acceptance suite: a cyclic Jacobi
//! symmetric eigensolver, ADMM minimizers of the proximal objectives built
//! from one-term proximal maps only, a central-finite-difference gradient
//! checker, and a literal loop-count MAC oracle. None of this calls the
//! crate's SVD, prox, or accounting code.

use catn_core::nn::{cross_entropy, Layer, LayerGrad, Network, Tensor4};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Debug)]
pub struct OMat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl OMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        OMat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn at_mut(&mut self, i: usize, j: usize) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }

    pub fn random(rows: usize, cols: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        OMat {
            rows,
            cols,
            data: (0..rows * cols).map(|_| rng.random_range(-2.0..2.0)).collect(),
        }
    }

    pub fn frob(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// Two-sided cyclic Jacobi eigensolver for symmetric matrices; eigenvalues
/// descending, eigenvectors as columns.
pub fn sym_eigen(a: &OMat) -> (Vec<f64>, OMat) {
    assert_eq!(a.rows, a.cols);
    let n = a.rows;
    let mut m = a.clone();
    let mut v = OMat::zeros(n, n);
    for i in 0..n {
        *v.at_mut(i, i) = 1.0;
    }
    for _ in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += m.at(p, q).abs();
            }
        }
        if off < 1e-14 * (1.0 + m.frob()) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m.at(p, q);
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let theta = (m.at(q, q) - m.at(p, p)) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for i in 0..n {
                    let mip = m.at(i, p);
                    let miq = m.at(i, q);
                    *m.at_mut(i, p) = c * mip - s * miq;
                    *m.at_mut(i, q) = s * mip + c * miq;
                }
                for j in 0..n {
                    let mpj = m.at(p, j);
                    let mqj = m.at(q, j);
                    *m.at_mut(p, j) = c * mpj - s * mqj;
                    *m.at_mut(q, j) = s * mpj + c * mqj;
                }
                for i in 0..n {
                    let vip = v.at(i, p);
                    let viq = v.at(i, q);
                    *v.at_mut(i, p) = c * vip - s * viq;
                    *v.at_mut(i, q) = s * vip + c * viq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m.at(j, j).partial_cmp(&m.at(i, i)).unwrap());
    let evals: Vec<f64> = order.iter().map(|&i| m.at(i, i)).collect();
    let mut evecs = OMat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        for i in 0..n {
            *evecs.at_mut(i, dst) = v.at(i, src);
        }
    }
    (evals, evecs)
}

/// Nuclear-norm proximal map through the symmetric embedding
/// `[[0, M], [M^T, 0]]`: shrink positive eigenvalues, rebuild.
fn nuclear_prox_by_embedding(m: &OMat, thresh: f64) -> OMat {
    let (r, c) = (m.rows, m.cols);
    let n = r + c;
    let mut b = OMat::zeros(n, n);
    for i in 0..r {
        for j in 0..c {
            *b.at_mut(i, r + j) = m.at(i, j);
            *b.at_mut(r + j, i) = m.at(i, j);
        }
    }
    let (evals, evecs) = sym_eigen(&b);
    let mut out = OMat::zeros(r, c);
    for (idx, &lam) in evals.iter().enumerate() {
        if lam <= 0.0 {
            continue;
        }
        let keep = (lam - thresh).max(0.0);
        if keep == 0.0 {
            continue;
        }
        for i in 0..r {
            for j in 0..c {
                *out.at_mut(i, j) += 2.0 * keep * evecs.at(i, idx) * evecs.at(r + j, idx);
            }
        }
    }
    out
}

/// Numeric minimizer of `0.5 * ||X - A||_F^2 + t * ||X||_*` by ADMM; stops
/// on a small primal residual.
pub fn minimize_nuclear_prox(a: &OMat, t: f64) -> OMat {
    let beta = 1.0;
    let mut z = a.clone();
    let mut u = OMat::zeros(a.rows, a.cols);
    let mut x = a.clone();
    for _ in 0..400 {
        for i in 0..x.data.len() {
            x.data[i] = (a.data[i] + beta * (z.data[i] - u.data[i])) / (1.0 + beta);
        }
        let mut xu = x.clone();
        for i in 0..xu.data.len() {
            xu.data[i] += u.data[i];
        }
        let z_prev = z.clone();
        z = nuclear_prox_by_embedding(&xu, t / beta);
        let mut primal = 0.0;
        let mut dual = 0.0;
        for i in 0..u.data.len() {
            let r = x.data[i] - z.data[i];
            u.data[i] += r;
            primal += r * r;
            let d = beta * (z.data[i] - z_prev.data[i]);
            dual += d * d;
        }
        // Both residuals must vanish; the primal one alone can be zero at
        // non-optimal points early in the iteration.
        if primal.sqrt() <= 1e-9 && dual.sqrt() <= 1e-9 {
            break;
        }
    }
    z
}

/// Numeric minimizer of `0.5 * ||x - v||^2 + a * ||x||_1 + b * ||x||_2` by
/// two-block ADMM with the standard one-term proximal maps, independent of
/// the two-stage closed form under test.
pub fn minimize_sgl_prox(v: &[f64], a: f64, b: f64) -> Vec<f64> {
    let beta = 1.0;
    let n = v.len();
    let mut x = v.to_vec();
    let mut z = v.to_vec();
    let mut u = vec![0.0; n];
    for _ in 0..4000 {
        for i in 0..n {
            let target = (v[i] + beta * (z[i] - u[i])) / (1.0 + beta);
            x[i] = soft(target, a / (1.0 + beta));
        }
        let z_prev = z.clone();
        let mut norm = 0.0;
        for i in 0..n {
            z[i] = x[i] + u[i];
            norm += z[i] * z[i];
        }
        norm = norm.sqrt();
        let thr = b / beta;
        if norm <= thr {
            z.iter_mut().for_each(|zi| *zi = 0.0);
        } else {
            let scale = 1.0 - thr / norm;
            z.iter_mut().for_each(|zi| *zi *= scale);
        }
        let mut primal = 0.0;
        let mut dual = 0.0;
        for i in 0..n {
            let r = x[i] - z[i];
            u[i] += r;
            primal += r * r;
            let d = beta * (z[i] - z_prev[i]);
            dual += d * d;
        }
        if primal.sqrt() <= 1e-11 && dual.sqrt() <= 1e-11 {
            break;
        }
    }
    z
}

fn soft(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

// ---- gradient checking --------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Slot {
    Weights,
    Bias,
    Gamma,
    Beta,
}

pub const SLOTS: [Slot; 4] = [Slot::Weights, Slot::Bias, Slot::Gamma, Slot::Beta];

pub fn param_count(layer: &Layer<f64>, slot: Slot) -> usize {
    match (layer, slot) {
        (Layer::Conv(c), Slot::Weights) => c.weights.len(),
        (Layer::Conv(c), Slot::Bias) => c.bias.len(),
        (Layer::Dense(d), Slot::Weights) => d.weights.rows() * d.weights.cols(),
        (Layer::Dense(d), Slot::Bias) => d.bias.len(),
        (Layer::BatchNorm(bn), Slot::Gamma) => bn.gamma.len(),
        (Layer::BatchNorm(bn), Slot::Beta) => bn.beta.len(),
        _ => 0,
    }
}

pub fn nudge(net: &mut Network<f64>, layer: usize, slot: Slot, idx: usize, delta: f64) {
    match (&mut net.layers[layer], slot) {
        (Layer::Conv(c), Slot::Weights) => c.weights.data_mut()[idx] += delta,
        (Layer::Conv(c), Slot::Bias) => c.bias[idx] += delta,
        (Layer::Dense(d), Slot::Weights) => d.weights.data_mut()[idx] += delta,
        (Layer::Dense(d), Slot::Bias) => d.bias[idx] += delta,
        (Layer::BatchNorm(bn), Slot::Gamma) => bn.gamma[idx] += delta,
        (Layer::BatchNorm(bn), Slot::Beta) => bn.beta[idx] += delta,
        _ => unreachable!(),
    }
}

pub fn analytic(grads: &LayerGrad<f64>, slot: Slot, idx: usize) -> f64 {
    match (grads, slot) {
        (LayerGrad::Conv { weights, .. }, Slot::Weights) => weights.data()[idx],
        (LayerGrad::Conv { bias, .. }, Slot::Bias) => bias[idx],
        (LayerGrad::Dense { weights, .. }, Slot::Weights) => weights.data()[idx],
        (LayerGrad::Dense { bias, .. }, Slot::Bias) => bias[idx],
        (LayerGrad::BatchNorm { gamma, .. }, Slot::Gamma) => gamma[idx],
        (LayerGrad::BatchNorm { beta, .. }, Slot::Beta) => beta[idx],
        _ => unreachable!(),
    }
}

pub fn loss_of(net: &Network<f64>, batch: &Tensor4<f64>, labels: &[usize]) -> f64 {
    let mut net = net.clone();
    let (logits, _) = net.forward_train(batch).unwrap();
    cross_entropy(&logits, labels).unwrap().0
}

/// Check every parameter against central finite differences; returns the
/// number of parameters checked, panicking on the first violation.
///
/// When the default step fails, retries with smaller steps: a ReLU kink
/// inside the difference window corrupts the estimate at one step size but
/// not at much smaller ones, while a genuine backward bug fails at every
/// step.
pub fn check_gradients(
    name: &str,
    net: &Network<f64>,
    batch: &Tensor4<f64>,
    labels: &[usize],
    rel_tol: f64,
) -> usize {
    const ABS_FLOOR: f64 = 1e-7;
    let mut fwd = net.clone();
    let (logits, cache) = fwd.forward_train(batch).unwrap();
    let (_, dlogits) = cross_entropy(&logits, labels).unwrap();
    let grads = fwd.backward(&cache, &dlogits).unwrap();

    let l0 = loss_of(net, batch, labels);
    let mut checked = 0;
    for li in 0..net.layers.len() {
        for slot in SLOTS {
            for idx in 0..param_count(&net.layers[li], slot) {
                let a = analytic(&grads.items[li], slot, idx);
                let mut ok = false;
                let mut last_numeric = f64::NAN;
                for step in [1e-5, 1e-6, 1e-7] {
                    let mut plus = net.clone();
                    nudge(&mut plus, li, slot, idx, step);
                    let mut minus = net.clone();
                    nudge(&mut minus, li, slot, idx, -step);
                    let numeric = (loss_of(&plus, batch, labels)
                        - loss_of(&minus, batch, labels))
                        / (2.0 * step);
                    last_numeric = numeric;
                    let err = (a - numeric).abs();
                    if err <= ABS_FLOOR || err <= rel_tol * a.abs().max(numeric.abs()) {
                        ok = true;
                        break;
                    }
                }
                if !ok {
                    // A pre-activation sitting exactly on a ReLU kink makes
                    // the central difference average the two one-sided
                    // slopes; the backward pass reports a valid one-sided
                    // derivative, so accept a match with either side.
                    let h = 1e-6;
                    let mut plus = net.clone();
                    nudge(&mut plus, li, slot, idx, h);
                    let mut minus = net.clone();
                    nudge(&mut minus, li, slot, idx, -h);
                    let fwd_slope = (loss_of(&plus, batch, labels) - l0) / h;
                    let bwd_slope = (l0 - loss_of(&minus, batch, labels)) / h;
                    let tol = |n: f64| (rel_tol * a.abs().max(n.abs())).max(1e-5);
                    ok = (a - fwd_slope).abs() <= tol(fwd_slope)
                        || (a - bwd_slope).abs() <= tol(bwd_slope);
                }
                assert!(
                    ok,
                    "criterion 2: FAIL — {name}: layer {li} {slot:?}[{idx}] analytic {a} \
                     vs numeric {last_numeric}"
                );
                checked += 1;
            }
        }
    }
    checked
}

/// Brute-force MAC oracle: one increment per multiply-accumulate in the
/// naive convolution/dense loop nest.
pub fn macs_by_loop_count(net: &Network<f64>) -> usize {
    let shapes = net.shapes().unwrap();
    let mut total = 0usize;
    for (i, layer) in net.layers.iter().enumerate() {
        match layer {
            Layer::Conv(c) => {
                let [k, ci, dh, dw] = c.weights.dims();
                let (_, oh, ow) = shapes[i + 1];
                for _ in 0..k {
                    for _ in 0..oh {
                        for _ in 0..ow {
                            for _ in 0..ci {
                                for _ in 0..dh {
                                    for _ in 0..dw {
                                        total += 1;
                                    }
                                }
                            }
                        }
                    }
                }
            }
            Layer::Dense(d) => {
                for _ in 0..d.weights.rows() {
                    for _ in 0..d.weights.cols() {
                        total += 1;
                    }
                }
            }
            _ => {}
        }
    }
    total
}

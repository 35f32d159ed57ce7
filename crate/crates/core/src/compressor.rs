//! Post-training compression: prune zeroed-out units with channel
//! propagation, select per-layer ranks from singular-value energy, factorize
//! layers through their SVD, and account for parameters and MACs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{svd, Matrix};
use crate::nn::{
    reshape_kernel_to_matrix, ConvKind, ConvLayer, DenseLayer, Layer, Network, Tensor4,
};
use crate::scalar::{real, Real};

/// Tolerances and the energy target steering compression.
#[derive(Debug, Clone, Copy)]
pub struct CompressionConfig<T> {
    /// Fraction of singular-value mass to keep per layer, in (0, 1].
    pub energy: T,
    /// A unit whose parameter-row L2 norm is at or below this is a removal
    /// candidate.
    pub zero_unit_tol: T,
    /// Singular values at or below `rel_tol * s_1` count as zero.
    pub zero_sv_rel_tol: T,
}

impl<T: Real> CompressionConfig<T> {
    pub fn with_energy(energy: T) -> Self {
        CompressionConfig {
            energy,
            zero_unit_tol: real(1e-6),
            zero_sv_rel_tol: real(1e-7),
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.energy > T::zero() && self.energy <= T::one()) {
            return Err(Error::InvalidArgument(format!(
                "energy must be in (0,1], got {}",
                self.energy
            )));
        }
        if self.zero_unit_tol < T::zero() || self.zero_sv_rel_tol < T::zero() {
            return Err(Error::InvalidArgument("tolerances must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Per-layer compression record, indexed by the layer's position in the
/// input network.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayerReport {
    pub index: usize,
    pub kind: String,
    /// Output units surviving pruning (parametric layers only).
    pub kept_units: Option<usize>,
    /// Input channels after upstream pruning (parametric layers only).
    pub in_channels: Option<usize>,
    /// Selected rank (parametric layers only; recorded even when the layer
    /// is kept intact).
    pub rank: Option<usize>,
    pub factorized: bool,
    pub params_before: usize,
    pub params_after: usize,
    pub macs_before: usize,
    pub macs_after: usize,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ReportTotals {
    pub params_before: usize,
    pub params_after: usize,
    pub macs_before: usize,
    pub macs_after: usize,
}

/// Outcome of [`compress_network`]; accuracy fields are filled by callers
/// that hold an evaluation set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompressionReport {
    pub layers: Vec<LayerReport>,
    pub totals: ReportTotals,
    pub accuracy_before: Option<f64>,
    pub accuracy_after: Option<f64>,
    pub warnings: Vec<String>,
}

/// A unit removed by pruning.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrunedUnit {
    pub layer: usize,
    pub unit: usize,
}

/// Result of [`prune_zero_units`].
#[derive(Debug, Clone)]
pub struct PruneResult<T> {
    pub network: Network<T>,
    pub removed: Vec<PrunedUnit>,
    pub warnings: Vec<String>,
}

/// Smallest prefix of the kept singular values whose sum reaches
/// `energy * total`. Values at or below `rel_tol * s_1` are dropped first.
/// Returns 0 only when every value is zero.
pub fn select_rank_by_energy<T: Real>(
    singular_values: &[T],
    energy: T,
    rel_tol: T,
) -> Result<usize> {
    if !(energy > T::zero() && energy <= T::one()) {
        return Err(Error::InvalidArgument(format!(
            "energy must be in (0,1], got {energy}"
        )));
    }
    for w in singular_values.windows(2) {
        if w[1] > w[0] {
            return Err(Error::InvalidArgument(
                "singular values must be nonincreasing".into(),
            ));
        }
    }
    if singular_values.iter().any(|&s| s < T::zero()) {
        return Err(Error::InvalidArgument("singular values must be nonnegative".into()));
    }
    let s1 = singular_values.first().copied().unwrap_or_else(T::zero);
    let cut = rel_tol * s1;
    let kept: Vec<T> = singular_values
        .iter()
        .copied()
        .filter(|&s| s > cut && s > T::zero())
        .collect();
    if kept.is_empty() {
        return Ok(0);
    }
    let total: T = kept.iter().copied().sum();
    let target = energy * total;
    let mut prefix = T::zero();
    for (i, &s) in kept.iter().enumerate() {
        prefix += s;
        if prefix >= target {
            return Ok(i + 1);
        }
    }
    Ok(kept.len())
}

/// Total learnable scalars: weights, biases and batch-norm gamma/beta.
pub fn count_params<T: Real>(net: &Network<T>) -> usize {
    net.layers.iter().map(layer_params).sum()
}

fn layer_params<T: Real>(layer: &Layer<T>) -> usize {
    match layer {
        Layer::Conv(c) => c.weights.len() + c.bias.len(),
        Layer::Dense(d) => d.weights.rows() * d.weights.cols() + d.bias.len(),
        Layer::BatchNorm(bn) => 2 * bn.channels(),
        Layer::Relu | Layer::Flatten => 0,
    }
}

/// Multiply-accumulate count for one forward pass of a single sample:
/// `P * C * K * dH * dW` per convolution (P = output pixels), `in * out`
/// per dense layer, zero for batch norm and activations.
pub fn count_macs<T: Real>(net: &Network<T>) -> Result<usize> {
    let shapes = net.shapes()?;
    Ok(net
        .layers
        .iter()
        .enumerate()
        .map(|(i, layer)| layer_macs(layer, shapes[i + 1]))
        .sum())
}

fn layer_macs<T: Real>(layer: &Layer<T>, out_shape: (usize, usize, usize)) -> usize {
    match layer {
        Layer::Conv(c) => {
            let [k, ci, dh, dw] = c.weights.dims();
            let (_, oh, ow) = out_shape;
            oh * ow * ci * k * dh * dw
        }
        Layer::Dense(d) => d.weights.rows() * d.weights.cols(),
        _ => 0,
    }
}

/// Delete units whose parameter rows have (near-)zero norm, removing the
/// consumer's matching input-channel slices and batch-norm entries in
/// lockstep.
///
/// A zero-weight unit still emits its bias as a constant feature map; the
/// constant (transformed through intervening batch-norm/ReLU in eval
/// semantics) is folded into the consumer's biases before deletion, so the
/// eval-mode network function is preserved. Units whose constant cannot be
/// folded exactly (nonzero constant into a padded convolution) are kept.
/// The last remaining unit of a layer is never removed; layers where every
/// unit is a candidate keep their largest one and emit a warning record.
pub fn prune_zero_units<T: Real>(net: &Network<T>, tol: T) -> Result<PruneResult<T>> {
    if tol < T::zero() {
        return Err(Error::InvalidArgument(format!(
            "prune tolerance must be nonnegative, got {tol}"
        )));
    }
    let mut out = net.clone();
    let mut removed = Vec::new();
    let mut warnings = Vec::new();

    let mut li = 0;
    while li < out.layers.len() {
        if !out.layers[li].is_parametric() {
            li += 1;
            continue;
        }
        let Some(consumer) = next_parametric(&out, li) else {
            // Output head: its units are the network outputs.
            break;
        };
        let theta = reshape_kernel_to_matrix(&out.layers[li])?;
        let norms: Vec<T> = (0..theta.rows())
            .map(|r| theta.row(r).iter().map(|&x| x * x).sum::<T>().sqrt())
            .collect();

        let bias = layer_bias(&out.layers[li]);
        let shapes = out.shapes()?;
        let mut candidates: Vec<(usize, T)> = Vec::new();
        for (u, &norm) in norms.iter().enumerate() {
            if norm > tol {
                continue;
            }
            let constant = constant_through_chain(&out, li + 1, consumer, u, bias[u]);
            if foldable(&out.layers[consumer], constant) {
                candidates.push((u, constant));
            }
        }
        if candidates.len() == norms.len() && !candidates.is_empty() {
            // Keep the unit with the largest row norm; lowest index on ties.
            let mut keep = 0;
            for u in 1..norms.len() {
                if norms[u] > norms[keep] {
                    keep = u;
                }
            }
            candidates.retain(|&(u, _)| u != keep);
            warnings.push(format!(
                "layer {li}: all {} units near zero; keeping unit {keep}",
                norms.len()
            ));
        }
        if candidates.is_empty() {
            li += 1;
            continue;
        }

        // Producer output spatial extent, for flatten index remapping.
        let (_, prod_h, prod_w) = shapes[li + 1];
        fold_constants(
            &mut out.layers[consumer],
            &candidates,
            prod_h * prod_w,
        );
        let drop: Vec<usize> = candidates.iter().map(|&(u, _)| u).collect();
        delete_units(&mut out.layers[li], &drop);
        for mid in (li + 1)..consumer {
            if let Layer::BatchNorm(bn) = &mut out.layers[mid] {
                retain_indices(&mut bn.gamma, &drop);
                retain_indices(&mut bn.beta, &drop);
                retain_indices(&mut bn.running_mean, &drop);
                retain_indices(&mut bn.running_var, &drop);
            }
        }
        delete_input_channels(&mut out.layers[consumer], &drop, prod_h * prod_w)?;
        for u in &drop {
            removed.push(PrunedUnit {
                layer: li,
                unit: *u,
            });
        }
        out.shapes()?; // invariant check after surgery
        li += 1;
    }

    Ok(PruneResult {
        network: out,
        removed,
        warnings,
    })
}

fn next_parametric<T: Real>(net: &Network<T>, after: usize) -> Option<usize> {
    ((after + 1)..net.layers.len()).find(|&j| net.layers[j].is_parametric())
}

fn layer_bias<T: Real>(layer: &Layer<T>) -> Vec<T> {
    match layer {
        Layer::Conv(c) if c.bias.is_empty() => vec![T::zero(); c.out_channels()],
        Layer::Conv(c) => c.bias.clone(),
        Layer::Dense(d) if d.bias.is_empty() => vec![T::zero(); d.weights.rows()],
        Layer::Dense(d) => d.bias.clone(),
        _ => Vec::new(),
    }
}

/// Push a per-channel constant through the batch-norm/ReLU/flatten layers
/// between producer and consumer, in eval semantics.
fn constant_through_chain<T: Real>(
    net: &Network<T>,
    from: usize,
    to: usize,
    channel: usize,
    value: T,
) -> T {
    let mut v = value;
    for layer in &net.layers[from..to] {
        match layer {
            Layer::BatchNorm(bn) => {
                let inv = (bn.running_var[channel] + bn.eps).sqrt().recip();
                v = bn.gamma[channel] * (v - bn.running_mean[channel]) * inv + bn.beta[channel];
            }
            Layer::Relu => v = v.max(T::zero()),
            Layer::Flatten => {}
            _ => unreachable!("consumer is the first parametric layer"),
        }
    }
    v
}

/// Whether a constant input channel of this value can be absorbed into the
/// consumer's biases without changing its outputs. A padded convolution sees
/// the constant only inside the image, so only an exactly-zero constant is
/// safe there.
fn foldable<T: Real>(consumer: &Layer<T>, constant: T) -> bool {
    if constant.abs() <= real(1e-12) {
        return true;
    }
    match consumer {
        Layer::Dense(d) => !d.bias.is_empty(),
        Layer::Conv(c) => c.pad_h == 0 && c.pad_w == 0 && !c.bias.is_empty(),
        _ => false,
    }
}

fn fold_constants<T: Real>(
    consumer: &mut Layer<T>,
    candidates: &[(usize, T)],
    features_per_channel: usize,
) {
    for &(u, v) in candidates {
        if v.abs() <= real(1e-12) {
            continue;
        }
        match consumer {
            Layer::Conv(c) => {
                let [k, _, dh, dw] = c.weights.dims();
                for ko in 0..k {
                    let mut sum = T::zero();
                    for ky in 0..dh {
                        for kx in 0..dw {
                            sum += c.weights.at(ko, u, ky, kx);
                        }
                    }
                    c.bias[ko] += v * sum;
                }
            }
            Layer::Dense(d) => {
                let lo = u * features_per_channel;
                let hi = lo + features_per_channel;
                for ko in 0..d.weights.rows() {
                    let sum: T = d.weights.row(ko)[lo..hi].iter().copied().sum();
                    d.bias[ko] += v * sum;
                }
            }
            _ => unreachable!("fold target is parametric"),
        }
    }
}

fn delete_units<T: Real>(layer: &mut Layer<T>, drop: &[usize]) {
    match layer {
        Layer::Conv(c) => {
            let [k, ci, dh, dw] = c.weights.dims();
            let keep: Vec<usize> = (0..k).filter(|u| !drop.contains(u)).collect();
            let mut data = Vec::with_capacity(keep.len() * ci * dh * dw);
            for &u in &keep {
                let kernel = ci * dh * dw;
                data.extend_from_slice(&c.weights.data()[u * kernel..(u + 1) * kernel]);
            }
            c.weights = Tensor4::from_vec([keep.len(), ci, dh, dw], data)
                .expect("pruned kernel shape is consistent");
            if !c.bias.is_empty() {
                c.bias = keep.iter().map(|&u| c.bias[u]).collect();
            }
        }
        Layer::Dense(d) => {
            let keep: Vec<usize> = (0..d.weights.rows()).filter(|u| !drop.contains(u)).collect();
            let rows: Vec<Vec<T>> = keep.iter().map(|&u| d.weights.row(u).to_vec()).collect();
            d.weights = Matrix::from_rows(&rows).expect("pruned rows are uniform");
            if !d.bias.is_empty() {
                d.bias = keep.iter().map(|&u| d.bias[u]).collect();
            }
        }
        _ => unreachable!("pruned layer is parametric"),
    }
}

fn delete_input_channels<T: Real>(
    layer: &mut Layer<T>,
    drop: &[usize],
    features_per_channel: usize,
) -> Result<()> {
    match layer {
        Layer::Conv(c) => {
            let [k, ci, dh, dw] = c.weights.dims();
            let keep: Vec<usize> = (0..ci).filter(|u| !drop.contains(u)).collect();
            let mut data = Vec::with_capacity(k * keep.len() * dh * dw);
            for ko in 0..k {
                for &u in &keep {
                    for ky in 0..dh {
                        for kx in 0..dw {
                            data.push(c.weights.at(ko, u, ky, kx));
                        }
                    }
                }
            }
            c.weights = Tensor4::from_vec([k, keep.len(), dh, dw], data)?;
            Ok(())
        }
        Layer::Dense(d) => {
            let cols = d.weights.cols();
            let channels = cols / features_per_channel;
            let keep_cols: Vec<usize> = (0..cols)
                .filter(|&f| {
                    let ch = f / features_per_channel;
                    ch < channels && !drop.contains(&ch)
                })
                .collect();
            let rows: Vec<Vec<T>> = (0..d.weights.rows())
                .map(|r| {
                    let row = d.weights.row(r);
                    keep_cols.iter().map(|&f| row[f]).collect()
                })
                .collect();
            d.weights = Matrix::from_rows(&rows)?;
            Ok(())
        }
        _ => unreachable!("consumer is parametric"),
    }
}

fn retain_indices<T: Clone>(xs: &mut Vec<T>, drop: &[usize]) {
    let kept: Vec<T> = xs
        .iter()
        .enumerate()
        .filter(|(i, _)| !drop.contains(i))
        .map(|(_, x)| x.clone())
        .collect();
    *xs = kept;
}

/// Split a conv or dense layer into two thin layers through its SVD:
/// a spatial layer with `rank` output channels built from the right-singular
/// structure (no bias), followed by a 1x1 mixing layer carrying
/// `U * diag(s)` and the original bias.
///
/// With `rank` equal to the full non-zero rank the composite reproduces the
/// original linear map.
pub fn factorize_layer<T: Real>(layer: &Layer<T>, rank: usize) -> Result<(Layer<T>, Layer<T>)> {
    if !layer.is_parametric() {
        return Err(Error::InvalidArgument(format!(
            "cannot factorize layer kind {}",
            layer.kind_name()
        )));
    }
    let theta = reshape_kernel_to_matrix(layer)?;
    let (k, s) = (theta.rows(), theta.cols());
    if rank == 0 || rank > k.min(s) {
        return Err(Error::InvalidArgument(format!(
            "rank {rank} out of range for a {k}x{s} parameter matrix"
        )));
    }
    let dec = svd(&theta)?;

    // Spatial factor: rows of Vt reshaped to kernels.
    let mut basis = Matrix::zeros(rank, s);
    for r in 0..rank {
        basis.row_mut(r).copy_from_slice(dec.vt.row(r));
    }
    // Mixing factor: U * diag(s), keeping `rank` columns.
    let mut mix = Matrix::zeros(k, rank);
    for i in 0..k {
        for r in 0..rank {
            mix[(i, r)] = dec.u[(i, r)] * dec.singular_values[r];
        }
    }

    match layer {
        Layer::Conv(c) => {
            let [_, ci, dh, dw] = c.weights.dims();
            let spatial = ConvLayer {
                kind: c.kind,
                weights: Tensor4::from_vec([rank, ci, dh, dw], basis.data().to_vec())?,
                bias: Vec::new(),
                stride: c.stride,
                pad_h: c.pad_h,
                pad_w: c.pad_w,
                regularized: false,
                factored: true,
            };
            let mixing = ConvLayer {
                kind: ConvKind::Full,
                weights: Tensor4::from_vec([k, rank, 1, 1], mix.data().to_vec())?,
                bias: c.bias.clone(),
                stride: 1,
                pad_h: 0,
                pad_w: 0,
                regularized: false,
                factored: true,
            };
            Ok((Layer::Conv(spatial), Layer::Conv(mixing)))
        }
        Layer::Dense(d) => {
            let first = DenseLayer {
                weights: basis,
                bias: Vec::new(),
                regularized: false,
                factored: true,
            };
            let second = DenseLayer {
                weights: mix,
                bias: d.bias.clone(),
                regularized: false,
                factored: true,
            };
            Ok((Layer::Dense(first), Layer::Dense(second)))
        }
        _ => unreachable!("checked parametric above"),
    }
}

fn is_factored<T: Real>(layer: &Layer<T>) -> bool {
    match layer {
        Layer::Conv(c) => c.factored,
        Layer::Dense(d) => d.factored,
        _ => false,
    }
}

/// Full compression pipeline: prune zeroed units, then factorize each layer
/// whose selected rank satisfies the savings inequality
/// `r * (C*dH*dW + K) < C*dH*dW * K`; layers that would not shrink are kept
/// intact (their rank is still recorded). Layers produced by an earlier
/// factorization pass are left alone, which makes the pipeline idempotent.
pub fn compress_network<T: Real>(
    net: &Network<T>,
    cfg: &CompressionConfig<T>,
) -> Result<(Network<T>, CompressionReport)> {
    cfg.validate()?;
    let before_shapes = net.shapes()?;

    let pruned = prune_zero_units(net, cfg.zero_unit_tol)?;
    let mut warnings = pruned.warnings.clone();

    // Decide factorization per (pruned) layer; build the final layer stack
    // and remember which final layers each original layer became.
    let mut final_layers: Vec<Layer<T>> = Vec::new();
    let mut spans: Vec<(usize, usize)> = Vec::new(); // final-layer range per original layer
    let mut ranks: Vec<Option<usize>> = Vec::new();
    let mut factorized_flags: Vec<bool> = Vec::new();

    for layer in pruned.network.layers.iter() {
        let start = final_layers.len();
        if layer.is_parametric() && !is_factored(layer) {
            let theta = reshape_kernel_to_matrix(layer)?;
            let (k, s) = (theta.rows(), theta.cols());
            let sigma = svd(&theta)?.singular_values;
            let rank = select_rank_by_energy(&sigma, cfg.energy, cfg.zero_sv_rel_tol)?;
            ranks.push(Some(rank));
            let saves = rank >= 1 && rank * (s + k) < s * k;
            if saves {
                let (a, b) = factorize_layer(layer, rank)?;
                final_layers.push(a);
                final_layers.push(b);
                factorized_flags.push(true);
            } else {
                final_layers.push(layer.clone());
                factorized_flags.push(false);
            }
        } else {
            ranks.push(if layer.is_parametric() {
                // Pre-factored layer: keep as-is, record its full width.
                Some(reshape_kernel_to_matrix(layer)?.rows().min(
                    reshape_kernel_to_matrix(layer)?.cols(),
                ))
            } else {
                None
            });
            final_layers.push(layer.clone());
            factorized_flags.push(false);
        }
        spans.push((start, final_layers.len()));
    }

    let compressed = Network::new(net.input_shape, final_layers)?;
    let after_shapes = compressed.shapes()?;

    let mut layers = Vec::with_capacity(net.layers.len());
    let mut totals = ReportTotals::default();
    for (i, layer) in net.layers.iter().enumerate() {
        let params_before = layer_params(layer);
        let macs_before = layer_macs(layer, before_shapes[i + 1]);
        let (lo, hi) = spans[i];
        let mut params_after = 0;
        let mut macs_after = 0;
        for j in lo..hi {
            params_after += layer_params(&compressed.layers[j]);
            macs_after += layer_macs(&compressed.layers[j], after_shapes[j + 1]);
        }
        let (kept_units, in_channels) = if layer.is_parametric() {
            let theta = reshape_kernel_to_matrix(&pruned.network.layers[i])?;
            let in_ch = match &pruned.network.layers[i] {
                Layer::Conv(c) => c.in_channels(),
                Layer::Dense(d) => d.weights.cols(),
                _ => unreachable!(),
            };
            (Some(theta.rows()), Some(in_ch))
        } else {
            (None, None)
        };
        totals.params_before += params_before;
        totals.params_after += params_after;
        totals.macs_before += macs_before;
        totals.macs_after += macs_after;
        layers.push(LayerReport {
            index: i,
            kind: layer.kind_name().to_string(),
            kept_units,
            in_channels,
            rank: ranks[i],
            factorized: factorized_flags[i],
            params_before,
            params_after,
            macs_before,
            macs_after,
        });
    }
    if !pruned.removed.is_empty() {
        warnings.push(format!("pruned {} unit(s)", pruned.removed.len()));
    }

    Ok((
        compressed,
        CompressionReport {
            layers,
            totals,
            accuracy_before: None,
            accuracy_after: None,
            warnings,
        },
    ))
}

//! Training configuration: flat key-value text with one `[layer]` section
//! per layer block.
//!
//! Global keys come first; every `[layer]` section describes one conv or
//! dense block (optionally followed by batch norm and ReLU). The full
//! grammar is documented in the README.

use anyhow::{anyhow, bail, Context, Result};

use catn_core::data::derive_seed;
use catn_core::nn::{BatchNormLayer, ConvKind, ConvLayer, DenseLayer, Layer, Network};
use catn_core::regularizers::RegConfig;

/// When the proximal operators run during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProxFrequency {
    /// Once after each epoch's SGD steps (the default).
    Epoch,
    /// After every `n` batches, and at epoch end if steps remain.
    Batches(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    Same,
    Valid,
    Fixed(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKindSpec {
    Conv {
        kind: ConvKind,
        filters: usize,
        kh: usize,
        kw: usize,
    },
    Dense {
        units: usize,
    },
}

#[derive(Debug, Clone, Copy)]
pub struct LayerSpec {
    pub kind: LayerKindSpec,
    pub stride: usize,
    pub padding: Padding,
    pub batchnorm: bool,
    pub relu: bool,
    pub regularized: bool,
}

/// Everything the training pipeline needs, parsed from one config file.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub data: String,
    pub eval_data: Option<String>,
    pub normalize: bool,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub lr_decay: f64,
    pub lr_period: usize,
    pub momentum: f64,
    pub weight_decay: f64,
    pub tau: f64,
    pub alpha: f64,
    pub lambda_first: f64,
    pub lambda_rest: f64,
    pub first_group_size: usize,
    pub prox_frequency: ProxFrequency,
    pub energy: f64,
    pub seed: u64,
    pub reload_epoch: Option<usize>,
    pub hflip: bool,
    pub layers: Vec<LayerSpec>,
    /// Original file text, echoed into saved models.
    pub raw: String,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            data: String::new(),
            eval_data: None,
            normalize: false,
            epochs: 1,
            batch_size: 64,
            lr: 0.1,
            lr_decay: 0.1,
            lr_period: 20,
            momentum: 0.9,
            weight_decay: 1e-4,
            tau: 0.0,
            alpha: 0.2,
            lambda_first: 0.0,
            lambda_rest: 0.0,
            first_group_size: 2,
            prox_frequency: ProxFrequency::Epoch,
            energy: 1.0,
            seed: 0,
            reload_epoch: None,
            hflip: false,
            layers: Vec::new(),
            raw: String::new(),
        }
    }
}

impl TrainConfig {
    pub fn parse(text: &str) -> Result<TrainConfig> {
        let mut cfg = TrainConfig {
            raw: text.to_string(),
            ..TrainConfig::default()
        };
        let mut current: Option<PartialLayer> = None;
        let mut saw_data = false;

        for (lineno, raw_line) in text.lines().enumerate() {
            let line = strip_comment(raw_line).trim();
            if line.is_empty() {
                continue;
            }
            let at = |msg: String| anyhow!("line {}: {msg}", lineno + 1);
            if line == "[layer]" {
                if let Some(partial) = current.take() {
                    cfg.layers.push(partial.finish().map_err(at)?);
                }
                current = Some(PartialLayer::default());
                continue;
            }
            if line.starts_with('[') {
                return Err(at(format!("unknown section {line}")));
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| at(format!("expected `key = value`, got {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            if let Some(partial) = current.as_mut() {
                partial.set(key, value).map_err(at)?;
            } else {
                saw_data |= key == "data";
                cfg.set_global(key, value).map_err(at)?;
            }
        }
        if let Some(partial) = current.take() {
            cfg.layers.push(partial.finish().map_err(|m| anyhow!("{m}"))?);
        }

        if !saw_data {
            bail!("config is missing the `data` key");
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn parse_file(path: &std::path::Path) -> Result<TrainConfig> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        TrainConfig::parse(&text).with_context(|| format!("in config {}", path.display()))
    }

    fn set_global(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        match key {
            "data" => self.data = value.to_string(),
            "eval_data" => self.eval_data = Some(value.to_string()),
            "normalize" => self.normalize = parse_bool(key, value)?,
            "epochs" => self.epochs = parse_num(key, value)?,
            "batch_size" => self.batch_size = parse_num(key, value)?,
            "lr" => self.lr = parse_num(key, value)?,
            "lr_decay" => self.lr_decay = parse_num(key, value)?,
            "lr_period" => self.lr_period = parse_num(key, value)?,
            "momentum" => self.momentum = parse_num(key, value)?,
            "weight_decay" => self.weight_decay = parse_num(key, value)?,
            "tau" => self.tau = parse_num(key, value)?,
            "alpha" => self.alpha = parse_num(key, value)?,
            "lambda" => {
                let l: f64 = parse_num(key, value)?;
                self.lambda_first = l;
                self.lambda_rest = l;
            }
            "lambda_first" => self.lambda_first = parse_num(key, value)?,
            "lambda_rest" => self.lambda_rest = parse_num(key, value)?,
            "first_group_size" => self.first_group_size = parse_num(key, value)?,
            "prox_frequency" => {
                self.prox_frequency = if value == "epoch" {
                    ProxFrequency::Epoch
                } else {
                    ProxFrequency::Batches(parse_num(key, value)?)
                };
            }
            "energy" => self.energy = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "reload_epoch" => self.reload_epoch = Some(parse_num(key, value)?),
            "hflip" => self.hflip = parse_bool(key, value)?,
            other => return Err(format!("unknown key {other:?}")),
        }
        Ok(())
    }

    fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            bail!("epochs must be at least 1");
        }
        if self.batch_size < 1 {
            bail!("batch_size must be at least 1");
        }
        if !(self.lr > 0.0) {
            bail!("lr must be positive");
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            bail!("lr_decay must be in (0, 1]");
        }
        if self.lr_period < 1 {
            bail!("lr_period must be at least 1");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            bail!("momentum must be in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            bail!("alpha must be in [0, 1]");
        }
        if self.tau < 0.0 || self.lambda_first < 0.0 || self.lambda_rest < 0.0 {
            bail!("regularizer weights must be nonnegative");
        }
        if !(self.energy > 0.0 && self.energy <= 1.0) {
            bail!("energy must be in (0, 1]");
        }
        if let Some(re) = self.reload_epoch {
            if re < 1 || re >= self.epochs {
                bail!("reload_epoch must be in [1, epochs)");
            }
        }
        if let ProxFrequency::Batches(0) = self.prox_frequency {
            bail!("prox_frequency batch count must be positive");
        }
        if self.layers.is_empty() {
            bail!("config declares no [layer] sections");
        }
        Ok(())
    }

    /// Per-regularized-layer lambda weights: the first `first_group_size`
    /// regularized layers take `lambda_first`, the rest `lambda_rest`.
    pub fn lambdas(&self, net: &Network<f64>) -> Vec<f64> {
        let mut out = Vec::new();
        let mut seen = 0usize;
        for layer in &net.layers {
            if layer.is_regularized() {
                out.push(if seen < self.first_group_size {
                    self.lambda_first
                } else {
                    self.lambda_rest
                });
                seen += 1;
            }
        }
        out
    }

    pub fn reg_config(&self, net: &Network<f64>, current_lr: f64) -> RegConfig<f64> {
        RegConfig {
            tau: self.tau,
            alpha: self.alpha,
            lambdas: self.lambdas(net),
            prox_lr: current_lr,
        }
    }

    /// Scheduled learning rate for a 0-based epoch index.
    pub fn lr_at_epoch(&self, epoch: usize) -> f64 {
        self.lr * self.lr_decay.powi((epoch / self.lr_period) as i32)
    }

    /// Instantiate the architecture against a dataset shape. Flatten layers
    /// are inserted automatically in front of dense blocks; the final layer
    /// must produce `class_count` outputs.
    pub fn build_network(
        &self,
        input_shape: (usize, usize, usize),
        class_count: usize,
    ) -> Result<Network<f64>> {
        let mut layers: Vec<Layer<f64>> = Vec::new();
        let (mut c, mut h, mut w) = input_shape;
        let mut spatial = true;
        for (i, spec) in self.layers.iter().enumerate() {
            match spec.kind {
                LayerKindSpec::Conv {
                    kind,
                    filters,
                    kh,
                    kw,
                } => {
                    if !spatial {
                        bail!("layer {i}: conv after dense is not supported");
                    }
                    let (ph, pw) = match spec.padding {
                        Padding::Same => ((kh - 1) / 2, (kw - 1) / 2),
                        Padding::Valid => (0, 0),
                        Padding::Fixed(p) => (p, p),
                    };
                    let mut conv = ConvLayer::he_init(
                        kind,
                        filters,
                        c,
                        kh,
                        kw,
                        spec.stride,
                        ph,
                        pw,
                        derive_seed(self.seed, 0x1A7E5, i as u64),
                    );
                    conv.regularized = spec.regularized;
                    layers.push(Layer::Conv(conv));
                    let hp = h + 2 * ph;
                    let wp = w + 2 * pw;
                    if hp < kh || wp < kw {
                        bail!("layer {i}: kernel {kh}x{kw} exceeds padded input {hp}x{wp}");
                    }
                    h = (hp - kh) / spec.stride + 1;
                    w = (wp - kw) / spec.stride + 1;
                    c = filters;
                    if spec.batchnorm {
                        layers.push(Layer::BatchNorm(BatchNormLayer::new(c)));
                    }
                    if spec.relu {
                        layers.push(Layer::Relu);
                    }
                }
                LayerKindSpec::Dense { units } => {
                    if spatial {
                        layers.push(Layer::Flatten);
                        c = c * h * w;
                        h = 1;
                        w = 1;
                        spatial = false;
                    }
                    let mut dense = DenseLayer::he_init(
                        units,
                        c,
                        derive_seed(self.seed, 0x1A7E5, i as u64),
                    );
                    dense.regularized = spec.regularized;
                    layers.push(Layer::Dense(dense));
                    c = units;
                    if spec.batchnorm {
                        layers.push(Layer::BatchNorm(BatchNormLayer::new(c)));
                    }
                    if spec.relu {
                        layers.push(Layer::Relu);
                    }
                }
            }
        }
        if c * h * w != class_count {
            bail!(
                "architecture produces {} outputs but the dataset has {class_count} classes",
                c * h * w
            );
        }
        Network::new(input_shape, layers).map_err(|e| anyhow!("invalid architecture: {e}"))
    }
}

fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(pos) => &line[..pos],
        None => line,
    }
}

fn parse_bool(key: &str, value: &str) -> std::result::Result<bool, String> {
    match value {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        other => Err(format!("key {key}: expected a boolean, got {other:?}")),
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> std::result::Result<T, String> {
    value
        .parse()
        .map_err(|_| format!("key {key}: cannot parse {value:?}"))
}

#[derive(Debug, Default)]
struct PartialLayer {
    ty: Option<String>,
    filters: Option<usize>,
    units: Option<usize>,
    kernel: Option<(usize, usize)>,
    stride: usize,
    padding: Option<Padding>,
    batchnorm: Option<bool>,
    relu: Option<bool>,
    regularized: Option<bool>,
}

impl PartialLayer {
    fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        match key {
            "type" => self.ty = Some(value.to_string()),
            "filters" => self.filters = Some(parse_num(key, value)?),
            "units" => self.units = Some(parse_num(key, value)?),
            "kernel" => {
                let (kh, kw) = match value.split_once('x') {
                    Some((a, b)) => (parse_num(key, a)?, parse_num(key, b)?),
                    None => {
                        let k: usize = parse_num(key, value)?;
                        (k, k)
                    }
                };
                self.kernel = Some((kh, kw));
            }
            "stride" => self.stride = parse_num(key, value)?,
            "padding" => {
                self.padding = Some(match value {
                    "same" => Padding::Same,
                    "valid" => Padding::Valid,
                    other => Padding::Fixed(parse_num(key, other)?),
                });
            }
            "batchnorm" => self.batchnorm = Some(parse_bool(key, value)?),
            "relu" => self.relu = Some(parse_bool(key, value)?),
            "regularized" => self.regularized = Some(parse_bool(key, value)?),
            other => return Err(format!("unknown layer key {other:?}")),
        }
        Ok(())
    }

    fn finish(self) -> std::result::Result<LayerSpec, String> {
        let ty = self.ty.ok_or("layer section is missing `type`")?;
        let stride = if self.stride == 0 { 1 } else { self.stride };
        match ty.as_str() {
            "conv" | "conv2d" | "conv_v" | "conv_h" => {
                let filters = self.filters.ok_or("conv layer needs `filters`")?;
                let (mut kh, mut kw) = self.kernel.ok_or("conv layer needs `kernel`")?;
                let kind = match ty.as_str() {
                    "conv" | "conv2d" => ConvKind::Full,
                    "conv_v" => {
                        kw = 1;
                        ConvKind::Vertical
                    }
                    _ => {
                        kw = kw.max(kh);
                        kh = 1;
                        ConvKind::Horizontal
                    }
                };
                if kh == 0 || kw == 0 || filters == 0 {
                    return Err("conv layer dimensions must be positive".into());
                }
                Ok(LayerSpec {
                    kind: LayerKindSpec::Conv {
                        kind,
                        filters,
                        kh,
                        kw,
                    },
                    stride,
                    padding: self.padding.unwrap_or(Padding::Same),
                    batchnorm: self.batchnorm.unwrap_or(true),
                    relu: self.relu.unwrap_or(true),
                    regularized: self.regularized.unwrap_or(true),
                })
            }
            "dense" => {
                let units = self.units.ok_or("dense layer needs `units`")?;
                if units == 0 {
                    return Err("dense layer needs at least one unit".into());
                }
                Ok(LayerSpec {
                    kind: LayerKindSpec::Dense { units },
                    stride: 1,
                    padding: Padding::Valid,
                    batchnorm: self.batchnorm.unwrap_or(false),
                    relu: self.relu.unwrap_or(false),
                    regularized: self.regularized.unwrap_or(true),
                })
            }
            other => Err(format!("unknown layer type {other:?}")),
        }
    }
}

impl Default for LayerSpec {
    fn default() -> Self {
        LayerSpec {
            kind: LayerKindSpec::Dense { units: 1 },
            stride: 1,
            padding: Padding::Same,
            batchnorm: false,
            relu: false,
            regularized: true,
        }
    }
}

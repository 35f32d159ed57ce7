//! Dataset SPEC strings.
//!
//! - `synth:seed=S,train=N,eval=M,in=CxHxW,conv=KxDHxDW@RANK,...,classes=C`
//!   planted low-rank teacher task (`eval` optional, defaults to 0);
//! - `idx:IMAGES:LABELS` IDX byte images plus labels;
//! - `csv:PATH:CxHxW[:unit]` label-then-pixels rows, `unit` skips the /255;
//! - `bin:PATH` the crate's binary dataset format.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};

use catn_core::data::{
    self, derive_seed, teacher_dataset, teacher_network, CsvLayout, Dataset, TeacherConvSpec,
    TeacherSpec,
};

/// Parsed form of a dataset SPEC string.
#[derive(Debug, Clone)]
pub enum DataSpec {
    Synth(SynthSpec),
    Idx { images: PathBuf, labels: PathBuf },
    Csv { path: PathBuf, layout: CsvLayout },
    Bin { path: PathBuf },
}

#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub seed: u64,
    pub train: usize,
    pub eval: usize,
    pub input_shape: (usize, usize, usize),
    pub conv_layers: Vec<TeacherConvSpec>,
    pub classes: usize,
}

/// Train set plus optional held-out set produced by one SPEC.
pub struct LoadedData {
    pub train: Dataset<f64>,
    pub eval: Option<Dataset<f64>>,
}

impl DataSpec {
    pub fn parse(spec: &str) -> Result<DataSpec> {
        let (scheme, rest) = spec
            .split_once(':')
            .ok_or_else(|| anyhow!("dataset spec {spec:?} is missing a scheme prefix"))?;
        match scheme {
            "synth" => Ok(DataSpec::Synth(parse_synth(rest)?)),
            "idx" => {
                let (images, labels) = rest
                    .split_once(':')
                    .ok_or_else(|| anyhow!("idx spec needs IMAGES:LABELS, got {rest:?}"))?;
                Ok(DataSpec::Idx {
                    images: PathBuf::from(images),
                    labels: PathBuf::from(labels),
                })
            }
            "csv" => {
                let (path, layout) = rest
                    .split_once(':')
                    .ok_or_else(|| anyhow!("csv spec needs PATH:CxHxW, got {rest:?}"))?;
                let (dims, unit) = match layout.split_once(':') {
                    Some((d, "unit")) => (d, true),
                    Some((_, other)) => bail!("csv spec: unknown flag {other:?}"),
                    None => (layout, false),
                };
                let (c, h, w) = parse_shape(dims)?;
                Ok(DataSpec::Csv {
                    path: PathBuf::from(path),
                    layout: CsvLayout {
                        channels: c,
                        height: h,
                        width: w,
                        unit_scale: unit,
                    },
                })
            }
            "bin" => Ok(DataSpec::Bin {
                path: PathBuf::from(rest),
            }),
            other => bail!("unknown dataset scheme {other:?}"),
        }
    }

    /// Load the train split and, for synthetic data, the held-out split.
    pub fn load(&self) -> Result<LoadedData> {
        match self {
            DataSpec::Synth(s) => {
                let teacher_spec = TeacherSpec {
                    seed: s.seed,
                    n_samples: s.train,
                    input_shape: s.input_shape,
                    conv_layers: s.conv_layers.clone(),
                    class_count: s.classes,
                };
                let teacher = teacher_network::<f64>(&teacher_spec)
                    .context("building synthetic teacher")?;
                let train = teacher_dataset(
                    &teacher,
                    s.classes,
                    derive_seed(s.seed, 0x7EAC, 1),
                    s.train,
                )?;
                let eval = if s.eval > 0 {
                    Some(teacher_dataset(
                        &teacher,
                        s.classes,
                        derive_seed(s.seed, 0x7EAC, 2),
                        s.eval,
                    )?)
                } else {
                    None
                };
                Ok(LoadedData { train, eval })
            }
            DataSpec::Idx { images, labels } => Ok(LoadedData {
                train: data::load_idx(images, labels)?,
                eval: None,
            }),
            DataSpec::Csv { path, layout } => Ok(LoadedData {
                train: data::load_csv(path, layout)?,
                eval: None,
            }),
            DataSpec::Bin { path } => Ok(LoadedData {
                train: data::load_bin(path)?,
                eval: None,
            }),
        }
    }

    /// The synthetic teacher network, when this spec is synthetic.
    pub fn teacher(&self) -> Result<Option<catn_core::Network>> {
        match self {
            DataSpec::Synth(s) => {
                let teacher_spec = TeacherSpec {
                    seed: s.seed,
                    n_samples: 0,
                    input_shape: s.input_shape,
                    conv_layers: s.conv_layers.clone(),
                    class_count: s.classes,
                };
                Ok(Some(teacher_network::<f64>(&teacher_spec)?))
            }
            _ => Ok(None),
        }
    }
}

/// Load a spec string directly.
pub fn load_spec(spec: &str) -> Result<LoadedData> {
    DataSpec::parse(spec)?.load()
}

fn parse_synth(rest: &str) -> Result<SynthSpec> {
    let mut seed = None;
    let mut train = None;
    let mut eval = 0usize;
    let mut input_shape = None;
    let mut conv_layers = Vec::new();
    let mut classes = None;
    for field in rest.split(',') {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| anyhow!("synth field {field:?} is not key=value"))?;
        match key {
            "seed" => seed = Some(value.parse().context("synth seed")?),
            "train" | "n" => train = Some(value.parse().context("synth train count")?),
            "eval" => eval = value.parse().context("synth eval count")?,
            "in" => input_shape = Some(parse_shape(value)?),
            "conv" => {
                let (dims, rank) = value
                    .split_once('@')
                    .ok_or_else(|| anyhow!("synth conv {value:?} needs KxDHxDW@RANK"))?;
                let (k, dh, dw) = parse_shape(dims)?;
                conv_layers.push(TeacherConvSpec {
                    out_channels: k,
                    kernel: (dh, dw),
                    rank: rank.parse().context("synth conv rank")?,
                });
            }
            "classes" => classes = Some(value.parse().context("synth classes")?),
            other => bail!("unknown synth field {other:?}"),
        }
    }
    let spec = SynthSpec {
        seed: seed.ok_or_else(|| anyhow!("synth spec needs seed="))?,
        train: train.ok_or_else(|| anyhow!("synth spec needs train="))?,
        eval,
        input_shape: input_shape.ok_or_else(|| anyhow!("synth spec needs in=CxHxW"))?,
        conv_layers,
        classes: classes.ok_or_else(|| anyhow!("synth spec needs classes="))?,
    };
    if spec.conv_layers.is_empty() {
        bail!("synth spec needs at least one conv=KxDHxDW@RANK");
    }
    Ok(spec)
}

fn parse_shape(s: &str) -> Result<(usize, usize, usize)> {
    let parts: Vec<&str> = s.split('x').collect();
    if parts.len() != 3 {
        bail!("expected AxBxC, got {s:?}");
    }
    Ok((
        parts[0].parse().context("shape dim")?,
        parts[1].parse().context("shape dim")?,
        parts[2].parse().context("shape dim")?,
    ))
}

/// Helper shared by evaluate/compress: load a dataset for accuracy
/// measurement, replaying the model's stored normalization.
pub fn load_eval_dataset(spec: &str, norm: &Option<catn_core::data::ChannelNorm<f64>>) -> Result<Dataset<f64>> {
    let loaded = load_spec(spec)?;
    let mut ds = match loaded.eval {
        Some(eval) => eval,
        None => loaded.train,
    };
    if let Some(n) = norm {
        ds.apply_normalizer(n);
    }
    Ok(ds)
}

#[allow(unused)]
fn _path_check(_: &Path) {}

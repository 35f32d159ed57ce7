//! Model serialization: the `CATN` binary format.
//!
//! Layout: magic `CATN`, format version (u32 LE), payload, SHA-256 checksum
//! of everything before it. All floats are little-endian f64; the round trip
//! reproduces the network bit-exactly. Version mismatches and checksum
//! failures are hard errors.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use sha2::{Digest, Sha256};

use catn_core::data::ChannelNorm;
use catn_core::linalg::Matrix;
use catn_core::nn::{BatchNormLayer, ConvKind, ConvLayer, DenseLayer, Layer, Network, Tensor4};

const MAGIC: &[u8; 4] = b"CATN";
const VERSION: u32 = 1;

const TAG_CONV_FULL: u8 = 0;
const TAG_CONV_V: u8 = 1;
const TAG_CONV_H: u8 = 2;
const TAG_DENSE: u8 = 3;
const TAG_BATCHNORM: u8 = 4;
const TAG_RELU: u8 = 5;
const TAG_FLATTEN: u8 = 6;

const FLAG_REGULARIZED: u8 = 1;
const FLAG_FACTORED: u8 = 2;
const FLAG_HAS_BIAS: u8 = 4;

/// A trained network plus the metadata needed to reproduce and reuse it.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub net: Network<f64>,
    pub seed: u64,
    pub epochs_trained: u32,
    /// The exact text of the training config.
    pub config_echo: String,
    /// Train-time channel standardization, replayed at evaluation.
    pub norm: Option<ChannelNorm<f64>>,
}

impl ModelFile {
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        self.write_payload(&mut buf);
        let digest = Sha256::digest(&buf);
        buf.extend_from_slice(&digest);
        // Atomic write: temp file in the same directory, then rename.
        let dir = path.parent().unwrap_or_else(|| Path::new("."));
        let tmp = dir.join(format!(
            ".{}.tmp",
            path.file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| "model".into())
        ));
        std::fs::write(&tmp, &buf)
            .with_context(|| format!("cannot write {}", tmp.display()))?;
        std::fs::rename(&tmp, path)
            .with_context(|| format!("cannot move model into place at {}", path.display()))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<ModelFile> {
        let bytes =
            std::fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
        if bytes.len() < 4 + 4 + 32 {
            bail!("{}: file too short to be a model", path.display());
        }
        if &bytes[0..4] != MAGIC {
            bail!("{}: bad magic, not a CATN model file", path.display());
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != VERSION {
            bail!(
                "{}: model format version {version} does not match supported version {VERSION}",
                path.display()
            );
        }
        let (payload, checksum) = bytes.split_at(bytes.len() - 32);
        let digest = Sha256::digest(payload);
        if digest.as_slice() != checksum {
            bail!(
                "{}: checksum mismatch, the model file is corrupt",
                path.display()
            );
        }
        let mut r = Reader {
            bytes: &payload[8..],
            pos: 0,
            path,
        };
        let model = ModelFile::read_payload(&mut r)?;
        if r.pos != r.bytes.len() {
            bail!("{}: trailing bytes after model payload", path.display());
        }
        Ok(model)
    }

    fn write_payload(&self, buf: &mut Vec<u8>) {
        buf.extend_from_slice(&self.seed.to_le_bytes());
        buf.extend_from_slice(&self.epochs_trained.to_le_bytes());
        write_str(buf, &self.config_echo);
        match &self.norm {
            Some(n) => {
                buf.push(1);
                write_u32(buf, n.mean.len() as u32);
                for &x in &n.mean {
                    buf.extend_from_slice(&x.to_le_bytes());
                }
                for &x in &n.std {
                    buf.extend_from_slice(&x.to_le_bytes());
                }
            }
            None => buf.push(0),
        }
        let (c, h, w) = self.net.input_shape;
        write_u32(buf, c as u32);
        write_u32(buf, h as u32);
        write_u32(buf, w as u32);
        write_u32(buf, self.net.layers.len() as u32);
        for layer in &self.net.layers {
            match layer {
                Layer::Conv(conv) => {
                    buf.push(match conv.kind {
                        ConvKind::Full => TAG_CONV_FULL,
                        ConvKind::Vertical => TAG_CONV_V,
                        ConvKind::Horizontal => TAG_CONV_H,
                    });
                    let [k, ci, dh, dw] = conv.weights.dims();
                    for v in [k, ci, dh, dw, conv.stride, conv.pad_h, conv.pad_w] {
                        write_u32(buf, v as u32);
                    }
                    buf.push(flags(conv.regularized, conv.factored, !conv.bias.is_empty()));
                    for &x in conv.weights.data() {
                        buf.extend_from_slice(&x.to_le_bytes());
                    }
                    for &x in &conv.bias {
                        buf.extend_from_slice(&x.to_le_bytes());
                    }
                }
                Layer::Dense(dense) => {
                    buf.push(TAG_DENSE);
                    write_u32(buf, dense.weights.rows() as u32);
                    write_u32(buf, dense.weights.cols() as u32);
                    buf.push(flags(dense.regularized, dense.factored, !dense.bias.is_empty()));
                    for &x in dense.weights.data() {
                        buf.extend_from_slice(&x.to_le_bytes());
                    }
                    for &x in &dense.bias {
                        buf.extend_from_slice(&x.to_le_bytes());
                    }
                }
                Layer::BatchNorm(bn) => {
                    buf.push(TAG_BATCHNORM);
                    write_u32(buf, bn.channels() as u32);
                    buf.extend_from_slice(&bn.eps.to_le_bytes());
                    buf.extend_from_slice(&bn.momentum.to_le_bytes());
                    for series in [&bn.gamma, &bn.beta, &bn.running_mean, &bn.running_var] {
                        for &x in series {
                            buf.extend_from_slice(&x.to_le_bytes());
                        }
                    }
                }
                Layer::Relu => buf.push(TAG_RELU),
                Layer::Flatten => buf.push(TAG_FLATTEN),
            }
        }
    }

    fn read_payload(r: &mut Reader) -> Result<ModelFile> {
        let seed = r.u64()?;
        let epochs_trained = r.u32()?;
        let config_echo = r.string()?;
        let norm = if r.u8()? == 1 {
            let c = r.u32()? as usize;
            let mean = r.f64_vec(c)?;
            let std = r.f64_vec(c)?;
            Some(ChannelNorm { mean, std })
        } else {
            None
        };
        let input_shape = (r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
        let n_layers = r.u32()? as usize;
        let mut layers = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            let tag = r.u8()?;
            let layer = match tag {
                TAG_CONV_FULL | TAG_CONV_V | TAG_CONV_H => {
                    let k = r.u32()? as usize;
                    let c = r.u32()? as usize;
                    let dh = r.u32()? as usize;
                    let dw = r.u32()? as usize;
                    let stride = r.u32()? as usize;
                    let pad_h = r.u32()? as usize;
                    let pad_w = r.u32()? as usize;
                    let fl = r.u8()?;
                    let weights = Tensor4::from_vec([k, c, dh, dw], r.f64_vec(k * c * dh * dw)?)
                        .map_err(|e| anyhow!("{}: {e}", r.path.display()))?;
                    let bias = if fl & FLAG_HAS_BIAS != 0 {
                        r.f64_vec(k)?
                    } else {
                        Vec::new()
                    };
                    Layer::Conv(ConvLayer {
                        kind: match tag {
                            TAG_CONV_FULL => ConvKind::Full,
                            TAG_CONV_V => ConvKind::Vertical,
                            _ => ConvKind::Horizontal,
                        },
                        weights,
                        bias,
                        stride,
                        pad_h,
                        pad_w,
                        regularized: fl & FLAG_REGULARIZED != 0,
                        factored: fl & FLAG_FACTORED != 0,
                    })
                }
                TAG_DENSE => {
                    let k = r.u32()? as usize;
                    let s = r.u32()? as usize;
                    let fl = r.u8()?;
                    let weights = Matrix::from_vec(k, s, r.f64_vec(k * s)?)
                        .map_err(|e| anyhow!("{}: {e}", r.path.display()))?;
                    let bias = if fl & FLAG_HAS_BIAS != 0 {
                        r.f64_vec(k)?
                    } else {
                        Vec::new()
                    };
                    Layer::Dense(DenseLayer {
                        weights,
                        bias,
                        regularized: fl & FLAG_REGULARIZED != 0,
                        factored: fl & FLAG_FACTORED != 0,
                    })
                }
                TAG_BATCHNORM => {
                    let c = r.u32()? as usize;
                    let eps = r.f64()?;
                    let momentum = r.f64()?;
                    Layer::BatchNorm(BatchNormLayer {
                        gamma: r.f64_vec(c)?,
                        beta: r.f64_vec(c)?,
                        running_mean: r.f64_vec(c)?,
                        running_var: r.f64_vec(c)?,
                        eps,
                        momentum,
                    })
                }
                TAG_RELU => Layer::Relu,
                TAG_FLATTEN => Layer::Flatten,
                other => bail!("{}: unknown layer tag {other}", r.path.display()),
            };
            layers.push(layer);
        }
        let net = Network::new(input_shape, layers)
            .map_err(|e| anyhow!("{}: inconsistent model: {e}", r.path.display()))?;
        Ok(ModelFile {
            net,
            seed,
            epochs_trained,
            config_echo,
            norm,
        })
    }
}

fn flags(regularized: bool, factored: bool, has_bias: bool) -> u8 {
    let mut f = 0;
    if regularized {
        f |= FLAG_REGULARIZED;
    }
    if factored {
        f |= FLAG_FACTORED;
    }
    if has_bias {
        f |= FLAG_HAS_BIAS;
    }
    f
}

fn write_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn write_str(buf: &mut Vec<u8>, s: &str) {
    write_u32(buf, s.len() as u32);
    buf.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            bail!("{}: truncated model payload", self.path.display());
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64_vec(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(8 * n)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn string(&mut self) -> Result<String> {
        let len = self.u32()? as usize;
        let raw = self.take(len)?;
        String::from_utf8(raw.to_vec())
            .map_err(|_| anyhow!("{}: config echo is not UTF-8", self.path.display()))
    }
}

//! Dataset ingestion and synthesis: IDX and CSV loaders, seeded batch
//! iteration, per-channel normalization, and a planted low-rank teacher
//! generator for rank-recovery experiments.

mod idx;
mod synth;

pub use idx::{encode_idx, load_idx, load_idx_bytes};
pub use synth::{synthesize_teacher, teacher_dataset, teacher_network, TeacherConvSpec, TeacherSpec};

use std::path::Path;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::Tensor4;
use crate::scalar::{real, real_of_usize, Real};

/// Labeled image set. Images are `(N, C, H, W)`; loaders scale pixel bytes
/// into `[0, 1]`. When per-channel standardization has been applied, the
/// parameters live in `norm` so evaluation can replay the identical
/// transform.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    pub images: Tensor4<T>,
    pub labels: Vec<usize>,
    pub class_count: usize,
    pub norm: Option<ChannelNorm<T>>,
}

/// Per-channel standardization parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelNorm<T> {
    pub mean: Vec<T>,
    pub std: Vec<T>,
}

impl<T: Real> Dataset<T> {
    pub fn new(images: Tensor4<T>, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        let n = images.dims()[0];
        if labels.len() != n {
            return Err(Error::Data(format!(
                "image/label count mismatch: {n} images vs {} labels",
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_count) {
            return Err(Error::Data(format!(
                "label {bad} out of range for {class_count} classes"
            )));
        }
        Ok(Dataset {
            images,
            labels,
            class_count,
            norm: None,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// `(C, H, W)` of one sample.
    pub fn sample_shape(&self) -> (usize, usize, usize) {
        let [_, c, h, w] = self.images.dims();
        (c, h, w)
    }

    /// Compute per-channel mean/std on this set, standardize in place and
    /// remember the parameters.
    pub fn fit_normalizer(&mut self) -> ChannelNorm<T> {
        let [n, c, h, w] = self.images.dims();
        let count = real_of_usize::<T>(n * h * w);
        let mut mean = vec![T::zero(); c];
        let mut var = vec![T::zero(); c];
        for b in 0..n {
            for ci in 0..c {
                for y in 0..h {
                    for x in 0..w {
                        mean[ci] += self.images.at(b, ci, y, x);
                    }
                }
            }
        }
        for m in mean.iter_mut() {
            *m = *m / count;
        }
        for b in 0..n {
            for ci in 0..c {
                for y in 0..h {
                    for x in 0..w {
                        let d = self.images.at(b, ci, y, x) - mean[ci];
                        var[ci] += d * d;
                    }
                }
            }
        }
        let floor = real::<T>(1e-8);
        let std: Vec<T> = var
            .iter()
            .map(|&v| (v / count).sqrt().max(floor))
            .collect();
        let norm = ChannelNorm { mean, std };
        self.apply_normalizer(&norm);
        norm
    }

    /// Replay a stored standardization (train-time parameters at eval).
    pub fn apply_normalizer(&mut self, norm: &ChannelNorm<T>) {
        let [n, c, h, w] = self.images.dims();
        assert_eq!(c, norm.mean.len(), "normalizer channel count mismatch");
        for b in 0..n {
            for ci in 0..c {
                for y in 0..h {
                    for x in 0..w {
                        let v = (self.images.at(b, ci, y, x) - norm.mean[ci]) / norm.std[ci];
                        *self.images.at_mut(b, ci, y, x) = v;
                    }
                }
            }
        }
        self.norm = Some(norm.clone());
    }

    /// Copy out the sample at `index`.
    pub fn sample(&self, index: usize) -> (Tensor4<T>, usize) {
        let [_, c, h, w] = self.images.dims();
        let stride = c * h * w;
        let data = self.images.data()[index * stride..(index + 1) * stride].to_vec();
        (
            Tensor4::from_vec([1, c, h, w], data).expect("sample slice has the right length"),
            self.labels[index],
        )
    }

    /// Gather a batch of samples by index.
    pub fn gather(&self, indices: &[usize]) -> (Tensor4<T>, Vec<usize>) {
        let [_, c, h, w] = self.images.dims();
        let stride = c * h * w;
        let mut data = Vec::with_capacity(indices.len() * stride);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            data.extend_from_slice(&self.images.data()[i * stride..(i + 1) * stride]);
            labels.push(self.labels[i]);
        }
        (
            Tensor4::from_vec([indices.len(), c, h, w], data)
                .expect("gathered batch has the right length"),
            labels,
        )
    }
}

/// Deterministic shuffled batches: a seeded permutation of the dataset cut
/// into `batch_size` chunks, keeping the final partial batch.
pub fn batches<T: Real>(
    ds: &Dataset<T>,
    batch_size: usize,
    epoch_seed: u64,
) -> Vec<(Tensor4<T>, Vec<usize>)> {
    assert!(batch_size >= 1, "batch_size must be at least 1");
    let order = permutation(ds.len(), epoch_seed);
    order
        .chunks(batch_size)
        .map(|chunk| ds.gather(chunk))
        .collect()
}

/// Derive an independent RNG seed from a base seed, a stream tag and an
/// index (SplitMix64 over the mixed words). Every consumer of randomness
/// takes its seed through here so streams never collide.
pub fn derive_seed(base: u64, stream: u64, index: u64) -> u64 {
    let mut z = base
        ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ index.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seeded Fisher-Yates permutation of `0..n`.
pub fn permutation(n: usize, seed: u64) -> Vec<usize> {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    order
}

/// Parse a CSV dataset: each row is `label, v0, v1, ...` with
/// `C * H * W` pixel values in C-major row-major order.
#[derive(Debug, Clone, Copy)]
pub struct CsvLayout {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    /// When true, values are used as-is; otherwise they are divided by 255.
    pub unit_scale: bool,
}

pub fn load_csv<T: Real>(path: &Path, layout: &CsvLayout) -> Result<Dataset<T>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
    load_csv_str(&text, layout)
}

pub fn load_csv_str<T: Real>(text: &str, layout: &CsvLayout) -> Result<Dataset<T>> {
    let pixels = layout.channels * layout.height * layout.width;
    let mut data: Vec<T> = Vec::new();
    let mut labels: Vec<usize> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != pixels + 1 {
            return Err(Error::Data(format!(
                "row {}: expected {} cells (label + {pixels} pixels), got {}",
                lineno + 1,
                pixels + 1,
                cells.len()
            )));
        }
        let label: usize = cells[0]
            .parse()
            .map_err(|_| Error::Data(format!("row {}: bad label {:?}", lineno + 1, cells[0])))?;
        labels.push(label);
        for cell in &cells[1..] {
            let v: f64 = cell.parse().map_err(|_| {
                Error::Data(format!("row {}: non-numeric cell {cell:?}", lineno + 1))
            })?;
            let v = if layout.unit_scale { v } else { v / 255.0 };
            data.push(real(v));
        }
    }
    if labels.is_empty() {
        return Err(Error::Data("CSV file contains no data rows".into()));
    }
    let n = labels.len();
    let images = Tensor4::from_vec([n, layout.channels, layout.height, layout.width], data)?;
    let class_count = labels.iter().copied().max().unwrap_or(0) + 1;
    Dataset::new(images, labels, class_count)
}

const DATASET_MAGIC: &[u8; 4] = b"CATD";

/// Save a dataset in the crate's binary format (little-endian f64 payload);
/// the round trip preserves tensors bit-exactly.
pub fn save_bin<T: Real>(ds: &Dataset<T>, path: &Path) -> Result<()> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(DATASET_MAGIC);
    let [n, c, h, w] = ds.images.dims();
    for dim in [n, c, h, w, ds.class_count] {
        buf.extend_from_slice(&(dim as u32).to_le_bytes());
    }
    for &x in ds.images.data() {
        buf.extend_from_slice(&x.to_f64().expect("scalar converts to f64").to_le_bytes());
    }
    for &l in &ds.labels {
        buf.extend_from_slice(&(l as u32).to_le_bytes());
    }
    std::fs::write(path, buf)
        .map_err(|e| Error::Data(format!("cannot write {}: {e}", path.display())))
}

pub fn load_bin<T: Real>(path: &Path) -> Result<Dataset<T>> {
    let bytes = std::fs::read(path)
        .map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
    let mut cur = 0usize;
    let take = |cur: &mut usize, n: usize| -> Result<&[u8]> {
        if *cur + n > bytes.len() {
            return Err(Error::Data(format!("truncated dataset file {}", path.display())));
        }
        let s = &bytes[*cur..*cur + n];
        *cur += n;
        Ok(s)
    };
    if take(&mut cur, 4)? != DATASET_MAGIC {
        return Err(Error::Data(format!("bad dataset magic in {}", path.display())));
    }
    let mut dims = [0usize; 5];
    for d in dims.iter_mut() {
        *d = u32::from_le_bytes(take(&mut cur, 4)?.try_into().unwrap()) as usize;
    }
    let [n, c, h, w, classes] = dims;
    let count = n * c * h * w;
    let mut data = Vec::with_capacity(count);
    for _ in 0..count {
        let v = f64::from_le_bytes(take(&mut cur, 8)?.try_into().unwrap());
        data.push(real::<T>(v));
    }
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        labels.push(u32::from_le_bytes(take(&mut cur, 4)?.try_into().unwrap()) as usize);
    }
    Dataset::new(Tensor4::from_vec([n, c, h, w], data)?, labels, classes)
}

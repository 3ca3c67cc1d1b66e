//! MNIST IDX loading, pixel normalization and epoch minibatching.
//!
//! IDX files are big-endian: a `u32` magic (2051 for images, 2049 for
//! labels), the item count, and for images the row and column counts,
//! followed by one unsigned byte per pixel or label. Gzip-compressed files
//! are detected by their two-byte signature and decompressed transparently.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use flate2::read::GzDecoder;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::perceptron::{QuantRange, QuantSpec};

pub const IMAGES_MAGIC: u32 = 2051;
pub const LABELS_MAGIC: u32 = 2049;

#[derive(Debug, Error)]
pub enum IdxError {
    #[error("{path}: bad magic number {found} at byte 0 (expected {expected})")]
    BadMagic {
        path: PathBuf,
        expected: u32,
        found: u32,
    },
    #[error("{path}: truncated at byte {offset}, needed {needed} more bytes")]
    Truncated {
        path: PathBuf,
        offset: usize,
        needed: usize,
    },
    #[error("{path}: {extra} unexpected trailing bytes after byte {offset}")]
    TrailingBytes {
        path: PathBuf,
        offset: usize,
        extra: usize,
    },
    #[error("image file holds {images} items but label file holds {labels} (count field at byte 4)")]
    CountMismatch { images: usize, labels: usize },
    #[error("label {label} at byte {offset} is not a digit")]
    BadLabel { label: u8, offset: usize },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// Raw bytes straight out of an IDX pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawDataset {
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
    pub labels: Vec<u8>,
}

impl RawDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image(&self, i: usize) -> &[u8] {
        let n = self.rows * self.cols;
        &self.pixels[i * n..(i + 1) * n]
    }
}

/// Normalized images on the input quantizer grid with their labels.
///
/// Pixels stay as bytes; a 256-entry table maps each gray level to its
/// quantized input value, so datasets at different neuron precisions share
/// the same pixel buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub pixels_per_image: usize,
    pixels: Arc<[u8]>,
    table: [f64; 256],
    pub labels: Vec<u8>,
    pub split: Split,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Input value assigned to gray level `p`.
    pub fn level(&self, p: u8) -> f64 {
        self.table[p as usize]
    }

    pub fn image_into(&self, i: usize, out: &mut Vec<f64>) {
        let n = self.pixels_per_image;
        out.clear();
        out.extend(self.pixels[i * n..(i + 1) * n].iter().map(|&p| self.table[p as usize]));
    }

    pub fn image(&self, i: usize) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.pixels_per_image);
        self.image_into(i, &mut v);
        v
    }

    /// The first `n` items (all of them when `n` is 0 or too large).
    pub fn truncated(mut self, n: usize) -> Self {
        if n > 0 && n < self.len() {
            self.labels.truncate(n);
            self.pixels = self.pixels[..n * self.pixels_per_image].into();
        }
        self
    }

    /// Same pixels under a different input quantizer.
    pub fn requantized(&self, quant: &QuantSpec) -> Self {
        Self {
            table: level_table(quant),
            ..self.clone()
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (Vec<f64>, u8)> + '_ {
        (0..self.len()).map(move |i| (self.image(i), self.labels[i]))
    }
}

fn level_table(quant: &QuantSpec) -> [f64; 256] {
    let q = quant.with_forward_range(0.0, 1.0);
    let mut table = [0.0; 256];
    for (p, t) in table.iter_mut().enumerate() {
        *t = q.quantize(p as f64 / 255.0, QuantRange::Forward);
    }
    table
}

fn read_maybe_gzip(path: &Path) -> Result<Vec<u8>, IdxError> {
    let io = |source| IdxError::Io {
        path: path.to_owned(),
        source,
    };
    let bytes = fs::read(path).map_err(io)?;
    if bytes.len() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b {
        let mut out = Vec::new();
        GzDecoder::new(bytes.as_slice()).read_to_end(&mut out).map_err(io)?;
        Ok(out)
    } else {
        Ok(bytes)
    }
}

struct Cursor<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    offset: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], IdxError> {
        if self.bytes.len() - self.offset < n {
            return Err(IdxError::Truncated {
                path: self.path.to_owned(),
                offset: self.bytes.len(),
                needed: n - (self.bytes.len() - self.offset),
            });
        }
        let s = &self.bytes[self.offset..self.offset + n];
        self.offset += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, IdxError> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn finish(&self) -> Result<(), IdxError> {
        if self.offset == self.bytes.len() {
            Ok(())
        } else {
            Err(IdxError::TrailingBytes {
                path: self.path.to_owned(),
                offset: self.offset,
                extra: self.bytes.len() - self.offset,
            })
        }
    }
}

fn expect_magic(c: &mut Cursor<'_>, expected: u32) -> Result<(), IdxError> {
    let found = c.u32()?;
    if found != expected {
        return Err(IdxError::BadMagic {
            path: c.path.to_owned(),
            expected,
            found,
        });
    }
    Ok(())
}

/// Parses an IDX image file into `(count, rows, cols, pixels)`.
pub fn parse_images(path: &Path, bytes: &[u8]) -> Result<(usize, usize, usize, Vec<u8>), IdxError> {
    let mut c = Cursor { path, bytes, offset: 0 };
    expect_magic(&mut c, IMAGES_MAGIC)?;
    let count = c.u32()? as usize;
    let rows = c.u32()? as usize;
    let cols = c.u32()? as usize;
    let pixels = c.take(count * rows * cols)?.to_vec();
    c.finish()?;
    Ok((count, rows, cols, pixels))
}

pub fn parse_labels(path: &Path, bytes: &[u8]) -> Result<Vec<u8>, IdxError> {
    let mut c = Cursor { path, bytes, offset: 0 };
    expect_magic(&mut c, LABELS_MAGIC)?;
    let count = c.u32()? as usize;
    let labels = c.take(count)?.to_vec();
    c.finish()?;
    if let Some(pos) = labels.iter().position(|&l| l > 9) {
        return Err(IdxError::BadLabel {
            label: labels[pos],
            offset: 8 + pos,
        });
    }
    Ok(labels)
}

pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<RawDataset, IdxError> {
    let img_bytes = read_maybe_gzip(images_path)?;
    let (count, rows, cols, pixels) = parse_images(images_path, &img_bytes)?;
    let lbl_bytes = read_maybe_gzip(labels_path)?;
    let labels = parse_labels(labels_path, &lbl_bytes)?;
    if labels.len() != count {
        return Err(IdxError::CountMismatch {
            images: count,
            labels: labels.len(),
        });
    }
    Ok(RawDataset {
        rows,
        cols,
        pixels,
        labels,
    })
}

/// Scales pixels to `[0, 1]` and rounds them onto the input grid.
pub fn normalize_quantize(raw: &RawDataset, quant: &QuantSpec, split: Split) -> Dataset {
    Dataset {
        pixels_per_image: raw.rows * raw.cols,
        pixels: raw.pixels.as_slice().into(),
        table: level_table(quant),
        labels: raw.labels.clone(),
        split,
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("batch size must be at least 1")]
pub struct BatchSizeError;

/// Shuffled minibatches of sample indices for one epoch. The permutation
/// depends only on `(seed, epoch)`; the last batch may be short.
pub fn minibatches(
    len: usize,
    batch_size: usize,
    seed: u64,
    epoch: u64,
) -> Result<Vec<Vec<usize>>, BatchSizeError> {
    if batch_size == 0 {
        return Err(BatchSizeError);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch.wrapping_add(1));
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(&mut rng);
    Ok(order.chunks(batch_size).map(<[usize]>::to_vec).collect())
}

//! IDX loading, stratified subsets, seeded splits and minibatch order.

use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::{Real, Tensor};

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("bad magic 0x{found:08x} in {what} file (expected 0x{expected:08x})")]
    BadMagic {
        what: &'static str,
        expected: u32,
        found: u32,
    },
    #[error("truncated {what} file: need {needed} bytes, have {available}")]
    Truncated {
        what: &'static str,
        needed: usize,
        available: usize,
    },
    #[error("image dimensions {rows}x{cols}, expected 28x28")]
    Dimensions { rows: usize, cols: usize },
    #[error("{images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("label {label} at index {index} is outside 0..=9")]
    LabelOutOfRange { index: usize, label: u8 },
    #[error("invalid count {count} for a dataset of {available}")]
    InvalidCount { count: usize, available: usize },
    #[error("inconsistent dataset: {0}")]
    Inconsistent(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SplitTag {
    Train,
    Validation,
    Test,
}

/// Images scaled to `[0, 1]` with integer class labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    /// `[channels, height, width]` of one sample.
    pub sample_shape: [usize; 3],
    pub num_classes: usize,
    images: Vec<f32>,
    labels: Vec<u8>,
    pub tag: SplitTag,
}

impl Dataset {
    pub fn new(
        sample_shape: [usize; 3],
        num_classes: usize,
        images: Vec<f32>,
        labels: Vec<u8>,
        tag: SplitTag,
    ) -> Result<Self, DataError> {
        let per: usize = sample_shape.iter().product();
        if per == 0 || images.len() != per * labels.len() {
            return Err(DataError::Inconsistent(format!(
                "{} values for {} samples of shape {:?}",
                images.len(),
                labels.len(),
                sample_shape
            )));
        }
        if let Some((index, &label)) = labels
            .iter()
            .enumerate()
            .find(|(_, &l)| l as usize >= num_classes)
        {
            return Err(DataError::LabelOutOfRange { index, label });
        }
        Ok(Self { sample_shape, num_classes, images, labels, tag })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sample_len(&self) -> usize {
        self.sample_shape.iter().product()
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn image(&self, index: usize) -> &[f32] {
        let n = self.sample_len();
        &self.images[index * n..(index + 1) * n]
    }

    pub fn images(&self) -> &[f32] {
        &self.images
    }

    /// One-hot label matrix `[n, classes]`.
    pub fn one_hot<T: Real>(&self) -> Tensor<T> {
        let c = self.num_classes;
        let mut t = Tensor::zeros(&[self.len(), c]);
        for (i, &l) in self.labels.iter().enumerate() {
            t.data_mut()[i * c + l as usize] = T::one();
        }
        t
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &l in &self.labels {
            counts[l as usize] += 1;
        }
        counts
    }

    /// New dataset holding the given samples in the given order.
    pub fn select(&self, indices: &[usize], tag: SplitTag) -> Dataset {
        let n = self.sample_len();
        let mut images = Vec::with_capacity(indices.len() * n);
        for &i in indices {
            images.extend_from_slice(self.image(i));
        }
        Dataset {
            sample_shape: self.sample_shape,
            num_classes: self.num_classes,
            images,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            tag,
        }
    }

    /// Stacks samples into `[batch, c, h, w]` plus class indices.
    pub fn batch<T: Real>(&self, indices: &[usize]) -> (Tensor<T>, Vec<usize>) {
        let [c, h, w] = self.sample_shape;
        let mut data = Vec::with_capacity(indices.len() * self.sample_len());
        for &i in indices {
            data.extend(self.image(i).iter().map(|&v| T::from_f64(v as f64)));
        }
        let x = Tensor::new(vec![indices.len(), c, h, w], data).expect("batch shape");
        (x, indices.iter().map(|&i| self.labels[i] as usize).collect())
    }
}

fn read_u32(bytes: &[u8], offset: usize, what: &'static str) -> Result<u32, DataError> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
        .ok_or(DataError::Truncated { what, needed: offset + 4, available: bytes.len() })
}

/// Parses an IDX3 image file body; returns `(count, rows, cols, pixels)`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<(usize, usize, usize, &[u8]), DataError> {
    let magic = read_u32(bytes, 0, "image")?;
    if magic != IMAGE_MAGIC {
        return Err(DataError::BadMagic { what: "image", expected: IMAGE_MAGIC, found: magic });
    }
    let n = read_u32(bytes, 4, "image")? as usize;
    let rows = read_u32(bytes, 8, "image")? as usize;
    let cols = read_u32(bytes, 12, "image")? as usize;
    let needed = 16 + n * rows * cols;
    if bytes.len() < needed {
        return Err(DataError::Truncated { what: "image", needed, available: bytes.len() });
    }
    Ok((n, rows, cols, &bytes[16..needed]))
}

/// Parses an IDX1 label file body.
pub fn parse_idx_labels(bytes: &[u8]) -> Result<&[u8], DataError> {
    let magic = read_u32(bytes, 0, "label")?;
    if magic != LABEL_MAGIC {
        return Err(DataError::BadMagic { what: "label", expected: LABEL_MAGIC, found: magic });
    }
    let n = read_u32(bytes, 4, "label")? as usize;
    let needed = 8 + n;
    if bytes.len() < needed {
        return Err(DataError::Truncated { what: "label", needed, available: bytes.len() });
    }
    Ok(&bytes[8..needed])
}

/// Builds an MNIST dataset from raw IDX bytes.
pub fn dataset_from_idx(image_bytes: &[u8], label_bytes: &[u8]) -> Result<Dataset, DataError> {
    let (n, rows, cols, pixels) = parse_idx_images(image_bytes)?;
    if (rows, cols) != (28, 28) {
        return Err(DataError::Dimensions { rows, cols });
    }
    let labels = parse_idx_labels(label_bytes)?;
    if labels.len() != n {
        return Err(DataError::CountMismatch { images: n, labels: labels.len() });
    }
    if let Some((index, &label)) = labels.iter().enumerate().find(|(_, &l)| l > 9) {
        return Err(DataError::LabelOutOfRange { index, label });
    }
    let images = pixels.iter().map(|&p| p as f32 / 255.0).collect();
    Dataset::new([1, 28, 28], 10, images, labels.to_vec(), SplitTag::Train)
}

/// Reads a file, decompressing it when the name ends in `.gz`.
pub fn read_maybe_gz(path: &Path) -> Result<Vec<u8>, DataError> {
    let io = |source| DataError::Io { path: path.to_path_buf(), source };
    let mut file = File::open(path).map_err(io)?;
    let mut out = Vec::new();
    if path.extension().is_some_and(|e| e == "gz") {
        GzDecoder::new(file).read_to_end(&mut out).map_err(io)?;
    } else {
        file.read_to_end(&mut out).map_err(io)?;
    }
    Ok(out)
}

/// Loads an image/label IDX pair (plain or gzip-compressed).
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset, DataError> {
    dataset_from_idx(&read_maybe_gz(images_path)?, &read_maybe_gz(labels_path)?)
}

/// Locates `<prefix>-images-idx3-ubyte[.gz]` and the matching label file.
pub fn find_idx_pair(dir: &Path, prefix: &str) -> Option<(PathBuf, PathBuf)> {
    let pick = |stem: String| {
        [dir.join(&stem), dir.join(format!("{stem}.gz"))]
            .into_iter()
            .find(|p| p.exists())
    };
    Some((
        pick(format!("{prefix}-images-idx3-ubyte"))?,
        pick(format!("{prefix}-labels-idx1-ubyte"))?,
    ))
}

/// Seeded shuffle, then the first `validation_count` samples form the
/// validation split. Both splits keep shuffled order.
pub fn split(d: &Dataset, validation_count: usize, seed: u64) -> Result<(Dataset, Dataset), DataError> {
    if validation_count == 0 || validation_count >= d.len() {
        return Err(DataError::InvalidCount { count: validation_count, available: d.len() });
    }
    let mut order: Vec<usize> = (0..d.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (val, train) = order.split_at(validation_count);
    Ok((d.select(train, SplitTag::Train), d.select(val, SplitTag::Validation)))
}

/// Per-class quotas summing to `count` that differ by at most one unless a
/// class runs out of samples. Extra samples go to the lowest labels first.
fn quotas(available: &[usize], count: usize) -> Vec<usize> {
    let mut quota = vec![0; available.len()];
    let mut left = count;
    while left > 0 {
        let open: Vec<usize> = (0..available.len()).filter(|&c| quota[c] < available[c]).collect();
        let level = open.iter().map(|&c| quota[c]).min().expect("count <= n");
        let lowest: Vec<usize> = open.into_iter().filter(|&c| quota[c] == level).collect();
        for c in lowest.into_iter().take(left) {
            quota[c] += 1;
            left -= 1;
        }
    }
    quota
}

/// Class-stratified random choice of `count` indices, sorted.
fn stratified_indices(d: &Dataset, count: usize, seed: u64) -> Result<Vec<usize>, DataError> {
    if count > d.len() {
        return Err(DataError::InvalidCount { count, available: d.len() });
    }
    let mut by_class = vec![Vec::new(); d.num_classes];
    for (i, &l) in d.labels.iter().enumerate() {
        by_class[l as usize].push(i);
    }
    let quota = quotas(&by_class.iter().map(Vec::len).collect::<Vec<_>>(), count);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = Vec::with_capacity(count);
    for (members, q) in by_class.iter_mut().zip(quota) {
        members.shuffle(&mut rng);
        chosen.extend_from_slice(&members[..q]);
    }
    chosen.sort_unstable();
    Ok(chosen)
}

/// Class-stratified random subset of `count` samples, in original order.
pub fn subset(d: &Dataset, count: usize, seed: u64) -> Result<Dataset, DataError> {
    Ok(d.select(&stratified_indices(d, count, seed)?, d.tag))
}

/// Like [`split`], but the validation part is class-stratified and both
/// parts keep the original order.
pub fn stratified_split(
    d: &Dataset,
    validation_count: usize,
    seed: u64,
) -> Result<(Dataset, Dataset), DataError> {
    if validation_count == 0 || validation_count >= d.len() {
        return Err(DataError::InvalidCount { count: validation_count, available: d.len() });
    }
    let val = stratified_indices(d, validation_count, seed)?;
    let mut in_val = vec![false; d.len()];
    val.iter().for_each(|&i| in_val[i] = true);
    let train: Vec<usize> = (0..d.len()).filter(|&i| !in_val[i]).collect();
    Ok((d.select(&train, SplitTag::Train), d.select(&val, SplitTag::Validation)))
}

/// Shuffled minibatch index lists covering every sample once; the final
/// batch may be short.
pub fn batches<R: Rng + ?Sized>(len: usize, batch_size: usize, rng: &mut R) -> Vec<Vec<usize>> {
    assert!(batch_size >= 1, "batch size must be positive");
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(rng);
    order.chunks(batch_size).map(<[usize]>::to_vec).collect()
}

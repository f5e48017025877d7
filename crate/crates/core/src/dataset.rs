//! Dataset ingestion: IDX (MNIST, Fashion-MNIST), CIFAR-10 binary batches
//! and the Gray50 container, plus seeded subsampling and train/test
//! partitioning.

use std::fmt;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use flate2::read::GzDecoder;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{DataError, Error, Result};
use crate::seed;

/// Every task has ten classes.
pub const CLASS_COUNT: usize = 10;

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
const CIFAR_SIDE: usize = 32;
const CIFAR_RECORD: usize = 1 + 3 * CIFAR_SIDE * CIFAR_SIDE;
const GRAY50_MAGIC: &[u8; 4] = b"GR50";
const GRAY50_HEADER: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DatasetKind {
    Mnist,
    FashionMnist,
    Cifar10,
    Gray50,
}

impl DatasetKind {
    pub fn name(self) -> &'static str {
        match self {
            DatasetKind::Mnist => "mnist",
            DatasetKind::FashionMnist => "fashion-mnist",
            DatasetKind::Cifar10 => "cifar10",
            DatasetKind::Gray50 => "gray50",
        }
    }
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mnist" => Ok(DatasetKind::Mnist),
            "fashion-mnist" | "fashion_mnist" | "fashionmnist" => Ok(DatasetKind::FashionMnist),
            "cifar10" | "cifar-10" => Ok(DatasetKind::Cifar10),
            "gray50" | "imagenette" => Ok(DatasetKind::Gray50),
            other => Err(Error::InvalidArgument(format!("unknown dataset kind {other:?}"))),
        }
    }
}

/// An 8-bit image as stored on disk. Color images keep planar R, G, B
/// channels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawImage {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub pixels: Vec<u8>,
}

impl RawImage {
    pub fn gray(height: usize, width: usize, pixels: Vec<u8>) -> Self {
        assert_eq!(pixels.len(), height * width);
        RawImage {
            height,
            width,
            channels: 1,
            pixels,
        }
    }

    pub fn color(height: usize, width: usize, planar_rgb: Vec<u8>) -> Self {
        assert_eq!(planar_rgb.len(), 3 * height * width);
        RawImage {
            height,
            width,
            channels: 3,
            pixels: planar_rgb,
        }
    }

    pub fn is_color(&self) -> bool {
        self.channels == 3
    }

    /// Luminance in the 8-bit domain, before any rounding.
    pub fn luminance(&self) -> Vec<f64> {
        let n = self.height * self.width;
        if self.channels == 1 {
            return self.pixels.iter().map(|&v| v as f64).collect();
        }
        let (r, rest) = self.pixels.split_at(n);
        let (g, b) = rest.split_at(n);
        (0..n)
            .map(|i| 0.299 * r[i] as f64 + 0.587 * g[i] as f64 + 0.114 * b[i] as f64)
            .collect()
    }

    /// Grayscale 8-bit copy (rounded luminance for color images).
    pub fn to_gray(&self) -> RawImage {
        if self.channels == 1 {
            return self.clone();
        }
        let pixels = self
            .luminance()
            .into_iter()
            .map(|v| v.round().clamp(0.0, 255.0) as u8)
            .collect();
        RawImage::gray(self.height, self.width, pixels)
    }
}

/// Labeled images from one source, order preserved from the file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImageSet {
    kind: DatasetKind,
    images: Vec<RawImage>,
    labels: Vec<u8>,
}

impl ImageSet {
    pub fn new(kind: DatasetKind, images: Vec<RawImage>, labels: Vec<u8>) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(Error::InvalidArgument(format!(
                "{} images but {} labels",
                images.len(),
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l as usize >= CLASS_COUNT) {
            return Err(Error::InvalidArgument(format!("label {bad} out of range")));
        }
        Ok(ImageSet {
            kind,
            images,
            labels,
        })
    }

    pub fn kind(&self) -> DatasetKind {
        self.kind
    }

    pub fn images(&self) -> &[RawImage] {
        &self.images
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn class_count(&self) -> usize {
        CLASS_COUNT
    }

    /// Subset in the given index order.
    pub fn select(&self, indices: &[usize]) -> ImageSet {
        ImageSet {
            kind: self.kind,
            images: indices.iter().map(|&i| self.images[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// First `n` images after a seeded shuffle (all of them if `n >= len`).
    pub fn subsample(&self, n: usize, seed: u64) -> ImageSet {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.shuffle(&mut seed::rng(seed, &[0x5b5a]));
        order.truncate(n);
        self.select(&order)
    }

    /// Grayscale copy of the whole set.
    pub fn to_gray(&self) -> ImageSet {
        ImageSet {
            kind: self.kind,
            images: self.images.iter().map(RawImage::to_gray).collect(),
            labels: self.labels.clone(),
        }
    }
}

/// A disjoint train/test partition.
#[derive(Clone, Debug)]
pub struct SplitPair {
    pub train: ImageSet,
    pub test: ImageSet,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    pub ratio: f64,
    pub seed: u64,
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(&raw[..])
            .read_to_end(&mut out)
            .map_err(|e| Error::io(path, e))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn need(path: &Path, bytes: &[u8], offset: usize, len: usize) -> Result<()> {
    if bytes.len() < offset + len {
        return Err(DataError::Truncated {
            path: path.to_path_buf(),
            offset: offset as u64,
            expected: len as u64,
            found: bytes.len().saturating_sub(offset) as u64,
        }
        .into());
    }
    Ok(())
}

fn be_u32(bytes: &[u8], offset: usize) -> u32 {
    u32::from_be_bytes(bytes[offset..offset + 4].try_into().unwrap())
}

fn check_label(path: &Path, label: u8, offset: usize) -> Result<u8> {
    if label as usize >= CLASS_COUNT {
        return Err(DataError::LabelOutOfRange {
            path: path.to_path_buf(),
            offset: offset as u64,
            label,
        }
        .into());
    }
    Ok(label)
}

/// Path of the IDX label file that accompanies an IDX image file.
pub fn idx_labels_path(images: &Path) -> PathBuf {
    let name = images
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let swapped = name
        .replace("images-idx3", "labels-idx1")
        .replace("images.idx3", "labels.idx1");
    images.with_file_name(swapped)
}

fn parse_idx_images(path: &Path, bytes: &[u8]) -> Result<Vec<RawImage>> {
    need(path, bytes, 0, 16)?;
    let magic = be_u32(bytes, 0);
    if magic != IDX_IMAGES_MAGIC {
        return Err(DataError::MalformedHeader {
            path: path.to_path_buf(),
            offset: 0,
            reason: format!("magic {magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x}"),
        }
        .into());
    }
    let count = be_u32(bytes, 4) as usize;
    let rows = be_u32(bytes, 8) as usize;
    let cols = be_u32(bytes, 12) as usize;
    if rows == 0 || cols == 0 {
        return Err(DataError::MalformedHeader {
            path: path.to_path_buf(),
            offset: 8,
            reason: format!("zero image dimension {rows}x{cols}"),
        }
        .into());
    }
    let size = rows * cols;
    need(path, bytes, 16, count * size)?;
    Ok(bytes[16..16 + count * size]
        .chunks_exact(size)
        .map(|px| RawImage::gray(rows, cols, px.to_vec()))
        .collect())
}

fn parse_idx_labels(path: &Path, bytes: &[u8]) -> Result<Vec<u8>> {
    need(path, bytes, 0, 8)?;
    let magic = be_u32(bytes, 0);
    if magic != IDX_LABELS_MAGIC {
        return Err(DataError::MalformedHeader {
            path: path.to_path_buf(),
            offset: 0,
            reason: format!("magic {magic:#010x}, expected {IDX_LABELS_MAGIC:#010x}"),
        }
        .into());
    }
    let count = be_u32(bytes, 4) as usize;
    need(path, bytes, 8, count)?;
    bytes[8..8 + count]
        .iter()
        .enumerate()
        .map(|(i, &l)| check_label(path, l, 8 + i))
        .collect()
}

/// Load an IDX image file and its label file.
pub fn load_idx(kind: DatasetKind, images: &Path, labels: &Path) -> Result<ImageSet> {
    let imgs = parse_idx_images(images, &read_bytes(images)?)?;
    let labs = parse_idx_labels(labels, &read_bytes(labels)?)?;
    if imgs.len() != labs.len() {
        return Err(DataError::MalformedHeader {
            path: labels.to_path_buf(),
            offset: 4,
            reason: format!(
                "label count {} does not match image count {}",
                labs.len(),
                imgs.len()
            ),
        }
        .into());
    }
    ImageSet::new(kind, imgs, labs)
}

fn parse_cifar(path: &Path, bytes: &[u8], images: &mut Vec<RawImage>, labels: &mut Vec<u8>) -> Result<()> {
    let whole = bytes.len() / CIFAR_RECORD * CIFAR_RECORD;
    if whole != bytes.len() {
        return Err(DataError::Truncated {
            path: path.to_path_buf(),
            offset: whole as u64,
            expected: CIFAR_RECORD as u64,
            found: (bytes.len() - whole) as u64,
        }
        .into());
    }
    for (i, rec) in bytes.chunks_exact(CIFAR_RECORD).enumerate() {
        labels.push(check_label(path, rec[0], i * CIFAR_RECORD)?);
        images.push(RawImage::color(CIFAR_SIDE, CIFAR_SIDE, rec[1..].to_vec()));
    }
    Ok(())
}

/// CIFAR-10 binary batches. A directory loads `data_batch_1.bin` through
/// `data_batch_5.bin` (whichever exist) in order.
pub fn load_cifar10(path: &Path) -> Result<ImageSet> {
    let files: Vec<PathBuf> = if path.is_dir() {
        let found: Vec<PathBuf> = (1..=5)
            .map(|i| path.join(format!("data_batch_{i}.bin")))
            .filter(|p| p.exists())
            .collect();
        if found.is_empty() {
            return Err(Error::io(
                path,
                std::io::Error::new(std::io::ErrorKind::NotFound, "no data_batch_*.bin files"),
            ));
        }
        found
    } else {
        vec![path.to_path_buf()]
    };
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for f in &files {
        parse_cifar(f, &read_bytes(f)?, &mut images, &mut labels)?;
    }
    ImageSet::new(DatasetKind::Cifar10, images, labels)
}

fn parse_gray50(path: &Path, bytes: &[u8]) -> Result<ImageSet> {
    need(path, bytes, 0, GRAY50_HEADER)?;
    if &bytes[0..4] != GRAY50_MAGIC {
        return Err(DataError::MalformedHeader {
            path: path.to_path_buf(),
            offset: 0,
            reason: "missing GR50 magic".into(),
        }
        .into());
    }
    let count = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let height = u16::from_le_bytes(bytes[8..10].try_into().unwrap()) as usize;
    let width = u16::from_le_bytes(bytes[10..12].try_into().unwrap()) as usize;
    if count > 0 && (height == 0 || width == 0) {
        return Err(DataError::MalformedHeader {
            path: path.to_path_buf(),
            offset: 8,
            reason: format!("zero image dimension {height}x{width}"),
        }
        .into());
    }
    let record = 1 + height * width;
    need(path, bytes, GRAY50_HEADER, count * record)?;
    let mut images = Vec::with_capacity(count);
    let mut labels = Vec::with_capacity(count);
    for i in 0..count {
        let off = GRAY50_HEADER + i * record;
        labels.push(check_label(path, bytes[off], off)?);
        images.push(RawImage::gray(height, width, bytes[off + 1..off + record].to_vec()));
    }
    ImageSet::new(DatasetKind::Gray50, images, labels)
}

/// Load a dataset of the given kind. For IDX kinds `path` is the image file
/// (optionally gzipped); the label file is found next to it.
pub fn load_dataset(kind: DatasetKind, path: &Path) -> Result<ImageSet> {
    match kind {
        DatasetKind::Mnist | DatasetKind::FashionMnist => {
            load_idx(kind, path, &idx_labels_path(path))
        }
        DatasetKind::Cifar10 => load_cifar10(path),
        DatasetKind::Gray50 => parse_gray50(path, &read_bytes(path)?),
    }
}

/// Size in bytes of a Gray50 file holding `count` images of `h` x `w`.
pub fn gray50_file_size(count: usize, height: usize, width: usize) -> usize {
    GRAY50_HEADER + count * (height * width + 1)
}

/// Write a grayscale set as a Gray50 file.
pub fn save_gray50(set: &ImageSet, path: &Path) -> Result<()> {
    let (height, width) = match set.images.first() {
        Some(first) => (first.height, first.width),
        None => (crate::image::RETINA_SIZE, crate::image::RETINA_SIZE),
    };
    for (i, img) in set.images.iter().enumerate() {
        if img.channels != 1 {
            return Err(Error::InvalidArgument(format!(
                "image {i} has {} channels; Gray50 stores grayscale only",
                img.channels
            )));
        }
        if img.height != height || img.width != width {
            return Err(Error::MixedDimensions(format!(
                "image {i} is {}x{}, image 0 is {height}x{width}",
                img.height, img.width
            )));
        }
    }
    if height > u16::MAX as usize || width > u16::MAX as usize || set.len() > u32::MAX as usize {
        return Err(Error::InvalidArgument("set too large for Gray50".into()));
    }
    let mut out = Vec::with_capacity(gray50_file_size(set.len(), height, width));
    out.extend_from_slice(GRAY50_MAGIC);
    out.extend_from_slice(&(set.len() as u32).to_le_bytes());
    out.extend_from_slice(&(height as u16).to_le_bytes());
    out.extend_from_slice(&(width as u16).to_le_bytes());
    for (img, &label) in set.images.iter().zip(&set.labels) {
        out.push(label);
        out.extend_from_slice(&img.pixels);
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&out).map_err(|e| Error::io(path, e))
}

/// Seeded random train/test partition. The training part holds
/// `round(ratio * n)` samples; when possible, every label present in the
/// set appears on both sides.
pub fn split_train_test(set: &ImageSet, ratio: f64, seed: u64) -> Result<SplitPair> {
    let (train_indices, test_indices) = split_indices(set.labels(), ratio, seed)?;
    Ok(SplitPair {
        train: set.select(&train_indices),
        test: set.select(&test_indices),
        train_indices,
        test_indices,
        ratio,
        seed,
    })
}

/// The index partition behind [`split_train_test`], for data held outside
/// an [`ImageSet`].
pub fn split_indices(labels: &[u8], ratio: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidArgument(format!("split ratio {ratio} not in (0, 1)")));
    }
    if labels.is_empty() {
        return Err(Error::InvalidArgument("cannot split an empty set".into()));
    }
    let n = labels.len();
    let n_train = ((ratio * n as f64).round() as usize).min(n);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng(seed, &[0x5911]));
    let (train_part, test_part) = order.split_at_mut(n_train);
    balance_labels(labels, train_part, test_part);
    Ok((train_part.to_vec(), test_part.to_vec()))
}

/// Swap samples so that labels missing from one side are represented,
/// never emptying a label on the donor side.
fn balance_labels(labels: &[u8], a: &mut [usize], b: &mut [usize]) {
    for _ in 0..2 {
        fix_missing(labels, a, b);
        fix_missing(labels, b, a);
    }
}

fn counts(labels: &[u8], idx: &[usize]) -> [usize; 256] {
    let mut c = [0usize; 256];
    for &i in idx {
        c[labels[i] as usize] += 1;
    }
    c
}

// Give `needy` one sample of every label it lacks, taken from `donor`.
fn fix_missing(labels: &[u8], needy: &mut [usize], donor: &mut [usize]) {
    let mut nc = counts(labels, needy);
    let mut dc = counts(labels, donor);
    for label in 0..256 {
        if nc[label] > 0 || dc[label] < 2 {
            continue;
        }
        // the needy side hands back a sample whose label it has in excess
        let give_back = needy
            .iter()
            .rposition(|&i| nc[labels[i] as usize] >= 2 && labels[i] as usize != label);
        let take = donor.iter().rposition(|&i| labels[i] as usize == label);
        if let (Some(gi), Some(ti)) = (give_back, take) {
            let given = labels[needy[gi]] as usize;
            std::mem::swap(&mut needy[gi], &mut donor[ti]);
            nc[given] -= 1;
            nc[label] += 1;
            dc[label] -= 1;
            dc[given] += 1;
        }
    }
}

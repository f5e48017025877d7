//! Image preparation: grayscale conversion, normalization, resizing to the
//! retina input size, augmentation, and splitting into `p x p` parts.

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{ImageSet, RawImage};
use crate::error::{Error, Result};
use crate::image::{Image, RETINA_SIZE};
use crate::seed;

/// Convert an 8-bit image to a 50x50 unit-domain grayscale image.
pub fn standardize(raw: &RawImage) -> Image {
    let lum = raw.luminance();
    let data = lum.into_iter().map(|v| (v / 255.0) as f32).collect();
    Image::new(raw.height, raw.width, data).resize(RETINA_SIZE, RETINA_SIZE)
}

/// Re-standardize an image that is already in the unit domain.
pub fn standardize_unit(image: &Image) -> Image {
    let mut out = image.resize(RETINA_SIZE, RETINA_SIZE);
    out.clamp_unit();
    out
}

pub fn standardize_set(set: &ImageSet) -> Vec<Image> {
    set.images().iter().map(standardize).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
}

/// One augmentation with its drawn parameter.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum AugmentationKind {
    /// Rotation angle in degrees, +45 or -45.
    Rotate { degrees: f64 },
    /// Additive noise; `sigma` is in the unit domain (0.1 or 0.2).
    GaussianNoise { sigma: f64 },
    /// Pixels removed from each side (5 or 7), then resized back.
    Crop { margin: usize },
    /// Shift by `fraction` of the image size, in [-0.1, 0.1].
    Translate { axis: Axis, fraction: f64 },
}

/// The four augmentation families.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Family {
    Rotate,
    GaussianNoise,
    Crop,
    Translate,
}

pub const FAMILIES: [Family; 4] = [
    Family::Rotate,
    Family::GaussianNoise,
    Family::Crop,
    Family::Translate,
];

impl AugmentationKind {
    pub fn family(&self) -> Family {
        match self {
            AugmentationKind::Rotate { .. } => Family::Rotate,
            AugmentationKind::GaussianNoise { .. } => Family::GaussianNoise,
            AugmentationKind::Crop { .. } => Family::Crop,
            AugmentationKind::Translate { .. } => Family::Translate,
        }
    }

    /// Draw the parameter for a family from its legal set.
    pub fn sample<R: Rng + ?Sized>(family: Family, rng: &mut R) -> Self {
        match family {
            Family::Rotate => AugmentationKind::Rotate {
                degrees: if rng.random_bool(0.5) { 45.0 } else { -45.0 },
            },
            Family::GaussianNoise => AugmentationKind::GaussianNoise {
                sigma: if rng.random_bool(0.5) { 0.1 } else { 0.2 },
            },
            Family::Crop => AugmentationKind::Crop {
                margin: if rng.random_bool(0.5) { 5 } else { 7 },
            },
            Family::Translate => AugmentationKind::Translate {
                axis: if rng.random_bool(0.5) { Axis::X } else { Axis::Y },
                fraction: rng.random_range(-0.10..=0.10),
            },
        }
    }

    /// Apply to a standardized image; the result is clamped to [0, 1].
    pub fn apply<R: Rng + ?Sized>(&self, image: &Image, rng: &mut R) -> Image {
        let mut out = match *self {
            AugmentationKind::Rotate { degrees } => rotate(image, degrees),
            AugmentationKind::GaussianNoise { sigma } => add_noise(image, sigma, rng),
            AugmentationKind::Crop { margin } => crop_margin(image, margin),
            AugmentationKind::Translate { axis, fraction } => translate(image, axis, fraction),
        };
        out.clamp_unit();
        out
    }
}

/// Rotation about the image center with bilinear sampling; exposed
/// corners are black.
pub fn rotate(image: &Image, degrees: f64) -> Image {
    let (h, w) = (image.height(), image.width());
    let cy = (h as f64 - 1.0) / 2.0;
    let cx = (w as f64 - 1.0) / 2.0;
    let (s, c) = degrees.to_radians().sin_cos();
    // inverse map: destination pixel -> source coordinate
    Image::from_fn(h, w, |y, x| {
        let dx = x as f64 - cx;
        let dy = y as f64 - cy;
        let sx = c * dx - s * dy + cx;
        let sy = s * dx + c * dy + cy;
        image.sample_zero_fill(sy, sx) as f32
    })
}

pub fn add_noise<R: Rng + ?Sized>(image: &Image, sigma: f64, rng: &mut R) -> Image {
    let normal = Normal::new(0.0, sigma).expect("finite sigma");
    let data = image
        .pixels()
        .iter()
        .map(|&v| (v as f64 + normal.sample(rng)) as f32)
        .collect();
    Image::new(image.height(), image.width(), data)
}

/// Remove `margin` pixels from every side and resize back.
pub fn crop_margin(image: &Image, margin: usize) -> Image {
    let (h, w) = (image.height(), image.width());
    assert!(2 * margin < h && 2 * margin < w, "crop margin too large");
    image
        .crop(margin, margin, h - 2 * margin, w - 2 * margin)
        .resize(h, w)
}

/// Integer shift by `round(fraction * size)` pixels; vacated pixels are black.
pub fn translate(image: &Image, axis: Axis, fraction: f64) -> Image {
    let (h, w) = (image.height(), image.width());
    let len = match axis {
        Axis::X => w,
        Axis::Y => h,
    };
    let shift = (fraction * len as f64).round() as isize;
    Image::from_fn(h, w, |y, x| {
        let (sy, sx) = match axis {
            Axis::X => (y as isize, x as isize - shift),
            Axis::Y => (y as isize - shift, x as isize),
        };
        if sy < 0 || sx < 0 || sy >= h as isize || sx >= w as isize {
            0.0
        } else {
            image.get(sy as usize, sx as usize)
        }
    })
}

/// The two augmentations chosen for one image: distinct families, drawn
/// without replacement.
pub fn choose_pair<R: Rng + ?Sized>(rng: &mut R) -> (AugmentationKind, AugmentationKind) {
    let picks = index::sample(rng, FAMILIES.len(), 2);
    let a = AugmentationKind::sample(FAMILIES[picks.index(0)], rng);
    let b = AugmentationKind::sample(FAMILIES[picks.index(1)], rng);
    (a, b)
}

/// Two independently augmented copies of a standardized image.
pub fn augment_pair(image: &Image, rng_seed: u64) -> (Image, Image) {
    let mut rng = seed::rng(rng_seed, &[0xa0]);
    let (a, b) = choose_pair(&mut rng);
    let first = a.apply(image, &mut rng);
    let second = b.apply(image, &mut rng);
    (first, second)
}

/// Each image followed by its two augmented copies, so the output is three
/// times the input. Augmentation seeds depend only on `(seed, index)`.
pub fn augment_set(images: &[Image], labels: &[u8], seed: u64) -> (Vec<Image>, Vec<u8>) {
    use rayon::prelude::*;
    let triples: Vec<[Image; 3]> = images
        .par_iter()
        .enumerate()
        .map(|(i, img)| {
            let (a, b) = augment_pair(img, seed::derive(seed, &[i as u64]));
            [img.clone(), a, b]
        })
        .collect();
    let out_labels = labels.iter().flat_map(|&l| [l, l, l]).collect();
    (triples.into_iter().flatten().collect(), out_labels)
}

/// Number of parts per side; the image splits into `p * p` parts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SplitFactor(u8);

impl SplitFactor {
    pub fn new(p: usize) -> Result<Self> {
        if (1..=4).contains(&p) {
            Ok(SplitFactor(p as u8))
        } else {
            Err(Error::InvalidArgument(format!("split factor {p} not in 1..=4")))
        }
    }

    pub fn get(self) -> usize {
        self.0 as usize
    }

    pub fn parts(self) -> usize {
        self.get() * self.get()
    }
}

/// Start and length of part `i` of `p` along an axis of length `len`. Parts
/// are `len / p` wide and the last one absorbs the remainder.
pub fn part_bounds(len: usize, p: usize, i: usize) -> (usize, usize) {
    let base = len / p;
    let start = i * base;
    let end = if i + 1 == p { len } else { start + base };
    (start, end - start)
}

/// Part `k` (row-major) of a `p x p` split, resized to the source shape.
pub fn split_part(image: &Image, p: SplitFactor, k: usize) -> Image {
    let p = p.get();
    assert!(k < p * p, "part index out of range");
    if p == 1 {
        return image.clone();
    }
    let (y0, h) = part_bounds(image.height(), p, k / p);
    let (x0, w) = part_bounds(image.width(), p, k % p);
    image.crop(y0, x0, h, w).resize(image.height(), image.width())
}

/// All `p * p` parts in row-major order.
pub fn split_image(image: &Image, p: SplitFactor) -> Vec<Image> {
    (0..p.parts()).map(|k| split_part(image, p, k)).collect()
}

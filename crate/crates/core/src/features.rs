//! From retinal responses to classifier inputs: min/max combination of the
//! response trend, validity filtering, and concatenation of split parts.

use std::fmt;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::ImageSet;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::preprocess::{split_part, standardize_set, SplitFactor};
use crate::retina::{RateVector, RetinaModel};
use crate::sta::{valid_indices, ReceptiveFieldReport};
use crate::temporal::{build_rows, Adjust, Frame, TemporalConfig, TemporalRow};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CombineMode {
    Min,
    Max,
    None,
}

impl CombineMode {
    pub fn as_str(self) -> &'static str {
        match self {
            CombineMode::Min => "min",
            CombineMode::Max => "max",
            CombineMode::None => "none",
        }
    }
}

impl fmt::Display for CombineMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CombineMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "min" => Ok(CombineMode::Min),
            "max" => Ok(CombineMode::Max),
            "none" => Ok(CombineMode::None),
            _ => Err(Error::InvalidArgument(format!("unknown combine mode {s:?}"))),
        }
    }
}

/// Elementwise min or max over the response trend of one image.
pub fn combine(arrays: &[RateVector], mode: CombineMode) -> Result<RateVector> {
    let first = arrays
        .first()
        .ok_or_else(|| Error::Combine("no arrays to combine".into()))?;
    if let Some(bad) = arrays.iter().find(|a| a.len() != first.len()) {
        return Err(Error::LengthMismatch {
            expected: first.len(),
            found: bad.len(),
        });
    }
    let pick: fn(f64, f64) -> f64 = match mode {
        CombineMode::Min => f64::min,
        CombineMode::Max => f64::max,
        CombineMode::None if arrays.len() == 1 => return Ok(first.clone()),
        CombineMode::None => {
            return Err(Error::Combine(format!(
                "mode none needs a single array, got {}",
                arrays.len()
            )))
        }
    };
    let mut out = first.0.clone();
    for a in &arrays[1..] {
        for (o, &v) in out.iter_mut().zip(&a.0) {
            *o = pick(*o, v);
        }
    }
    Ok(RateVector(out))
}

/// Row-major concatenation of the per-part responses.
pub fn concatenate(parts: &[RateVector]) -> Result<Vec<f64>> {
    let width = parts.first().map_or(0, RateVector::len);
    let mut out = Vec::with_capacity(width * parts.len());
    for p in parts {
        if p.len() != width {
            return Err(Error::LengthMismatch {
                expected: width,
                found: p.len(),
            });
        }
        out.extend_from_slice(&p.0);
    }
    Ok(out)
}

/// Everything besides the model that determines a feature matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub split: usize,
    pub adjust: Adjust,
    pub keep_valid_only: bool,
    pub combine: CombineMode,
    /// Offsets the noise keys of the model's output noise.
    pub noise_key: u64,
}

impl PipelineConfig {
    pub fn new(split: usize, adjust: Adjust, keep_valid_only: bool, combine: CombineMode) -> Self {
        PipelineConfig {
            split,
            adjust,
            keep_valid_only,
            combine,
            noise_key: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        SplitFactor::new(self.split)?;
        match (self.adjust, self.combine) {
            (Adjust::Yes, CombineMode::None) => Err(Error::Combine(
                "adjust=yes needs combine min or max".into(),
            )),
            (Adjust::No, CombineMode::Min | CombineMode::Max) => Err(Error::Combine(
                "adjust=no takes the snapshot directly (combine none)".into(),
            )),
            _ => Ok(()),
        }
    }
}

/// Where a feature matrix came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub dataset: String,
    pub split: usize,
    pub adjust: Adjust,
    pub valid: bool,
    pub combine: CombineMode,
    pub model: String,
    pub temporal_interval: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    n_features: usize,
    values: Vec<f64>,
    labels: Vec<u8>,
    pub provenance: Provenance,
}

#[derive(Serialize, Deserialize)]
struct Header {
    provenance: Provenance,
    rows: usize,
    cols: usize,
}

impl FeatureMatrix {
    pub fn new(n_features: usize, values: Vec<f64>, labels: Vec<u8>, provenance: Provenance) -> Result<Self> {
        if values.len() != n_features * labels.len() {
            return Err(Error::LengthMismatch {
                expected: n_features * labels.len(),
                found: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::FeatureFile("non-finite feature value".into()));
        }
        Ok(FeatureMatrix {
            n_features,
            values,
            labels,
            provenance,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn select(&self, indices: &[usize]) -> FeatureMatrix {
        let mut values = Vec::with_capacity(indices.len() * self.n_features);
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        FeatureMatrix {
            n_features: self.n_features,
            values,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            provenance: self.provenance.clone(),
        }
    }

    /// JSON header line, then one CSV line per sample ending in the label.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let header = Header {
            provenance: self.provenance.clone(),
            rows: self.n_samples(),
            cols: self.n_features,
        };
        let to_err = |e: std::io::Error| Error::FeatureFile(e.to_string());
        writeln!(w, "{}", serde_json::to_string(&header).expect("header serializes")).map_err(to_err)?;
        let mut line = String::new();
        for i in 0..self.n_samples() {
            line.clear();
            for v in self.row(i) {
                line.push_str(&format!("{v},"));
            }
            line.push_str(&self.labels[i].to_string());
            writeln!(w, "{line}").map_err(to_err)?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header_line = lines
            .next()
            .ok_or_else(|| Error::FeatureFile("missing header line".into()))?
            .map_err(|e| Error::FeatureFile(e.to_string()))?;
        let header: Header =
            serde_json::from_str(&header_line).map_err(|e| Error::FeatureFile(format!("header: {e}")))?;
        let mut values = Vec::with_capacity(header.rows * header.cols);
        let mut labels = Vec::with_capacity(header.rows);
        for (n, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::FeatureFile(e.to_string()))?;
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != header.cols + 1 {
                return Err(Error::FeatureFile(format!(
                    "line {}: expected {} fields, found {}",
                    n + 2,
                    header.cols + 1,
                    fields.len()
                )));
            }
            for f in &fields[..header.cols] {
                values.push(
                    f.parse::<f64>()
                        .map_err(|e| Error::FeatureFile(format!("line {}: {e}", n + 2)))?,
                );
            }
            labels.push(
                fields[header.cols]
                    .parse::<u8>()
                    .map_err(|e| Error::FeatureFile(format!("line {}: label {e}", n + 2)))?,
            );
        }
        if labels.len() != header.rows {
            return Err(Error::FeatureFile(format!(
                "header declares {} rows, found {}",
                header.rows,
                labels.len()
            )));
        }
        FeatureMatrix::new(header.cols, values, labels, header.provenance)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        self.write_to(&mut w)?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(BufReader::new(f))
    }
}

/// Model responses for every (image, part), reduced to the elementwise
/// min and max of the trend (identical for snapshot rows). One response
/// set serves every combine mode and validity choice.
#[derive(Clone, Debug)]
pub struct ResponseSet {
    split: usize,
    adjust: Adjust,
    n_neurons: usize,
    labels: Vec<u8>,
    /// `[image][part][neuron]`
    low: Vec<f64>,
    high: Vec<f64>,
}

fn predict_stream(model: &dyn RetinaModel, rows: &[TemporalRow], first_index: u64) -> Result<Vec<RateVector>> {
    match model.predict_batch(rows, first_index) {
        Ok(r) => Ok(r),
        Err(batch_err) => {
            // find the offending image to name it
            for (j, row) in rows.iter().enumerate() {
                if let Err(e) = model.predict(row, first_index + j as u64) {
                    return Err(Error::AtImage {
                        index: row.source_index,
                        source: Box::new(e),
                    });
                }
            }
            Err(batch_err)
        }
    }
}

impl ResponseSet {
    /// Split each standardized image, feed each part stream through the
    /// model, and keep the trend extremes per neuron.
    pub fn compute(images: &[Image], labels: &[u8], model: &dyn RetinaModel, split: usize, adjust: Adjust, noise_key: u64) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(Error::LengthMismatch {
                expected: images.len(),
                found: labels.len(),
            });
        }
        let p = SplitFactor::new(split)?;
        let cfg = TemporalConfig::new(model.temporal_interval(), adjust);
        cfg.validate()?;
        let parts = p.parts();
        let n_neurons = model.n_neurons();
        let per_image = cfg.rows_per_image();
        let width = parts * n_neurons;
        let mut low = vec![0.0; images.len() * width];
        let mut high = vec![0.0; images.len() * width];
        for k in 0..parts {
            let stream: Vec<Frame> = images.par_iter().map(|im| Arc::new(split_part(im, p, k))).collect();
            let rows = build_rows(&stream, &cfg)?;
            let first = (noise_key << 32).wrapping_add((k * rows.len()) as u64);
            let rates = predict_stream(model, &rows, first)?;
            for (i, trend) in rates.chunks(per_image).enumerate() {
                let lo = combine(trend, CombineMode::Min)?;
                let hi = combine(trend, CombineMode::Max)?;
                let at = i * width + k * n_neurons;
                low[at..at + n_neurons].copy_from_slice(&lo.0);
                high[at..at + n_neurons].copy_from_slice(&hi.0);
            }
        }
        Ok(ResponseSet {
            split,
            adjust,
            n_neurons,
            labels: labels.to_vec(),
            low,
            high,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn split(&self) -> usize {
        self.split
    }

    pub fn adjust(&self) -> Adjust {
        self.adjust
    }

    pub fn n_neurons(&self) -> usize {
        self.n_neurons
    }

    /// Responses of image `i`, part `k`, under `mode`.
    pub fn part(&self, i: usize, k: usize, mode: CombineMode) -> Result<RateVector> {
        let parts = self.split * self.split;
        let at = (i * parts + k) * self.n_neurons;
        let src = match (self.adjust, mode) {
            (Adjust::Yes, CombineMode::Min) | (Adjust::No, CombineMode::None) => &self.low,
            (Adjust::Yes, CombineMode::Max) => &self.high,
            _ => {
                return Err(Error::Combine(format!(
                    "combine {mode} does not apply to adjust={}",
                    self.adjust.as_str()
                )))
            }
        };
        Ok(RateVector(src[at..at + self.n_neurons].to_vec()))
    }

    /// Build the feature matrix, keeping only `neurons` when given.
    pub fn features(&self, mode: CombineMode, neurons: Option<&[usize]>, provenance: Provenance) -> Result<FeatureMatrix> {
        let parts = self.split * self.split;
        if let Some(idx) = neurons {
            if let Some(&bad) = idx.iter().find(|&&i| i >= self.n_neurons) {
                return Err(Error::InvalidArgument(format!(
                    "neuron {bad} out of range ({} neurons)",
                    self.n_neurons
                )));
            }
        }
        let a = neurons.map_or(self.n_neurons, <[usize]>::len);
        let mut values = Vec::with_capacity(self.len() * a * parts);
        for i in 0..self.len() {
            let mut row = Vec::with_capacity(parts);
            for k in 0..parts {
                let r = self.part(i, k, mode)?;
                row.push(match neurons {
                    Some(idx) => RateVector(idx.iter().map(|&n| r.0[n]).collect()),
                    None => r,
                });
            }
            values.extend(concatenate(&row)?);
        }
        FeatureMatrix::new(a * parts, values, self.labels.clone(), provenance)
    }
}

/// Full pipeline for one configuration.
pub fn assemble(
    set: &ImageSet,
    model: &dyn RetinaModel,
    reports: Option<&[ReceptiveFieldReport]>,
    cfg: &PipelineConfig,
    provenance: Provenance,
) -> Result<FeatureMatrix> {
    cfg.validate()?;
    let images = standardize_set(set);
    let responses = ResponseSet::compute(&images, set.labels(), model, cfg.split, cfg.adjust, cfg.noise_key)?;
    let keep = if cfg.keep_valid_only {
        let reports = reports.ok_or_else(|| {
            Error::InvalidArgument("valid=yes needs receptive-field reports".into())
        })?;
        Some(valid_indices(reports))
    } else {
        None
    };
    responses.features(cfg.combine, keep.as_deref(), provenance)
}

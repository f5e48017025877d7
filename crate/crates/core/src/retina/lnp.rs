//! Linear-nonlinear retina with known ground truth.
//!
//! Each neuron filters the window with a separable kernel: a
//! difference-of-Gaussians in space and a biphasic profile over frame lags.
//! The filtered drive plus a bias passes through a softplus scaled to
//! `rate_max`. Optional Gaussian output noise (std `noise_sigma * rate_max`)
//! is keyed per call and clamped at zero.

use std::collections::HashMap;
use std::sync::Arc;

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_row, softplus, RateVector, RetinaModel, NEURON_COUNT};
use crate::error::{Error, Result};
use crate::image::{Image, RETINA_SIZE};
use crate::seed;
use crate::temporal::TemporalRow;

/// Neurons whose kernel amplitude magnitude reaches this value are the
/// high-SNR units.
pub const STRONG_AMPLITUDE_THRESHOLD: f64 = 1.0;

/// Center jitter in pixels per unit of degradation level.
const DEGRADE_CENTER_PX: f64 = 2.0;
/// Receptive-field centers stay this far inside the field.
const CENTER_MARGIN: f64 = 5.0;
/// Log-scale jitter of the Gaussian widths per unit of degradation level.
const DEGRADE_SIGMA_LOG: f64 = 0.2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LnpConfig {
    pub n_neurons: usize,
    pub strong_fraction: f64,
    pub rate_max: f64,
    /// Output noise standard deviation as a fraction of `rate_max`.
    pub noise_sigma: f64,
    pub temporal_interval: usize,
    pub strong_amplitude: f64,
    pub weak_amplitude: f64,
}

impl Default for LnpConfig {
    fn default() -> Self {
        LnpConfig {
            n_neurons: NEURON_COUNT,
            strong_fraction: 12.0 / 60.0,
            rate_max: 50.0,
            noise_sigma: 0.0,
            temporal_interval: 30,
            strong_amplitude: 8.0,
            weak_amplitude: 0.0,
        }
    }
}

impl LnpConfig {
    pub fn with_interval(temporal_interval: usize) -> Self {
        LnpConfig {
            temporal_interval,
            ..LnpConfig::default()
        }
    }

    pub fn strong_count(&self) -> usize {
        (self.strong_fraction * self.n_neurons as f64).round() as usize
    }
}

/// Spatial parameters of one neuron. Coordinates are pixels, `x` the
/// column and `y` the row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LnpNeuron {
    pub center_x: f64,
    pub center_y: f64,
    pub sigma_center: f64,
    pub sigma_surround: f64,
    pub surround_weight: f64,
    /// Signed gain: positive for ON cells, negative for OFF cells.
    pub amplitude: f64,
    pub bias: f64,
}

impl LnpNeuron {
    pub fn is_strong(&self) -> bool {
        self.amplitude.abs() >= STRONG_AMPLITUDE_THRESHOLD
    }

    /// Kernel weight at pixel `(y, x)`.
    pub fn spatial_weight(&self, y: usize, x: usize) -> f64 {
        let dx = x as f64 - self.center_x;
        let dy = y as f64 - self.center_y;
        let r2 = dx * dx + dy * dy;
        let g = |s: f64| (-r2 / (2.0 * s * s)).exp() / (2.0 * std::f64::consts::PI * s * s);
        self.amplitude * (g(self.sigma_center) - self.surround_weight * g(self.sigma_surround))
    }

    fn spatial_kernel(&self) -> Vec<f64> {
        let mut k = Vec::with_capacity(RETINA_SIZE * RETINA_SIZE);
        for y in 0..RETINA_SIZE {
            for x in 0..RETINA_SIZE {
                k.push(self.spatial_weight(y, x));
            }
        }
        k
    }
}

/// Biphasic temporal profile indexed by lag (0 = newest frame): a fast
/// positive lobe peaking about 3 frames back minus a slower lobe peaking
/// about 6 frames back, scaled to unit L2 norm.
pub fn biphasic_kernel(len: usize) -> Vec<f64> {
    let lobe = |tau: f64, peak: f64| {
        let r = tau / peak;
        r.powi(3) * (3.0 * (1.0 - r)).exp()
    };
    let mut k: Vec<f64> = (0..len)
        .map(|lag| {
            let tau = lag as f64 + 1.0;
            lobe(tau, 3.0) - 0.6 * lobe(tau, 6.0)
        })
        .collect();
    let norm = k.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        k.iter_mut().for_each(|v| *v /= norm);
    }
    k
}

#[derive(Clone, Debug)]
pub struct LnpRetina {
    neurons: Vec<LnpNeuron>,
    temporal_kernel: Vec<f64>,
    rate_max: f64,
    noise_sigma: f64,
    noise_seed: u64,
    spatial: Vec<Vec<f64>>,
}

impl PartialEq for LnpRetina {
    fn eq(&self, other: &Self) -> bool {
        self.neurons == other.neurons
            && self.temporal_kernel == other.temporal_kernel
            && self.rate_max == other.rate_max
            && self.noise_sigma == other.noise_sigma
            && self.noise_seed == other.noise_seed
    }
}

impl LnpRetina {
    pub fn from_parts(
        neurons: Vec<LnpNeuron>,
        temporal_kernel: Vec<f64>,
        rate_max: f64,
        noise_sigma: f64,
        noise_seed: u64,
    ) -> Result<Self> {
        if neurons.is_empty() {
            return Err(Error::InvalidArgument("retina needs at least one neuron".into()));
        }
        if temporal_kernel.is_empty() {
            return Err(Error::InvalidArgument("empty temporal kernel".into()));
        }
        for (i, n) in neurons.iter().enumerate() {
            if !(n.sigma_center > 0.0 && n.sigma_center < n.sigma_surround) {
                return Err(Error::InvalidArgument(format!(
                    "neuron {i}: need 0 < sigma_center < sigma_surround"
                )));
            }
        }
        if !(noise_sigma >= 0.0 && rate_max > 0.0) {
            return Err(Error::InvalidArgument("negative noise or non-positive rate_max".into()));
        }
        let spatial = neurons.iter().map(LnpNeuron::spatial_kernel).collect();
        Ok(LnpRetina {
            neurons,
            temporal_kernel,
            rate_max,
            noise_sigma,
            noise_seed,
            spatial,
        })
    }

    pub fn neurons(&self) -> &[LnpNeuron] {
        &self.neurons
    }

    pub fn temporal_kernel(&self) -> &[f64] {
        &self.temporal_kernel
    }

    pub fn rate_max(&self) -> f64 {
        self.rate_max
    }

    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }

    /// Indices of the high-SNR neurons.
    pub fn strong_indices(&self) -> Vec<usize> {
        (0..self.neurons.len())
            .filter(|&i| self.neurons[i].is_strong())
            .collect()
    }

    /// Copy with a different output noise level.
    pub fn with_noise(&self, noise_sigma: f64) -> Self {
        let mut m = self.clone();
        m.noise_sigma = noise_sigma;
        m
    }

    /// A worse copy: output noise raised by `level` and receptive fields
    /// jittered in position and size in proportion to `level`.
    /// `degrade(0, _)` returns an identical model.
    pub fn degrade(&self, level: f64, seed: u64) -> Result<Self> {
        if !(level >= 0.0) {
            return Err(Error::InvalidArgument(format!("degradation level {level} < 0")));
        }
        let mut rng = seed::rng(seed, &[0xde9]);
        let limit = RETINA_SIZE as f64 - 1e-9;
        let neurons = self
            .neurons
            .iter()
            .map(|n| {
                let z: [f64; 4] = std::array::from_fn(|_| StandardNormal.sample(&mut rng));
                let mut m = n.clone();
                m.center_x = (n.center_x + level * DEGRADE_CENTER_PX * z[0]).clamp(0.0, limit);
                m.center_y = (n.center_y + level * DEGRADE_CENTER_PX * z[1]).clamp(0.0, limit);
                m.sigma_center = n.sigma_center * (level * DEGRADE_SIGMA_LOG * z[2]).exp();
                m.sigma_surround = n.sigma_surround * (level * DEGRADE_SIGMA_LOG * z[3]).exp();
                if m.sigma_surround <= m.sigma_center {
                    m.sigma_surround = m.sigma_center * 1.5;
                }
                m
            })
            .collect();
        LnpRetina::from_parts(
            neurons,
            self.temporal_kernel.clone(),
            self.rate_max,
            self.noise_sigma + level,
            self.noise_seed,
        )
    }

    /// Kernel projections of one frame, one per neuron.
    fn frame_drive(&self, frame: &Image) -> Vec<f64> {
        let px = frame.pixels();
        self.spatial
            .iter()
            .map(|k| k.iter().zip(px).map(|(w, &v)| w * v as f64).sum())
            .collect()
    }

    fn rates_from_drive(&self, drive: &[f64], call_index: u64) -> RateVector {
        let mut rates: Vec<f64> = drive
            .iter()
            .zip(&self.neurons)
            .map(|(g, n)| self.rate_max * softplus(g + n.bias))
            .collect();
        if self.noise_sigma > 0.0 {
            let mut rng = seed::rng(self.noise_seed, &[call_index]);
            let sd = self.noise_sigma * self.rate_max;
            for r in &mut rates {
                let e: f64 = StandardNormal.sample(&mut rng);
                *r = (*r + sd * e).max(0.0);
            }
        }
        RateVector(rates)
    }

    fn row_rates(&self, row: &TemporalRow, call_index: u64, cache: &mut HashMap<usize, Arc<Vec<f64>>>) -> Result<RateVector> {
        check_row(row, self.temporal_kernel.len(), (RETINA_SIZE, RETINA_SIZE))?;
        let t = row.len();
        let mut drive = vec![0.0; self.neurons.len()];
        for (pos, frame) in row.frames.iter().enumerate() {
            let weight = self.temporal_kernel[t - 1 - pos];
            let key = Arc::as_ptr(frame) as usize;
            let fd = cache
                .entry(key)
                .or_insert_with(|| Arc::new(self.frame_drive(frame)))
                .clone();
            for (d, f) in drive.iter_mut().zip(fd.iter()) {
                *d += weight * f;
            }
        }
        Ok(self.rates_from_drive(&drive, call_index))
    }
}

impl RetinaModel for LnpRetina {
    fn temporal_interval(&self) -> usize {
        self.temporal_kernel.len()
    }

    fn n_neurons(&self) -> usize {
        self.neurons.len()
    }

    fn predict(&self, row: &TemporalRow, call_index: u64) -> Result<RateVector> {
        self.row_rates(row, call_index, &mut HashMap::new())
    }

    /// Frames shared between rows (same `Arc`) are projected once per chunk.
    fn predict_batch(&self, rows: &[TemporalRow], first_index: u64) -> Result<Vec<RateVector>> {
        const CHUNK: usize = 512;
        let chunks: Vec<Result<Vec<RateVector>>> = rows
            .par_chunks(CHUNK)
            .enumerate()
            .map(|(c, chunk)| {
                let mut cache = HashMap::new();
                chunk
                    .iter()
                    .enumerate()
                    .map(|(j, r)| self.row_rates(r, first_index + (c * CHUNK + j) as u64, &mut cache))
                    .collect()
            })
            .collect();
        let mut out = Vec::with_capacity(rows.len());
        for c in chunks {
            out.extend(c?);
        }
        Ok(out)
    }
}

/// Build a ground-truth retina: centers on a seeded jittered grid over the
/// 50x50 field, a seeded subset of `strong_count()` neurons with large
/// kernels and the rest with `weak_amplitude`.
pub fn make_lnp(config: &LnpConfig, seed: u64) -> Result<LnpRetina> {
    if config.n_neurons < 1 {
        return Err(Error::InvalidArgument("neuron count must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&config.strong_fraction) {
        return Err(Error::InvalidArgument(format!(
            "strong fraction {} outside [0, 1]",
            config.strong_fraction
        )));
    }
    if config.temporal_interval < 1 {
        return Err(Error::InvalidArgument("temporal interval must be positive".into()));
    }
    let n = config.n_neurons;
    let mut rng = seed::rng(seed, &[0x1a9]);
    let cols = (n as f64).sqrt().ceil() as usize;
    let rows = n.div_ceil(cols);
    let mut slots = index::sample(&mut rng, rows * cols, n).into_vec();
    slots.sort_unstable();
    let strong: Vec<usize> = index::sample(&mut rng, n, config.strong_count()).into_vec();
    let span = RETINA_SIZE as f64 - 2.0 * CENTER_MARGIN;
    let cell_w = span / cols as f64;
    let cell_h = span / rows as f64;
    let limit = RETINA_SIZE as f64 - 1e-9;
    let neurons = slots
        .iter()
        .enumerate()
        .map(|(i, &slot)| {
            let (r, c) = (slot / cols, slot % cols);
            let jx: f64 = rng.random_range(-0.25..0.25);
            let jy: f64 = rng.random_range(-0.25..0.25);
            let sigma_center = rng.random_range(4.0..6.0);
            let sigma_surround = sigma_center * rng.random_range(1.5..2.5);
            let surround_weight = rng.random_range(0.3..0.6);
            let bias = rng.random_range(-1.0..0.0);
            let polarity = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let gain = if strong.contains(&i) {
                config.strong_amplitude
            } else {
                config.weak_amplitude
            };
            LnpNeuron {
                center_x: (CENTER_MARGIN + (c as f64 + 0.5 + jx) * cell_w).clamp(0.0, limit),
                center_y: (CENTER_MARGIN + (r as f64 + 0.5 + jy) * cell_h).clamp(0.0, limit),
                sigma_center,
                sigma_surround,
                surround_weight,
                amplitude: polarity * gain,
                bias,
            }
        })
        .collect();
    LnpRetina::from_parts(
        neurons,
        biphasic_kernel(config.temporal_interval),
        config.rate_max,
        config.noise_sigma,
        seed::derive(seed, &[0x2015e]),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::temporal::{black_frame, Frame};

    fn black_row(t: usize) -> TemporalRow {
        TemporalRow {
            frames: vec![black_frame(); t],
            source_index: 0,
            repetitions: 1,
        }
    }

    #[test]
    fn temporal_kernel_is_biphasic_unit_norm() {
        let k = biphasic_kernel(30);
        let norm: f64 = k.iter().map(|v| v * v).sum();
        assert!((norm - 1.0).abs() < 1e-12);
        assert!(k[2] > 0.0);
        assert!(k.iter().any(|&v| v < 0.0));
    }

    #[test]
    fn strong_count_matches_config() {
        let m = make_lnp(&LnpConfig::default(), 7).unwrap();
        assert_eq!(m.n_neurons(), 60);
        assert_eq!(m.strong_indices().len(), 12);
        let weak = m.neurons().iter().filter(|n| !n.is_strong()).count();
        assert_eq!(weak, 48);
    }

    #[test]
    fn construction_is_deterministic() {
        let a = make_lnp(&LnpConfig::default(), 3).unwrap();
        let b = make_lnp(&LnpConfig::default(), 3).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, make_lnp(&LnpConfig::default(), 4).unwrap());
    }

    #[test]
    fn single_neuron_is_strong_and_inside() {
        let cfg = LnpConfig {
            n_neurons: 1,
            strong_fraction: 1.0,
            ..LnpConfig::default()
        };
        let m = make_lnp(&cfg, 1).unwrap();
        let n = &m.neurons()[0];
        assert!(n.is_strong());
        assert!((0.0..50.0).contains(&n.center_x) && (0.0..50.0).contains(&n.center_y));
    }

    #[test]
    fn bad_configs_rejected() {
        let cfg = LnpConfig {
            strong_fraction: 1.5,
            ..LnpConfig::default()
        };
        assert!(make_lnp(&cfg, 1).is_err());
        let cfg = LnpConfig {
            n_neurons: 0,
            ..LnpConfig::default()
        };
        assert!(make_lnp(&cfg, 1).is_err());
    }

    #[test]
    fn black_row_isolates_bias() {
        let m = make_lnp(&LnpConfig::default(), 7).unwrap();
        let rates = m.predict(&black_row(30), 0).unwrap();
        for (r, n) in rates.0.iter().zip(m.neurons()) {
            assert!((r - m.rate_max() * softplus(n.bias)).abs() < 1e-12);
        }
    }

    #[test]
    fn wrong_length_rejected() {
        let m = make_lnp(&LnpConfig::default(), 7).unwrap();
        assert!(matches!(
            m.predict(&black_row(29), 0),
            Err(Error::LengthMismatch { expected: 30, found: 29 })
        ));
    }

    #[test]
    fn degrade_zero_is_identity_and_seeded() {
        let m = make_lnp(&LnpConfig::default(), 7).unwrap();
        assert_eq!(m.degrade(0.0, 5).unwrap(), m);
        assert_eq!(m.degrade(0.4, 5).unwrap(), m.degrade(0.4, 5).unwrap());
        assert!(m.degrade(-0.1, 5).is_err());
    }

    #[test]
    fn noise_is_keyed_by_call_index() {
        let m = make_lnp(&LnpConfig::default(), 7).unwrap().with_noise(0.2);
        let frame: Frame = Arc::new(Image::filled(50, 50, 0.5));
        let row = TemporalRow {
            frames: vec![frame; 30],
            source_index: 0,
            repetitions: 30,
        };
        assert_eq!(m.predict(&row, 3).unwrap(), m.predict(&row, 3).unwrap());
        assert_ne!(m.predict(&row, 3).unwrap(), m.predict(&row, 4).unwrap());
        assert!(m.predict(&row, 3).unwrap().0.iter().all(|&r| r >= 0.0));
    }

    #[test]
    fn batch_matches_single_predictions() {
        let m = make_lnp(&LnpConfig::default(), 2).unwrap().with_noise(0.1);
        let frames: Vec<Frame> = (0..4)
            .map(|i| Arc::new(Image::from_fn(50, 50, |y, x| ((x * y + i) % 7) as f32 / 7.0)))
            .collect();
        let rows = crate::temporal::build_rows(&frames, &crate::temporal::TemporalConfig::new(30, crate::temporal::Adjust::Yes)).unwrap();
        let batch = m.predict_batch(&rows, 100).unwrap();
        for (j, row) in rows.iter().enumerate() {
            assert_eq!(batch[j], m.predict(row, 100 + j as u64).unwrap());
        }
    }
}

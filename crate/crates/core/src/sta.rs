//! Receptive-field mapping by spike-triggered averaging.
//!
//! The retina is driven with binary checkerboard white noise; the
//! rate-weighted average of the stimulus windows (minus the mean window)
//! estimates each neuron's spatiotemporal kernel. A 2-D Gaussian fitted to
//! the peak frame locates the receptive-field center. A neuron is valid
//! when that fit converges and the peak stands out from the off-peak
//! entries by at least a z-score threshold.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{Image, RETINA_SIZE};
use crate::retina::{RateVector, RetinaModel};
use crate::seed;
use crate::temporal::{Frame, TemporalRow};

/// Side of the square noise blocks, in pixels.
pub const NOISE_BLOCK: usize = 5;
/// Default z-score a peak must reach for the neuron to be valid.
pub const DEFAULT_Z_THRESHOLD: f64 = 5.0;
/// Gauss-Newton stops when the accepted step is shorter than this.
pub const FIT_STEP_TOL: f64 = 1e-4;
pub const FIT_MAX_STEPS: usize = 100;
/// Half-width of the fitting window around the peak pixel.
const FIT_RADIUS: isize = 10;
/// Smallest fitted width, as a fraction of the stimulus cell.
const SIGMA_FLOOR: f64 = 0.3;
/// Peaks below this magnitude count as an empty kernel.
const NEGLIGIBLE_PEAK: f64 = 1e-9;

/// Binary checkerboard noise at `NOISE_BLOCK` resolution. The rows are
/// consecutive windows over one continuous noise movie, so every frame is
/// an independent draw and row `j + 1` is row `j` advanced by one frame.
pub fn white_noise_stimulus(n_rows: usize, temporal_interval: usize, seed: u64) -> Vec<TemporalRow> {
    assert!(n_rows >= 1 && temporal_interval >= 1);
    let blocks = RETINA_SIZE / NOISE_BLOCK;
    let mut rng = seed::rng(seed, &[0x5a0]);
    let movie: Vec<Frame> = (0..n_rows + temporal_interval - 1)
        .map(|_| {
            let cells: Vec<f32> = (0..blocks * blocks)
                .map(|_| if rng.random_bool(0.5) { 1.0 } else { 0.0 })
                .collect();
            Arc::new(Image::from_fn(RETINA_SIZE, RETINA_SIZE, |y, x| {
                cells[(y / NOISE_BLOCK) * blocks + x / NOISE_BLOCK]
            }))
        })
        .collect();
    (0..n_rows)
        .map(|j| TemporalRow {
            frames: movie[j..j + temporal_interval].to_vec(),
            source_index: j + temporal_interval - 1,
            repetitions: 1,
        })
        .collect()
}

/// Spatiotemporal average for one neuron, stored as `interval` frames of
/// `height x width` in chronological order (last frame = zero lag).
#[derive(Clone, Debug, PartialEq)]
pub struct StaKernel {
    pub neuron: usize,
    pub interval: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
    pub peak_frame: usize,
    pub peak_x: usize,
    pub peak_y: usize,
    pub peak_zscore: f64,
}

impl StaKernel {
    /// Wrap raw kernel values, locating the peak and its z-score.
    pub fn from_data(neuron: usize, interval: usize, height: usize, width: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), interval * height * width);
        let frame_len = height * width;
        let (peak_idx, peak) = data
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |(bi, bv), (i, &v)| if v.abs() > bv { (i, v.abs()) } else { (bi, bv) });
        let peak_frame = peak_idx / frame_len;
        let off_peak: Vec<f64> = if interval > 1 {
            data.iter()
                .enumerate()
                .filter(|(i, _)| i / frame_len != peak_frame)
                .map(|(_, &v)| v)
                .collect()
        } else {
            data.iter()
                .enumerate()
                .filter(|(i, _)| *i != peak_idx)
                .map(|(_, &v)| v)
                .collect()
        };
        let peak_zscore = if peak <= NEGLIGIBLE_PEAK {
            0.0
        } else {
            peak / robust_std(off_peak).max(peak * f64::EPSILON)
        };
        StaKernel {
            neuron,
            interval,
            height,
            width,
            peak_frame,
            peak_x: (peak_idx % frame_len) % width,
            peak_y: (peak_idx % frame_len) / width,
            peak_zscore,
            data,
        }
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[t * n..(t + 1) * n]
    }

    pub fn get(&self, t: usize, y: usize, x: usize) -> f64 {
        self.data[(t * self.height + y) * self.width + x]
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// 1.4826 times the median absolute deviation.
pub fn robust_std(mut values: Vec<f64>) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let med = median(&mut values);
    let mut dev: Vec<f64> = values.iter().map(|v| (v - med).abs()).collect();
    1.4826 * median(&mut dev)
}

fn median(v: &mut [f64]) -> f64 {
    let mid = v.len() / 2;
    let (_, m, _) = v.select_nth_unstable_by(mid, |a, b| a.total_cmp(b));
    let upper = *m;
    if v.len() % 2 == 1 {
        upper
    } else {
        let lower = v[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    }
}

/// Running sums behind the STA of every neuron. Frames that are constant
/// on `NOISE_BLOCK` blocks are accumulated at block resolution.
pub struct StaAccumulation {
    interval: usize,
    height: usize,
    width: usize,
    block: usize,
    /// per neuron, per frame position, per cell
    weighted: Vec<Vec<f64>>,
    mean: Vec<f64>,
    totals: Vec<f64>,
}

fn block_constant(frame: &Image, b: usize) -> bool {
    if b == 1 {
        return true;
    }
    if frame.height() % b != 0 || frame.width() % b != 0 {
        return false;
    }
    (0..frame.height()).all(|y| {
        (0..frame.width()).all(|x| frame.get(y, x) == frame.get(y - y % b, x - x % b))
    })
}

fn compress(frame: &Image, b: usize) -> Vec<f64> {
    let (bh, bw) = (frame.height() / b, frame.width() / b);
    let mut out = Vec::with_capacity(bh * bw);
    for by in 0..bh {
        for bx in 0..bw {
            out.push(frame.get(by * b, bx * b) as f64);
        }
    }
    out
}

impl StaAccumulation {
    /// Predict rates for every row, then accumulate the rate-weighted sums.
    pub fn run(model: &dyn RetinaModel, stimuli: &[TemporalRow]) -> Result<Self> {
        let rates = model.predict_batch(stimuli, 0)?;
        Self::from_rates(stimuli, &rates)
    }

    pub fn from_rates(stimuli: &[TemporalRow], rates: &[RateVector]) -> Result<Self> {
        let first = stimuli
            .first()
            .ok_or_else(|| Error::InvalidArgument("no stimulus rows".into()))?;
        let interval = first.len();
        let (height, width) = (first.frames[0].height(), first.frames[0].width());
        let n_neurons = rates.first().map_or(0, RateVector::len);

        let mut index: HashMap<usize, usize> = HashMap::new();
        let mut distinct: Vec<&Frame> = Vec::new();
        for row in stimuli {
            if row.len() != interval {
                return Err(Error::LengthMismatch {
                    expected: interval,
                    found: row.len(),
                });
            }
            for f in &row.frames {
                index.entry(Arc::as_ptr(f) as usize).or_insert_with(|| {
                    distinct.push(f);
                    distinct.len() - 1
                });
            }
        }
        let block = if distinct.iter().all(|f| block_constant(f, NOISE_BLOCK)) {
            NOISE_BLOCK
        } else {
            1
        };
        let cells: Vec<Vec<f64>> = distinct.iter().map(|f| compress(f, block)).collect();
        let cell_count = (height / block) * (width / block);

        let mut weighted = vec![vec![0.0; interval * cell_count]; n_neurons];
        let mut mean = vec![0.0; interval * cell_count];
        let mut totals = vec![0.0; n_neurons];
        for (row, r) in stimuli.iter().zip(rates) {
            for (t, f) in row.frames.iter().enumerate() {
                let c = &cells[index[&(Arc::as_ptr(f) as usize)]];
                let span = t * cell_count..(t + 1) * cell_count;
                for (m, v) in mean[span.clone()].iter_mut().zip(c) {
                    *m += v;
                }
                for (n, &rate) in r.0.iter().enumerate() {
                    if rate == 0.0 {
                        continue;
                    }
                    for (acc, v) in weighted[n][span.clone()].iter_mut().zip(c) {
                        *acc += rate * v;
                    }
                }
            }
            for (tot, &rate) in totals.iter_mut().zip(&r.0) {
                *tot += rate;
            }
        }
        let count = stimuli.len() as f64;
        mean.iter_mut().for_each(|m| *m /= count);
        Ok(StaAccumulation {
            interval,
            height,
            width,
            block,
            weighted,
            mean,
            totals,
        })
    }

    pub fn n_neurons(&self) -> usize {
        self.totals.len()
    }

    /// The STA of one neuron, expanded to pixel resolution.
    pub fn kernel(&self, neuron: usize) -> Result<StaKernel> {
        if neuron >= self.n_neurons() {
            return Err(Error::InvalidArgument(format!(
                "neuron {neuron} out of range (model has {})",
                self.n_neurons()
            )));
        }
        let total = self.totals[neuron];
        if total <= 0.0 {
            return Err(Error::DegenerateResponse { neuron });
        }
        let b = self.block;
        let bw = self.width / b;
        let cell_count = (self.height / b) * bw;
        let w = &self.weighted[neuron];
        let mut data = Vec::with_capacity(self.interval * self.height * self.width);
        for t in 0..self.interval {
            for y in 0..self.height {
                for x in 0..self.width {
                    let c = t * cell_count + (y / b) * bw + x / b;
                    data.push(w[c] / total - self.mean[c]);
                }
            }
        }
        Ok(StaKernel::from_data(neuron, self.interval, self.height, self.width, data))
    }
}

/// STA of a single neuron.
pub fn compute_sta(model: &dyn RetinaModel, stimuli: &[TemporalRow], neuron: usize) -> Result<StaKernel> {
    StaAccumulation::run(model, stimuli)?.kernel(neuron)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianFit {
    pub amplitude: f64,
    pub sigma_x: f64,
    pub sigma_y: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReceptiveFieldReport {
    pub neuron: usize,
    pub valid: bool,
    /// `(x, y)` in pixels; present exactly when `valid`.
    pub center: Option<(f64, f64)>,
    pub fit: Option<GaussianFit>,
    pub zscore: f64,
}

impl ReceptiveFieldReport {
    pub fn invalid(neuron: usize, zscore: f64) -> Self {
        ReceptiveFieldReport {
            neuron,
            valid: false,
            center: None,
            fit: None,
            zscore,
        }
    }
}

/// Outcome of the Gauss-Newton fit on the peak frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitOutcome {
    pub converged: bool,
    pub center_x: f64,
    pub center_y: f64,
    pub fit: GaussianFit,
    pub steps: usize,
}

/// Fit `A exp(-(dx^2 / 2 sx^2 + dy^2 / 2 sy^2))` to the peak frame around
/// the peak pixel, starting from the local center of mass. When the frame
/// is constant on noise blocks the model is averaged over each block, so
/// block-resolution kernels give unbiased centers.
pub fn fit_gaussian(kernel: &StaKernel) -> Option<FitOutcome> {
    let frame = kernel.frame(kernel.peak_frame);
    let (h, w) = (kernel.height, kernel.width);
    let peak = frame[kernel.peak_y * w + kernel.peak_x];
    if peak.abs() <= NEGLIGIBLE_PEAK {
        return None;
    }
    let sign = peak.signum();
    let cell = if frame_block_constant(frame, h, w, NOISE_BLOCK) { NOISE_BLOCK } else { 1 };
    let radius = (FIT_RADIUS as usize).div_ceil(cell).max(3) as isize;
    let (pcy, pcx) = ((kernel.peak_y / cell) as isize, (kernel.peak_x / cell) as isize);
    let (ch, cw) = ((h / cell) as isize, (w / cell) as isize);
    let mut cells: Vec<Cell> = Vec::new();
    for cy in (pcy - radius).max(0)..(pcy + radius + 1).min(ch) {
        for cx in (pcx - radius).max(0)..(pcx + radius + 1).min(cw) {
            let (x0, y0) = (cx as usize * cell, cy as usize * cell);
            cells.push(Cell {
                x0: x0 as f64,
                y0: y0 as f64,
                value: sign * frame[y0 * w + x0],
                near: (cx - pcx).abs() * cell as isize <= 4 && (cy - pcy).abs() * cell as isize <= 4,
            });
        }
    }
    let mid = (cell as f64 - 1.0) / 2.0;

    // center of mass of the positive part near the peak
    let (mut sw, mut sx, mut sy) = (0.0, 0.0, 0.0);
    for c in cells.iter().filter(|c| c.near && c.value > 0.0) {
        sw += c.value;
        sx += c.value * (c.x0 + mid);
        sy += c.value * (c.y0 + mid);
    }
    let (cx, cy) = (sx / sw, sy / sw);
    let (mut sxx, mut syy) = (0.0, 0.0);
    for c in cells.iter().filter(|c| c.near && c.value > 0.0) {
        sxx += c.value * (c.x0 + mid - cx).powi(2);
        syy += c.value * (c.y0 + mid - cy).powi(2);
    }
    // a narrower start leaves the block-averaged model flat in the center
    let sigma_floor = (0.5 * cell as f64).max(0.75);
    let mut theta = [
        sign * peak,
        cx,
        cy,
        (sxx / sw).sqrt().clamp(sigma_floor, 8.0),
        (syy / sw).sqrt().clamp(sigma_floor, 8.0),
    ];

    let cost = |t: &[f64; 5]| -> f64 {
        cells
            .iter()
            .map(|c| {
                let r = c.value - cell_model(t, c, cell).0;
                r * r
            })
            .sum()
    };
    let mut current = cost(&theta);
    let mut converged = false;
    let mut steps = 0;
    // Marquardt damping on the Gauss-Newton normal equations. Widths below
    // a fraction of the cell are unresolvable (amplitude and width trade
    // off exactly), so they are held at that floor.
    let resolvable = SIGMA_FLOOR * cell as f64;
    let mut lambda = 1e-3;
    while steps < FIT_MAX_STEPS {
        steps += 1;
        let mut jtj = [[0.0f64; 5]; 5];
        let mut jtr = [0.0f64; 5];
        for c in &cells {
            let (m, g) = cell_model(&theta, c, cell);
            let r = c.value - m;
            for i in 0..5 {
                jtr[i] += g[i] * r;
                for j in 0..5 {
                    jtj[i][j] += g[i] * g[j];
                }
            }
        }
        let mut accepted = false;
        let mut step_norm = f64::INFINITY;
        while lambda < 1e12 {
            let mut damped = jtj;
            let mut rhs = jtr;
            for (i, row) in damped.iter_mut().enumerate() {
                row[i] += lambda * jtj[i][i].max(1e-12);
            }
            // widths pinned at the floor and pushed further down stay fixed
            for i in 3..5 {
                if theta[i] <= resolvable && jtr[i] <= 0.0 {
                    for k in 0..5 {
                        damped[i][k] = 0.0;
                        damped[k][i] = 0.0;
                    }
                    damped[i][i] = 1.0;
                    rhs[i] = 0.0;
                }
            }
            let Some(delta) = solve5(damped, rhs) else {
                lambda *= 10.0;
                continue;
            };
            let mut trial: [f64; 5] = std::array::from_fn(|i| theta[i] + delta[i]);
            trial[3] = trial[3].max(resolvable);
            trial[4] = trial[4].max(resolvable);
            step_norm = (0..5).map(|i| (trial[i] - theta[i]).powi(2)).sum::<f64>().sqrt();
            {
                let c = cost(&trial);
                if c <= current {
                    theta = trial;
                    current = c;
                    lambda = (lambda * 0.1).max(1e-9);
                    accepted = true;
                    break;
                }
            }
            if step_norm < FIT_STEP_TOL {
                break;
            }
            lambda *= 10.0;
        }
        if step_norm < FIT_STEP_TOL {
            // either a tiny accepted step or no descent left within tolerance
            converged = true;
            break;
        }
        if !accepted {
            break;
        }
    }
    let plausible = theta[0] > 0.0
        && theta[3] < w as f64
        && theta[4] < h as f64
        && (-0.5..w as f64 - 0.5).contains(&theta[1])
        && (-0.5..h as f64 - 0.5).contains(&theta[2]);
    Some(FitOutcome {
        converged: converged && plausible && theta.iter().all(|v| v.is_finite()),
        center_x: theta[1],
        center_y: theta[2],
        fit: GaussianFit {
            amplitude: sign * theta[0],
            sigma_x: theta[3],
            sigma_y: theta[4],
        },
        steps,
    })
}

struct Cell {
    x0: f64,
    y0: f64,
    value: f64,
    near: bool,
}

fn frame_block_constant(frame: &[f64], h: usize, w: usize, b: usize) -> bool {
    h % b == 0
        && w % b == 0
        && (0..h).all(|y| (0..w).all(|x| frame[y * w + x] == frame[(y - y % b) * w + x - x % b]))
}

/// Mean over `cell` pixels of `exp(-(u - center)^2 / 2 s^2)` with its
/// derivatives in `center` and `s`.
#[inline]
fn axis_mean(start: f64, cell: usize, center: f64, s: f64) -> (f64, f64, f64) {
    let (mut g, mut dc, mut ds) = (0.0, 0.0, 0.0);
    let s2 = s * s;
    for i in 0..cell {
        let d = start + i as f64 - center;
        let e = (-(d * d) / (2.0 * s2)).exp();
        g += e;
        dc += e * d / s2;
        ds += e * d * d / (s2 * s);
    }
    let n = cell as f64;
    (g / n, dc / n, ds / n)
}

/// Block-averaged separable Gaussian and its gradient in
/// `(A, x0, y0, sx, sy)`.
#[inline]
fn cell_model(t: &[f64; 5], c: &Cell, cell: usize) -> (f64, [f64; 5]) {
    let (gx, dgx, dsx) = axis_mean(c.x0, cell, t[1], t[3]);
    let (gy, dgy, dsy) = axis_mean(c.y0, cell, t[2], t[4]);
    let a = t[0];
    (a * gx * gy, [gx * gy, a * dgx * gy, a * gx * dgy, a * dsx * gy, a * gx * dsy])
}

/// Gaussian elimination with partial pivoting.
fn solve5(mut a: [[f64; 5]; 5], mut b: [f64; 5]) -> Option<[f64; 5]> {
    for col in 0..5 {
        let piv = (col..5).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..5 {
            let f = a[row][col] / a[col][col];
            for k in col..5 {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 5];
    for row in (0..5).rev() {
        let s: f64 = (row + 1..5).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Fit the receptive-field center with the default z-score threshold.
pub fn fit_rf_center(kernel: &StaKernel) -> ReceptiveFieldReport {
    fit_rf_center_with(kernel, DEFAULT_Z_THRESHOLD)
}

pub fn fit_rf_center_with(kernel: &StaKernel, z_threshold: f64) -> ReceptiveFieldReport {
    let z = kernel.peak_zscore;
    match fit_gaussian(kernel) {
        Some(out) if out.converged && z >= z_threshold => ReceptiveFieldReport {
            neuron: kernel.neuron,
            valid: true,
            center: Some((out.center_x, out.center_y)),
            fit: Some(out.fit),
            zscore: z,
        },
        _ => ReceptiveFieldReport::invalid(kernel.neuron, z),
    }
}

/// Run the full white-noise analysis on a model: one report per neuron.
pub fn analyze_validity(model: &dyn RetinaModel, n_rows: usize, seed: u64, z_threshold: f64) -> Result<Vec<ReceptiveFieldReport>> {
    let stimuli = white_noise_stimulus(n_rows, model.temporal_interval(), seed);
    let acc = StaAccumulation::run(model, &stimuli)?;
    (0..acc.n_neurons())
        .map(|n| match acc.kernel(n) {
            Ok(k) => Ok(fit_rf_center_with(&k, z_threshold)),
            Err(Error::DegenerateResponse { .. }) => Ok(ReceptiveFieldReport::invalid(n, 0.0)),
            Err(e) => Err(e),
        })
        .collect()
}

/// Indices of valid neurons in ascending order.
pub fn valid_indices(reports: &[ReceptiveFieldReport]) -> Vec<usize> {
    let mut idx: Vec<usize> = reports.iter().filter(|r| r.valid).map(|r| r.neuron).collect();
    idx.sort_unstable();
    idx
}

/// Keep only valid neurons (`keep_valid_only`) or pass rates through.
pub fn select_valid(reports: &[ReceptiveFieldReport], rates: &RateVector, keep_valid_only: bool) -> RateVector {
    if !keep_valid_only {
        return rates.clone();
    }
    RateVector(valid_indices(reports).into_iter().map(|i| rates.0[i]).collect())
}

#[derive(Serialize, Deserialize)]
struct ReportJson {
    neuron: usize,
    valid: bool,
    center: Option<[f64; 2]>,
    zscore: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    fit: Option<GaussianFit>,
}

pub fn reports_to_json(reports: &[ReceptiveFieldReport]) -> String {
    let rows: Vec<ReportJson> = reports
        .iter()
        .map(|r| ReportJson {
            neuron: r.neuron,
            valid: r.valid,
            center: r.center.map(|(x, y)| [x, y]),
            zscore: r.zscore,
            fit: r.fit,
        })
        .collect();
    serde_json::to_string_pretty(&rows).expect("reports serialize")
}

pub fn reports_from_json(text: &str) -> Result<Vec<ReceptiveFieldReport>> {
    let rows: Vec<ReportJson> =
        serde_json::from_str(text).map_err(|e| Error::InvalidArgument(format!("validity JSON: {e}")))?;
    Ok(rows
        .into_iter()
        .map(|r| ReceptiveFieldReport {
            neuron: r.neuron,
            valid: r.valid,
            center: r.center.map(|[x, y]| (x, y)),
            fit: r.fit,
            zscore: r.zscore,
        })
        .collect())
}

pub fn write_reports(path: &Path, reports: &[ReceptiveFieldReport]) -> Result<()> {
    std::fs::write(path, reports_to_json(reports)).map_err(|e| Error::io(path, e))
}

pub fn read_reports(path: &Path) -> Result<Vec<ReceptiveFieldReport>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    reports_from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bump(cx: f64, cy: f64, sigma: f64) -> StaKernel {
        let mut data = vec![0.0; 3 * 2500];
        for y in 0..50 {
            for x in 0..50 {
                let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
                data[2 * 2500 + y * 50 + x] = (-d2 / (2.0 * sigma * sigma)).exp();
            }
        }
        StaKernel::from_data(0, 3, 50, 50, data)
    }

    #[test]
    fn noise_is_deterministic_and_blocky() {
        let a = white_noise_stimulus(20, 30, 4);
        let b = white_noise_stimulus(20, 30, 4);
        for (ra, rb) in a.iter().zip(&b) {
            for (fa, fb) in ra.frames.iter().zip(&rb.frames) {
                assert_eq!(fa.pixels(), fb.pixels());
            }
        }
        for row in &a {
            for f in &row.frames {
                assert!(block_constant(f, NOISE_BLOCK));
                assert!(f.pixels().iter().all(|&v| v == 0.0 || v == 1.0));
            }
        }
        assert!(Arc::ptr_eq(&a[0].frames[1], &a[1].frames[0]));
    }

    #[test]
    fn gaussian_bump_center_recovered() {
        let k = bump(25.0, 25.0, 3.0);
        let r = fit_rf_center(&k);
        assert!(r.valid);
        let (x, y) = r.center.unwrap();
        assert!((x - 25.0).abs() < 0.5 && (y - 25.0).abs() < 0.5, "{x} {y}");
    }

    #[test]
    fn off_grid_bump() {
        let k = bump(12.3, 37.8, 2.5);
        let out = fit_gaussian(&k).unwrap();
        assert!(out.converged);
        assert!((out.center_x - 12.3).abs() < 1e-3 && (out.center_y - 37.8).abs() < 1e-3);
        assert!((out.fit.sigma_x - 2.5).abs() < 1e-3);
    }

    #[test]
    fn zero_kernel_is_invalid() {
        let k = StaKernel::from_data(3, 2, 50, 50, vec![0.0; 5000]);
        assert_eq!(k.peak_zscore, 0.0);
        let r = fit_rf_center(&k);
        assert!(!r.valid && r.center.is_none() && r.fit.is_none());
    }

    #[test]
    fn select_valid_modes() {
        let mut reports: Vec<ReceptiveFieldReport> =
            (0..60).map(|n| ReceptiveFieldReport::invalid(n, 0.0)).collect();
        for n in [59, 0] {
            reports[n].valid = true;
            reports[n].center = Some((1.0, 1.0));
        }
        let rates = RateVector((0..60).map(|i| i as f64 * 0.5).collect());
        assert_eq!(select_valid(&reports, &rates, false), rates);
        assert_eq!(select_valid(&reports, &rates, true).0, vec![0.0, 29.5]);
    }

    #[test]
    fn reports_json_round_trip() {
        let reports = vec![
            ReceptiveFieldReport::invalid(0, 1.5),
            fit_rf_center(&bump(20.0, 30.0, 2.0)),
        ];
        let back = reports_from_json(&reports_to_json(&reports)).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0], reports[0]);
        assert_eq!(back[1].center, reports[1].center);
        assert!(reports_to_json(&reports).contains("\"zscore\""));
    }

    #[test]
    fn robust_std_of_normal_like_values() {
        assert_eq!(robust_std(vec![]), 0.0);
        assert_eq!(robust_std(vec![2.0; 9]), 0.0);
        let v: Vec<f64> = vec![-1.0, 1.0, -1.0, 1.0];
        assert!((robust_std(v) - 1.4826).abs() < 1e-12);
    }
}

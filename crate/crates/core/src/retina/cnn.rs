//! Three-layer convolutional retina evaluated from a weights file.
//!
//! conv(k1 @ h1 x h1 over `temporal_interval` input channels) -> ReLU ->
//! conv(k2 @ h2 x h2) -> ReLU -> dense -> softplus. All convolutions use
//! valid padding and stride 1; frames of the row are the input channels in
//! chronological order.
//!
//! Weights file layout: magic `RNW1`, then for each tensor in the order
//! conv1.w, conv1.b, conv2.w, conv2.b, dense.w, dense.b: u32 name length,
//! name bytes, u8 rank, rank x u32 dims, f32 data. Integers and floats are
//! little-endian.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rand_distr::{Distribution, Normal};

use super::{check_row, softplus, RateVector, RetinaModel, NEURON_COUNT};
use crate::error::{Error, Result};
use crate::image::RETINA_SIZE;
use crate::seed;
use crate::temporal::TemporalRow;

const MAGIC: &[u8; 4] = b"RNW1";
pub const TENSOR_ORDER: [&str; 6] = ["conv1.w", "conv1.b", "conv2.w", "conv2.b", "dense.w", "dense.b"];

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(name: &str, dims: Vec<usize>, data: Vec<f32>) -> Self {
        assert_eq!(dims.iter().product::<usize>(), data.len(), "tensor {name}: data size");
        Tensor {
            name: name.to_string(),
            dims,
            data,
        }
    }
}

fn mismatch(tensor: &str, reason: String) -> Error {
    Error::ShapeMismatch {
        tensor: tensor.to_string(),
        reason,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CnnRetina {
    tensors: Vec<Tensor>,
    input_size: usize,
    k1: usize,
    h1: usize,
    k2: usize,
    h2: usize,
    n_out: usize,
}

impl CnnRetina {
    /// Validate tensor shapes against each other. The input side length is
    /// inferred from the dense layer width.
    pub fn from_tensors(tensors: Vec<Tensor>) -> Result<Self> {
        if tensors.len() != TENSOR_ORDER.len() {
            return Err(mismatch(
                "model",
                format!("expected {} tensors, got {}", TENSOR_ORDER.len(), tensors.len()),
            ));
        }
        for (t, want) in tensors.iter().zip(TENSOR_ORDER) {
            if t.name != want {
                return Err(mismatch(want, format!("found tensor {:?} in its place", t.name)));
            }
            if t.dims.iter().product::<usize>() != t.data.len() {
                return Err(mismatch(want, "dims do not match data length".into()));
            }
        }
        let rank = |i: usize, r: usize| -> Result<&[usize]> {
            let t = &tensors[i];
            if t.dims.len() != r {
                return Err(mismatch(&t.name, format!("rank {} expected {r}", t.dims.len())));
            }
            Ok(&t.dims)
        };
        let c1 = rank(0, 4)?;
        let (k1, interval, h1) = (c1[0], c1[1], c1[2]);
        if c1[3] != h1 || h1 == 0 || k1 == 0 || interval == 0 {
            return Err(mismatch("conv1.w", format!("dims {c1:?} must be [k, t, h, h] and non-zero")));
        }
        if rank(1, 1)?[0] != k1 {
            return Err(mismatch("conv1.b", format!("length {} expected {k1}", tensors[1].dims[0])));
        }
        let c2 = rank(2, 4)?;
        let (k2, h2) = (c2[0], c2[2]);
        if c2[1] != k1 {
            return Err(mismatch("conv2.w", format!("{} input channels, conv1 has {k1} kernels", c2[1])));
        }
        if c2[3] != h2 || h2 == 0 || k2 == 0 {
            return Err(mismatch("conv2.w", format!("dims {c2:?} must be [k, c, h, h] and non-zero")));
        }
        if rank(3, 1)?[0] != k2 {
            return Err(mismatch("conv2.b", format!("length {} expected {k2}", tensors[3].dims[0])));
        }
        let d = rank(4, 2)?;
        let (n_out, width) = (d[0], d[1]);
        let per_kernel = width / k2;
        let side = (per_kernel as f64).sqrt().round() as usize;
        if n_out == 0 || width % k2 != 0 || side * side != per_kernel || side == 0 {
            return Err(mismatch(
                "dense.w",
                format!("input width {width} is not {k2} conv2 kernels times a square map"),
            ));
        }
        if rank(5, 1)?[0] != n_out {
            return Err(mismatch("dense.b", format!("length {} expected {n_out}", tensors[5].dims[0])));
        }
        let input_size = side + h2 - 1 + h1 - 1;
        Ok(CnnRetina {
            tensors,
            input_size,
            k1,
            h1,
            k2,
            h2,
            n_out,
        })
    }

    /// Seeded He-style initialization for the 50x50 input used by the
    /// pipeline: 8@15x15, 16@9x9, dense to 60 units.
    pub fn random(temporal_interval: usize, seed: u64) -> Self {
        Self::random_with(temporal_interval, RETINA_SIZE, (8, 15), (16, 9), NEURON_COUNT, seed)
    }

    pub fn random_with(
        temporal_interval: usize,
        input_size: usize,
        (k1, h1): (usize, usize),
        (k2, h2): (usize, usize),
        n_out: usize,
        seed: u64,
    ) -> Self {
        let mut rng = seed::rng(seed, &[0xc22]);
        let o2 = input_size + 2 - h1 - h2;
        let mut gen = |name: &str, dims: Vec<usize>, fan_in: usize, bias: bool| {
            let n = dims.iter().product();
            let data = if bias {
                vec![0.01; n]
            } else {
                let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).unwrap();
                (0..n).map(|_| normal.sample(&mut rng) as f32).collect()
            };
            Tensor::new(name, dims, data)
        };
        let tensors = vec![
            gen("conv1.w", vec![k1, temporal_interval, h1, h1], temporal_interval * h1 * h1, false),
            gen("conv1.b", vec![k1], 1, true),
            gen("conv2.w", vec![k2, k1, h2, h2], k1 * h2 * h2, false),
            gen("conv2.b", vec![k2], 1, true),
            gen("dense.w", vec![n_out, k2 * o2 * o2], k2 * o2 * o2, false),
            gen("dense.b", vec![n_out], 1, true),
        ];
        CnnRetina::from_tensors(tensors).expect("consistent shapes")
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn input_size(&self) -> usize {
        self.input_size
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = MAGIC.to_vec();
        for t in &self.tensors {
            out.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
            out.extend_from_slice(t.name.as_bytes());
            out.push(t.dims.len() as u8);
            for &d in &t.dims {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&out).map_err(|e| Error::io(path, e))
    }

    fn forward(&self, row: &TemporalRow) -> Vec<f64> {
        let n = self.input_size;
        let interval = self.tensors[0].dims[1];
        let (w1, b1) = (&self.tensors[0].data, &self.tensors[1].data);
        let (w2, b2) = (&self.tensors[2].data, &self.tensors[3].data);
        let (wd, bd) = (&self.tensors[4].data, &self.tensors[5].data);
        let (h1, h2, k1, k2) = (self.h1, self.h2, self.k1, self.k2);

        // the first layer is linear before its bias: channels showing the
        // same frame share one convolution with their summed kernels
        let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
        for (c, f) in row.frames.iter().enumerate() {
            match groups.iter_mut().find(|(rep, _)| Arc::ptr_eq(&row.frames[*rep], f)) {
                Some((_, chans)) => chans.push(c),
                None => groups.push((c, vec![c])),
            }
        }
        let o1 = n - h1 + 1;
        let mut a1 = vec![0.0f64; k1 * o1 * o1];
        let mut kernel = vec![0.0f64; h1 * h1];
        for (rep, chans) in &groups {
            let px = row.frames[*rep].pixels();
            for k in 0..k1 {
                kernel.iter_mut().for_each(|v| *v = 0.0);
                for &c in chans {
                    let base = (k * interval + c) * h1 * h1;
                    for (acc, &w) in kernel.iter_mut().zip(&w1[base..base + h1 * h1]) {
                        *acc += w as f64;
                    }
                }
                let out = &mut a1[k * o1 * o1..(k + 1) * o1 * o1];
                for oy in 0..o1 {
                    for ox in 0..o1 {
                        let mut s = 0.0;
                        for ky in 0..h1 {
                            let row_px = &px[(oy + ky) * n + ox..(oy + ky) * n + ox + h1];
                            let row_k = &kernel[ky * h1..(ky + 1) * h1];
                            s += row_k.iter().zip(row_px).map(|(w, &v)| w * v as f64).sum::<f64>();
                        }
                        out[oy * o1 + ox] += s;
                    }
                }
            }
        }
        for k in 0..k1 {
            for v in &mut a1[k * o1 * o1..(k + 1) * o1 * o1] {
                *v = (*v + b1[k] as f64).max(0.0);
            }
        }

        let o2 = o1 - h2 + 1;
        let mut a2 = vec![0.0f64; k2 * o2 * o2];
        for k in 0..k2 {
            let out = &mut a2[k * o2 * o2..(k + 1) * o2 * o2];
            for c in 0..k1 {
                let base = (k * k1 + c) * h2 * h2;
                let wk = &w2[base..base + h2 * h2];
                let input = &a1[c * o1 * o1..(c + 1) * o1 * o1];
                for oy in 0..o2 {
                    for ox in 0..o2 {
                        let mut s = 0.0;
                        for ky in 0..h2 {
                            let src = &input[(oy + ky) * o1 + ox..(oy + ky) * o1 + ox + h2];
                            s += wk[ky * h2..(ky + 1) * h2]
                                .iter()
                                .zip(src)
                                .map(|(&w, v)| w as f64 * v)
                                .sum::<f64>();
                        }
                        out[oy * o2 + ox] += s;
                    }
                }
            }
            for v in out.iter_mut() {
                *v = (*v + b2[k] as f64).max(0.0);
            }
        }

        let width = a2.len();
        (0..self.n_out)
            .map(|u| {
                let w = &wd[u * width..(u + 1) * width];
                let s: f64 = w.iter().zip(&a2).map(|(&w, v)| w as f64 * v).sum();
                softplus(s + bd[u] as f64)
            })
            .collect()
    }
}

impl RetinaModel for CnnRetina {
    fn temporal_interval(&self) -> usize {
        self.tensors[0].dims[1]
    }

    fn n_neurons(&self) -> usize {
        self.n_out
    }

    fn predict(&self, row: &TemporalRow, _call_index: u64) -> Result<RateVector> {
        check_row(row, self.temporal_interval(), (self.input_size, self.input_size))?;
        Ok(RateVector(self.forward(row)))
    }

    fn predict_batch(&self, rows: &[TemporalRow], first_index: u64) -> Result<Vec<RateVector>> {
        use rayon::prelude::*;
        rows.par_iter()
            .enumerate()
            .map(|(j, r)| self.predict(r, first_index + j as u64))
            .collect()
    }
}

struct Cursor<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() < self.pos + n {
            return Err(Error::Weights {
                path: self.path.to_path_buf(),
                reason: format!(
                    "truncated at byte {}: needed {n} bytes, {} left",
                    self.pos,
                    self.bytes.len() - self.pos
                ),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

/// Read and shape-check a weights file.
pub fn load_cnn_weights(path: &Path) -> Result<CnnRetina> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut cur = Cursor {
        path,
        bytes: &bytes,
        pos: 0,
    };
    if cur.take(4).ok() != Some(&MAGIC[..]) {
        return Err(Error::Weights {
            path: path.to_path_buf(),
            reason: "bad magic, expected RNW1".into(),
        });
    }
    let mut tensors = Vec::with_capacity(TENSOR_ORDER.len());
    while cur.pos < bytes.len() {
        let name_len = cur.u32()? as usize;
        let name = String::from_utf8(cur.take(name_len)?.to_vec()).map_err(|_| Error::Weights {
            path: path.to_path_buf(),
            reason: format!("tensor name at byte {} is not UTF-8", cur.pos - name_len),
        })?;
        let rank = cur.take(1)?[0] as usize;
        let dims = (0..rank)
            .map(|_| cur.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let count: usize = dims.iter().product();
        let data = cur
            .take(count * 4)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        tensors.push(Tensor { name, dims, data });
    }
    CnnRetina::from_tensors(tensors)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_model_has_full_size_shapes() {
        let m = CnnRetina::random(30, 1);
        assert_eq!(m.input_size(), 50);
        assert_eq!(m.n_neurons(), 60);
        assert_eq!(m.tensors()[4].dims, vec![60, 16 * 28 * 28]);
    }

    #[test]
    fn inconsistent_conv2_rejected() {
        let good = CnnRetina::random_with(2, 6, (2, 3), (3, 2), 4, 1);
        let mut tensors = good.tensors().to_vec();
        tensors[1] = Tensor::new("conv1.b", vec![3], vec![0.0; 3]);
        match CnnRetina::from_tensors(tensors) {
            Err(Error::ShapeMismatch { tensor, .. }) => assert_eq!(tensor, "conv1.b"),
            other => panic!("{other:?}"),
        }
    }
}

//! Two-hidden-layer perceptron: ReLU units, softmax output, cross-entropy
//! loss, mini-batch SGD with momentum.
//!
//! [`Network`] is generic over the float type so the same backpropagation
//! code can be checked in `f64` and trained in `f32`.

use ndarray::{Array1, Array2, ArrayView2, Axis, NdFloat};
use num_traits::NumCast;
use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use retassess_core::dataset::CLASS_COUNT;
use retassess_core::seed;

use crate::{Dataset, LearnError, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams {
    /// Hidden widths; `None` derives `(n, n / 2)` from the input width.
    pub hidden: Option<(usize, usize)>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    /// Stop after this many epochs without loss improvement.
    pub patience: usize,
}

impl Default for MlpParams {
    fn default() -> Self {
        MlpParams {
            hidden: None,
            epochs: 30,
            batch_size: 64,
            learning_rate: 0.01,
            momentum: 0.9,
            patience: 5,
        }
    }
}

impl MlpParams {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(LearnError::Hyper("epochs and batch size must be positive".into()));
        }
        if !(self.learning_rate > 0.0) || !(0.0..1.0).contains(&self.momentum) {
            return Err(LearnError::Hyper("need learning rate > 0 and momentum in [0, 1)".into()));
        }
        if matches!(self.hidden, Some((a, b)) if a == 0 || b == 0) {
            return Err(LearnError::Hyper("hidden layers need at least one unit".into()));
        }
        Ok(())
    }

    pub fn hidden_for(&self, n_features: usize) -> (usize, usize) {
        self.hidden
            .unwrap_or((n_features.max(1), (n_features / 2).max(1)))
    }
}

fn cast<T: NdFloat>(v: f64) -> T {
    <T as NumCast>::from(v).expect("representable")
}

/// Weights and biases of `d -> h1 -> h2 -> classes`.
#[derive(Clone, Debug, PartialEq)]
pub struct Network<T> {
    pub w: [Array2<T>; 3],
    pub b: [Array1<T>; 3],
}

/// Gradients in the same layout as the parameters.
pub type Gradients<T> = Network<T>;

fn relu<T: NdFloat>(mut a: Array2<T>) -> Array2<T> {
    a.mapv_inplace(|v| v.max(T::zero()));
    a
}

fn softmax_rows<T: NdFloat>(z: &mut Array2<T>) {
    for mut row in z.rows_mut() {
        let m = row.fold(T::neg_infinity(), |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - m).exp());
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
}

fn mask_inactive<T: NdFloat>(g: &mut Array2<T>, z: &Array2<T>) {
    g.zip_mut_with(z, |g, &z| {
        if z <= T::zero() {
            *g = T::zero()
        }
    });
}

impl<T: NdFloat> Network<T> {
    /// He-normal weights, zero biases.
    pub fn init(d: usize, h1: usize, h2: usize, classes: usize, seed: u64) -> Self {
        let mut rng = seed::rng(seed, &[0x3e1]);
        let mut layer = |fan_in: usize, fan_out: usize| {
            let normal = Normal::new(0.0, (2.0 / fan_in.max(1) as f64).sqrt()).expect("finite");
            Array2::from_shape_fn((fan_in, fan_out), |_| cast::<T>(normal.sample(&mut rng)))
        };
        let w = [layer(d, h1), layer(h1, h2), layer(h2, classes)];
        Network {
            w,
            b: [Array1::zeros(h1), Array1::zeros(h2), Array1::zeros(classes)],
        }
    }

    pub fn layer_sizes(&self) -> [usize; 4] {
        [self.w[0].nrows(), self.w[0].ncols(), self.w[1].ncols(), self.w[2].ncols()]
    }

    pub fn logits(&self, x: ArrayView2<T>) -> Array2<T> {
        let a1 = relu(x.dot(&self.w[0]) + &self.b[0]);
        let a2 = relu(a1.dot(&self.w[1]) + &self.b[1]);
        a2.dot(&self.w[2]) + &self.b[2]
    }

    /// Mean cross-entropy.
    pub fn loss(&self, x: ArrayView2<T>, y: &[u8]) -> T {
        let mut p = self.logits(x);
        softmax_rows(&mut p);
        let tiny = T::min_positive_value();
        let total = y
            .iter()
            .enumerate()
            .fold(T::zero(), |acc, (i, &l)| acc - p[[i, l as usize]].max(tiny).ln());
        total / cast(y.len() as f64)
    }

    /// Mean cross-entropy and its gradient by backpropagation.
    pub fn loss_and_gradients(&self, x: ArrayView2<T>, y: &[u8]) -> (T, Gradients<T>) {
        let n: T = cast(y.len() as f64);
        let z1 = x.dot(&self.w[0]) + &self.b[0];
        let a1 = relu(z1.clone());
        let z2 = a1.dot(&self.w[1]) + &self.b[1];
        let a2 = relu(z2.clone());
        let mut p = a2.dot(&self.w[2]) + &self.b[2];
        softmax_rows(&mut p);
        let tiny = T::min_positive_value();
        let mut loss = T::zero();
        for (i, &l) in y.iter().enumerate() {
            loss -= p[[i, l as usize]].max(tiny).ln();
            p[[i, l as usize]] -= T::one();
        }
        let dz3 = p.mapv(|v| v / n);
        let mut dz2 = dz3.dot(&self.w[2].t());
        mask_inactive(&mut dz2, &z2);
        let mut dz1 = dz2.dot(&self.w[1].t());
        mask_inactive(&mut dz1, &z1);
        let grads = Network {
            w: [x.t().dot(&dz1), a1.t().dot(&dz2), a2.t().dot(&dz3)],
            b: [dz1.sum_axis(Axis(0)), dz2.sum_axis(Axis(0)), dz3.sum_axis(Axis(0))],
        };
        (loss / n, grads)
    }

    /// All parameters, layer by layer, weights before biases.
    pub fn flat_params(&self) -> Vec<T> {
        let mut v = Vec::new();
        for l in 0..3 {
            v.extend(self.w[l].iter());
            v.extend(self.b[l].iter());
        }
        v
    }

    pub fn set_flat_params(&mut self, v: &[T]) {
        assert_eq!(v.len(), self.flat_params().len(), "parameter count");
        let mut it = v.iter();
        for l in 0..3 {
            self.w[l].iter_mut().for_each(|p| *p = *it.next().unwrap());
            self.b[l].iter_mut().for_each(|p| *p = *it.next().unwrap());
        }
    }
}

/// A trained classifier: per-feature standardization fitted on the training
/// data followed by an `f32` network.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub(crate) mean: Vec<f64>,
    pub(crate) scale: Vec<f64>,
    pub(crate) net: Network<f32>,
}

impl Mlp {
    pub fn n_features(&self) -> usize {
        self.mean.len()
    }

    pub fn network(&self) -> &Network<f32> {
        &self.net
    }

    fn scaled_row(&self, row: &[f64], out: &mut [f32]) {
        for (c, o) in out.iter_mut().enumerate() {
            *o = ((row[c] - self.mean[c]) * self.scale[c]) as f32;
        }
    }

    fn scaled(&self, data: &Dataset, idx: impl ExactSizeIterator<Item = usize>) -> Array2<f32> {
        let d = self.n_features();
        let mut x = Array2::zeros((idx.len(), d));
        for (r, i) in idx.enumerate() {
            self.scaled_row(data.row(i), x.row_mut(r).as_slice_mut().expect("contiguous"));
        }
        x
    }

    /// Train on `data`. Returns the network, the epochs run and the last
    /// epoch's mean training loss.
    pub fn fit(data: &Dataset, params: &MlpParams, seed: u64) -> Result<(Mlp, usize, f64)> {
        params.validate()?;
        let d = data.n_features();
        let n = data.len();
        let (h1, h2) = params.hidden_for(d);
        let mut mean = vec![0.0; d];
        let mut scale = vec![1.0; d];
        for c in 0..d {
            let m = (0..n).map(|i| data.row(i)[c]).sum::<f64>() / n as f64;
            let var = (0..n).map(|i| (data.row(i)[c] - m).powi(2)).sum::<f64>() / n as f64;
            mean[c] = m;
            if var > 1e-24 {
                scale[c] = 1.0 / var.sqrt();
            }
        }
        let mut model = Mlp {
            mean,
            scale,
            net: Network::init(d, h1, h2, CLASS_COUNT, seed),
        };
        let x = model.scaled(data, 0..n);
        let y = data.labels();

        let lr = params.learning_rate as f32;
        let mu = params.momentum as f32;
        let net = &mut model.net;
        let mut vel = Network {
            w: std::array::from_fn(|l| Array2::zeros(net.w[l].raw_dim())),
            b: std::array::from_fn(|l| Array1::zeros(net.b[l].len())),
        };
        let mut rng = seed::rng(seed, &[0x3e2]);
        let mut order: Vec<usize> = (0..n).collect();
        let (mut best, mut stalled, mut last, mut epochs) = (f64::INFINITY, 0, f64::NAN, 0);
        let mut batch_y = Vec::with_capacity(params.batch_size);
        for _ in 0..params.epochs {
            epochs += 1;
            order.shuffle(&mut rng);
            let mut total = 0.0;
            for chunk in order.chunks(params.batch_size) {
                let bx = x.select(Axis(0), chunk);
                batch_y.clear();
                batch_y.extend(chunk.iter().map(|&i| y[i]));
                let (loss, g) = net.loss_and_gradients(bx.view(), &batch_y);
                total += loss as f64 * chunk.len() as f64;
                for l in 0..3 {
                    vel.w[l].zip_mut_with(&g.w[l], |v, &g| *v = mu * *v - lr * g);
                    net.w[l] += &vel.w[l];
                    vel.b[l].zip_mut_with(&g.b[l], |v, &g| *v = mu * *v - lr * g);
                    net.b[l] += &vel.b[l];
                }
            }
            last = total / n as f64;
            if !last.is_finite() {
                return Err(LearnError::Hyper("training diverged (non-finite loss)".into()));
            }
            if last < best - 1e-6 {
                best = last;
                stalled = 0;
            } else {
                stalled += 1;
                if stalled >= params.patience {
                    break;
                }
            }
        }
        Ok((model, epochs, last))
    }

    pub fn predict(&self, row: &[f64]) -> u8 {
        let mut x = Array2::zeros((1, row.len()));
        self.scaled_row(row, x.as_slice_mut().expect("contiguous"));
        argmax(self.net.logits(x.view()).row(0).iter().copied())
    }

    pub fn predict_batch(&self, data: &Dataset) -> Vec<u8> {
        let mut out = Vec::with_capacity(data.len());
        let n = data.len();
        for start in (0..n).step_by(1024) {
            let x = self.scaled(data, start..(start + 1024).min(n));
            let logits = self.net.logits(x.view());
            out.extend(logits.rows().into_iter().map(|r| argmax(r.iter().copied())));
        }
        out
    }
}

fn argmax(it: impl Iterator<Item = f32>) -> u8 {
    let mut best = (0usize, f32::NEG_INFINITY);
    for (i, v) in it.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0 as u8
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hidden_sizes_follow_input_width() {
        let p = MlpParams::default();
        assert_eq!(p.hidden_for(240), (240, 120));
        assert_eq!(p.hidden_for(1), (1, 1));
        assert_eq!(MlpParams { hidden: Some((500, 100)), ..p }.hidden_for(12), (500, 100));
    }

    #[test]
    fn flat_params_round_trip() {
        let mut m = Network::<f64>::init(3, 4, 2, 5, 1);
        let v = m.flat_params();
        assert_eq!(v.len(), 3 * 4 + 4 + 4 * 2 + 2 + 2 * 5 + 5);
        let shifted: Vec<f64> = v.iter().map(|x| x + 1.0).collect();
        m.set_flat_params(&shifted);
        assert_eq!(m.flat_params(), shifted);
    }

    #[test]
    fn uniform_logits_give_log_classes_loss() {
        let mut m = Network::<f64>::init(2, 2, 2, 4, 0);
        let zeros = vec![0.0; m.flat_params().len()];
        m.set_flat_params(&zeros);
        let x = Array2::from_elem((3, 2), 0.7);
        assert!((m.loss(x.view(), &[0, 1, 3]) - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn f32_and_f64_networks_agree() {
        let a = Network::<f64>::init(5, 6, 4, 10, 9);
        let b = Network::<f32>::init(5, 6, 4, 10, 9);
        let xa = Array2::from_shape_fn((3, 5), |(i, j)| (i * 5 + j) as f64 / 10.0 - 0.7);
        let xb = xa.mapv(|v| v as f32);
        let (la, _) = a.loss_and_gradients(xa.view(), &[1, 2, 3]);
        let (lb, _) = b.loss_and_gradients(xb.view(), &[1, 2, 3]);
        assert!((la - lb as f64).abs() < 1e-5);
    }
}

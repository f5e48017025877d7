//! Retinal models: map a temporal row to ganglion cell firing rates.

mod cnn;
mod lnp;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::temporal::TemporalRow;

pub use cnn::{load_cnn_weights, CnnRetina, Tensor};
pub use lnp::{make_lnp, LnpConfig, LnpNeuron, LnpRetina, STRONG_AMPLITUDE_THRESHOLD};

/// Number of ganglion cells predicted by the full-size models.
pub const NEURON_COUNT: usize = 60;

/// Non-negative firing rates, one per neuron.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateVector(pub Vec<f64>);

impl RateVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// A model name paired with its window length.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelId {
    pub name: String,
    pub temporal_interval: usize,
}

/// A response predictor. Implementations are immutable and reentrant.
pub trait RetinaModel: Send + Sync {
    fn temporal_interval(&self) -> usize;

    fn n_neurons(&self) -> usize;

    /// Rates for one row. `call_index` keys the output noise stream, so a
    /// given (model, row, index) always yields the same rates.
    fn predict(&self, row: &TemporalRow, call_index: u64) -> Result<RateVector>;

    /// Rates for consecutive rows, row `j` using noise key `first_index + j`.
    fn predict_batch(&self, rows: &[TemporalRow], first_index: u64) -> Result<Vec<RateVector>> {
        rows.iter()
            .enumerate()
            .map(|(j, r)| self.predict(r, first_index + j as u64))
            .collect()
    }
}

/// Mean over samples and neurons of the squared rate difference between
/// the model's predictions and `reference`.
pub fn model_mse(model: &dyn RetinaModel, reference: &[RateVector], rows: &[TemporalRow]) -> Result<f64> {
    if reference.len() != rows.len() {
        return Err(Error::InvalidArgument(format!(
            "{} reference vectors for {} rows",
            reference.len(),
            rows.len()
        )));
    }
    let predicted = model.predict_batch(rows, 0)?;
    rates_mse(&predicted, reference)
}

/// Mean squared difference between two equally shaped lists of rate vectors.
pub fn rates_mse(a: &[RateVector], b: &[RateVector]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::InvalidArgument("rate list lengths differ".into()));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for (x, y) in a.iter().zip(b) {
        if x.len() != y.len() {
            return Err(Error::InvalidArgument(format!(
                "rate vector lengths {} and {} differ",
                x.len(),
                y.len()
            )));
        }
        sum += x.0.iter().zip(&y.0).map(|(p, q)| (p - q) * (p - q)).sum::<f64>();
        count += x.len();
    }
    Ok(if count == 0 { 0.0 } else { sum / count as f64 })
}

pub(crate) fn check_row(row: &TemporalRow, interval: usize, size: (usize, usize)) -> Result<()> {
    if row.len() != interval {
        return Err(Error::LengthMismatch {
            expected: interval,
            found: row.len(),
        });
    }
    for f in &row.frames {
        if (f.height(), f.width()) != size {
            return Err(Error::FrameSize {
                expected: size.0,
                found_h: f.height(),
                found_w: f.width(),
            });
        }
    }
    Ok(())
}

#[inline]
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

//! Classifiers trained on retinal response features, and repeated
//! evaluation over training seeds.

mod codec;
pub mod forest;
pub mod mlp;
pub mod svm;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use retassess_core::dataset::CLASS_COUNT;
use retassess_core::FeatureMatrix;

pub use forest::{Forest, ForestParams};
pub use mlp::{Mlp, MlpParams};
pub use svm::{Svm, SvmParams};

#[derive(Debug, thiserror::Error)]
pub enum LearnError {
    #[error("training set is empty")]
    Empty,
    #[error("training labels contain a single class ({0})")]
    SingleClass(u8),
    #[error("feature width mismatch: model expects {expected}, got {found}")]
    WidthMismatch { expected: usize, found: usize },
    #[error("label {0} outside 0..{CLASS_COUNT}")]
    Label(u8),
    #[error("invalid hyperparameter: {0}")]
    Hyper(String),
    #[error("model file: {0}")]
    Format(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

pub type Result<T, E = LearnError> = std::result::Result<T, E>;

/// Dense row-major samples with class labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    n_features: usize,
    x: Vec<f64>,
    y: Vec<u8>,
}

impl Dataset {
    pub fn new(n_features: usize, x: Vec<f64>, y: Vec<u8>) -> Result<Self> {
        if x.len() != n_features * y.len() {
            return Err(LearnError::WidthMismatch {
                expected: n_features * y.len(),
                found: x.len(),
            });
        }
        if let Some(&bad) = y.iter().find(|&&l| l as usize >= CLASS_COUNT) {
            return Err(LearnError::Label(bad));
        }
        Ok(Dataset { n_features, x, y })
    }

    pub fn from_matrix(m: &FeatureMatrix) -> Result<Self> {
        Self::new(m.n_features(), m.values().to_vec(), m.labels().to_vec())
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn labels(&self) -> &[u8] {
        &self.y
    }

    pub fn values(&self) -> &[f64] {
        &self.x
    }

    pub fn select(&self, idx: &[usize]) -> Dataset {
        let mut x = Vec::with_capacity(idx.len() * self.n_features);
        for &i in idx {
            x.extend_from_slice(self.row(i));
        }
        Dataset {
            n_features: self.n_features,
            x,
            y: idx.iter().map(|&i| self.y[i]).collect(),
        }
    }

    pub fn with_labels(&self, y: Vec<u8>) -> Result<Dataset> {
        Dataset::new(self.n_features, self.x.clone(), y)
    }

    fn check_trainable(&self) -> Result<()> {
        let first = *self.y.first().ok_or(LearnError::Empty)?;
        if self.y.iter().all(|&l| l == first) {
            return Err(LearnError::SingleClass(first));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ClassifierKind {
    /// Hidden layers of 500 and 100 units.
    Mlp500x100,
    /// Hidden layers of `n` and `n / 2` units for `n` input features.
    MlpNHalf,
    SvmRbf,
    RandomForest,
}

pub const ALL_KINDS: [ClassifierKind; 4] = [
    ClassifierKind::Mlp500x100,
    ClassifierKind::MlpNHalf,
    ClassifierKind::SvmRbf,
    ClassifierKind::RandomForest,
];

impl ClassifierKind {
    pub fn name(self) -> &'static str {
        match self {
            ClassifierKind::Mlp500x100 => "MLP_500_100",
            ClassifierKind::MlpNHalf => "MLP_n_half",
            ClassifierKind::SvmRbf => "SVM_RBF",
            ClassifierKind::RandomForest => "RandomForest",
        }
    }

    fn tag(self) -> u8 {
        match self {
            ClassifierKind::Mlp500x100 => 0,
            ClassifierKind::MlpNHalf => 1,
            ClassifierKind::SvmRbf => 2,
            ClassifierKind::RandomForest => 3,
        }
    }

    fn from_tag(t: u8) -> Option<Self> {
        ALL_KINDS.get(t as usize).copied()
    }
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ClassifierKind {
    type Err = LearnError;
    fn from_str(s: &str) -> Result<Self> {
        ALL_KINDS
            .iter()
            .copied()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| LearnError::Hyper(format!("unknown classifier {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Hyper {
    Mlp(MlpParams),
    Svm(SvmParams),
    Forest(ForestParams),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierSpec {
    pub kind: ClassifierKind,
    pub hyper: Hyper,
}

impl ClassifierSpec {
    /// Default hyperparameters for a kind.
    pub fn new(kind: ClassifierKind) -> Self {
        let hyper = match kind {
            ClassifierKind::Mlp500x100 => Hyper::Mlp(MlpParams {
                hidden: Some((500, 100)),
                ..MlpParams::default()
            }),
            ClassifierKind::MlpNHalf => Hyper::Mlp(MlpParams::default()),
            ClassifierKind::SvmRbf => Hyper::Svm(SvmParams::default()),
            ClassifierKind::RandomForest => Hyper::Forest(ForestParams::default()),
        };
        ClassifierSpec { kind, hyper }
    }

    /// Whether training on `n` samples draws anything from the seed. The
    /// SVM is deterministic in its data below the subsampling cap.
    pub fn uses_seed(&self, n: usize) -> bool {
        match &self.hyper {
            Hyper::Svm(p) => n > p.max_samples,
            _ => true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.kind, &self.hyper) {
            (ClassifierKind::Mlp500x100 | ClassifierKind::MlpNHalf, Hyper::Mlp(p)) => p.validate(),
            (ClassifierKind::SvmRbf, Hyper::Svm(p)) => p.validate(),
            (ClassifierKind::RandomForest, Hyper::Forest(p)) => p.validate(),
            _ => Err(LearnError::Hyper(format!(
                "hyperparameters do not belong to {}",
                self.kind
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ModelBody {
    Mlp(Mlp),
    Svm(Svm),
    Forest(Forest),
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainedModel {
    pub kind: ClassifierKind,
    pub seed: u64,
    pub n_features: usize,
    /// Epochs for the MLP, SMO iterations for the SVM, trees for the forest.
    pub iterations: u64,
    /// Final training loss (MLP cross-entropy; 0 where undefined).
    pub final_loss: f64,
    pub body: ModelBody,
}

impl TrainedModel {
    pub fn predict(&self, row: &[f64]) -> Result<u8> {
        if row.len() != self.n_features {
            return Err(LearnError::WidthMismatch {
                expected: self.n_features,
                found: row.len(),
            });
        }
        Ok(match &self.body {
            ModelBody::Mlp(m) => m.predict(row),
            ModelBody::Svm(m) => m.predict(row),
            ModelBody::Forest(m) => m.predict(row),
        })
    }

    pub fn predict_all(&self, data: &Dataset) -> Result<Vec<u8>> {
        if data.n_features() != self.n_features {
            return Err(LearnError::WidthMismatch {
                expected: self.n_features,
                found: data.n_features(),
            });
        }
        Ok(match &self.body {
            ModelBody::Mlp(m) => m.predict_batch(data),
            _ => (0..data.len())
                .into_par_iter()
                .map(|i| self.predict(data.row(i)).expect("width checked"))
                .collect(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, codec::encode(self)).map_err(|e| LearnError::Io {
            path: path.display().to_string(),
            source: e,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| LearnError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        codec::decode(&bytes)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        codec::encode(self)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        codec::decode(bytes)
    }
}

/// Train one classifier. Deterministic in `seed`.
pub fn train(spec: &ClassifierSpec, data: &Dataset, seed: u64) -> Result<TrainedModel> {
    spec.validate()?;
    data.check_trainable()?;
    let n_features = data.n_features();
    let (body, iterations, final_loss) = match &spec.hyper {
        Hyper::Mlp(p) => {
            let (m, epochs, loss) = Mlp::fit(data, p, seed)?;
            (ModelBody::Mlp(m), epochs as u64, loss)
        }
        Hyper::Svm(p) => {
            let fit = Svm::fit(data, p, seed)?;
            let iters = fit.iterations;
            (ModelBody::Svm(fit.model), iters, 0.0)
        }
        Hyper::Forest(p) => {
            let f = Forest::fit(data, p, seed)?;
            let trees = f.n_trees() as u64;
            (ModelBody::Forest(f), trees, 0.0)
        }
    };
    Ok(TrainedModel {
        kind: spec.kind,
        seed,
        n_features,
        iterations,
        final_loss,
        body,
    })
}

pub fn train_matrix(spec: &ClassifierSpec, m: &FeatureMatrix, seed: u64) -> Result<TrainedModel> {
    train(spec, &Dataset::from_matrix(m)?, seed)
}

/// Fraction of exact label matches.
pub fn accuracy(model: &TrainedModel, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Ok(0.0);
    }
    let pred = model.predict_all(data)?;
    let hits = pred.iter().zip(data.labels()).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / data.len() as f64)
}

pub const REPEATS: usize = 10;

#[derive(Clone, Debug, PartialEq)]
pub struct EvalSummary {
    pub kind: ClassifierKind,
    pub base_seed: u64,
    pub accuracies: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

impl EvalSummary {
    pub fn from_accuracies(kind: ClassifierKind, base_seed: u64, accuracies: Vec<f64>) -> Self {
        let n = accuracies.len() as f64;
        let mean = accuracies.iter().sum::<f64>() / n;
        let var = accuracies.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
        EvalSummary {
            kind,
            base_seed,
            accuracies,
            mean,
            std: var.sqrt(),
        }
    }
}

/// Train with seeds `base_seed..base_seed + 10` and summarize test accuracy.
/// A seed-independent training runs once and its accuracy is repeated.
pub fn evaluate_repeated(spec: &ClassifierSpec, train_set: &Dataset, test_set: &Dataset, base_seed: u64) -> Result<EvalSummary> {
    let run = |k: u64| accuracy(&train(spec, train_set, base_seed.wrapping_add(k))?, test_set);
    let accs = if spec.uses_seed(train_set.len()) {
        (0..REPEATS as u64)
            .into_par_iter()
            .map(run)
            .collect::<Result<Vec<f64>>>()?
    } else {
        vec![run(0)?; REPEATS]
    };
    Ok(EvalSummary::from_accuracies(spec.kind, base_seed, accs))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kind_names_round_trip() {
        for k in ALL_KINDS {
            assert_eq!(k.name().parse::<ClassifierKind>().unwrap(), k);
            assert_eq!(ClassifierKind::from_tag(k.tag()), Some(k));
        }
        assert!("svm".parse::<ClassifierKind>().is_err());
    }

    #[test]
    fn summary_hand_arithmetic() {
        let accs = vec![0.5, 0.6, 0.7, 0.8, 0.9, 0.5, 0.6, 0.7, 0.8, 0.9];
        let s = EvalSummary::from_accuracies(ClassifierKind::SvmRbf, 0, accs);
        // mean 0.7; squared deviations 0.04, 0.01, 0, 0.01, 0.04 twice -> 0.2 / 10
        assert!((s.mean - 0.7).abs() <= 1e-12);
        assert!((s.std - 0.02f64.sqrt()).abs() <= 1e-12);
    }

    #[test]
    fn dataset_validation() {
        assert!(Dataset::new(2, vec![0.0; 3], vec![0, 1]).is_err());
        assert!(Dataset::new(1, vec![0.0], vec![10]).is_err());
        let d = Dataset::new(1, vec![0.0, 1.0], vec![3, 3]).unwrap();
        assert!(matches!(d.check_trainable(), Err(LearnError::SingleClass(3))));
        assert!(matches!(
            Dataset::new(1, vec![], vec![]).unwrap().check_trainable(),
            Err(LearnError::Empty)
        ));
    }

    #[test]
    fn mismatched_hyper_rejected() {
        let spec = ClassifierSpec {
            kind: ClassifierKind::SvmRbf,
            hyper: Hyper::Forest(ForestParams::default()),
        };
        assert!(spec.validate().is_err());
    }
}

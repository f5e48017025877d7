#![allow(dead_code)]

use std::path::PathBuf;

use retassess::ExperimentConfig;

pub fn mnist_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist/t10k-images-idx3-ubyte.gz")
}

/// A config over the bundled MNIST file with the given settings applied.
pub fn config(budget: usize, seed: u64, settings: &[(&str, &str)]) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.data = mnist_path();
    cfg.budget = budget;
    cfg.seed = Some(seed);
    for (k, v) in settings {
        cfg.set(k, v).unwrap_or_else(|e| panic!("{k}={v}: {}", e.0));
    }
    cfg.validate().expect("valid config");
    cfg
}

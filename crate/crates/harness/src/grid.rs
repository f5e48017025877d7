//! Enumeration of grid coordinates.

use retassess_core::features::PipelineConfig;
use retassess_core::{seed, Adjust, CombineMode};
use retassess_learn::ClassifierKind;

use crate::config::ExperimentConfig;

const TRAIN_KEY: u64 = 0x7a1;

/// One experiment: a model, a pipeline configuration and a classifier.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Coordinate {
    pub model: String,
    pub split: usize,
    pub adjust: Adjust,
    pub combine: CombineMode,
    pub valid: bool,
    pub classifier: ClassifierKind,
}

impl Coordinate {
    /// Stable identifier used for resuming and in sidecar files.
    pub fn key(&self) -> String {
        format!(
            "{}/p{}/{}/{}/{}/{}",
            self.model,
            self.split,
            self.adjust,
            self.combine,
            if self.valid { "valid" } else { "all" },
            self.classifier
        )
    }

    /// The same coordinate without the model, for pairing across models.
    pub fn point_key(&self) -> String {
        let k = self.key();
        k[k.find('/').map_or(0, |i| i + 1)..].to_string()
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig::new(self.split, self.adjust, self.valid, self.combine)
    }

    /// Base training seed. It ignores the model, so every model at a grid
    /// point is evaluated with the same ten training seeds.
    pub fn training_seed(&self, master: u64) -> u64 {
        let adjust = matches!(self.adjust, Adjust::Yes) as u64;
        let combine = match self.combine {
            CombineMode::Min => 0,
            CombineMode::Max => 1,
            CombineMode::None => 2,
        };
        let classifier = retassess_learn::ALL_KINDS
            .iter()
            .position(|&k| k == self.classifier)
            .expect("known kind") as u64;
        seed::derive(
            master,
            &[TRAIN_KEY, self.split as u64, adjust, combine, self.valid as u64, classifier],
        )
    }
}

/// Combine modes paired with an adjust mode.
pub fn combines_for(adjust: Adjust, cfg: &ExperimentConfig) -> Vec<CombineMode> {
    match adjust {
        Adjust::Yes => cfg.combine.clone(),
        Adjust::No => vec![CombineMode::None],
    }
}

/// All coordinates in run order: model, split, adjust, combine, valid,
/// classifier.
pub fn enumerate(cfg: &ExperimentConfig) -> Vec<Coordinate> {
    let mut out = Vec::new();
    for m in &cfg.models {
        for &split in &cfg.splits {
            for &adjust in &cfg.adjust {
                for combine in combines_for(adjust, cfg) {
                    for &valid in &cfg.valid {
                        for &classifier in &cfg.classifiers {
                            out.push(Coordinate {
                                model: m.name.clone(),
                                split,
                                adjust,
                                combine,
                                valid,
                                classifier,
                            });
                        }
                    }
                }
            }
        }
    }
    out
}

/// Feature count of a coordinate: `a * p^2` with `a` neurons kept.
pub fn n_features(neurons: usize, split: usize) -> usize {
    neurons * split * split
}

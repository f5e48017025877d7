//! Core pipeline for functional assessment of retinal models.
//!
//! Images are ingested ([`dataset`]), standardized and augmented
//! ([`preprocess`]), laid out as stimulus windows ([`temporal`]), fed to a
//! retinal model ([`retina`]) whose valid neurons are found by
//! spike-triggered averaging ([`sta`]), and finally turned into classifier
//! inputs ([`features`]).

pub mod dataset;
pub mod error;
pub mod features;
pub mod image;
pub mod preprocess;
pub mod retina;
pub mod seed;
pub mod sta;
pub mod temporal;

pub use dataset::{DatasetKind, ImageSet, RawImage, SplitPair};
pub use error::{DataError, Error, Result};
pub use features::{CombineMode, FeatureMatrix, PipelineConfig, Provenance};
pub use image::{Image, RETINA_SIZE};
pub use retina::{CnnRetina, LnpConfig, LnpRetina, RateVector, RetinaModel};
pub use sta::{ReceptiveFieldReport, StaKernel};
pub use temporal::{Adjust, TemporalConfig, TemporalRow};

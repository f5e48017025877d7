use std::path::PathBuf;

use retassess_core::dataset::{load_dataset, DatasetKind, ImageSet};
use retassess_core::features::{assemble, ResponseSet};
use retassess_core::retina::{make_lnp, LnpConfig, RateVector, RetinaModel};
use retassess_core::sta::{analyze_validity, DEFAULT_Z_THRESHOLD};
use retassess_core::{Adjust, CombineMode, Error, FeatureMatrix, PipelineConfig, Provenance, Result, TemporalRow};

fn mnist(n: usize) -> ImageSet {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist/t10k-images-idx3-ubyte.gz");
    let set = load_dataset(DatasetKind::Mnist, &path).unwrap();
    set.select(&(0..n).collect::<Vec<_>>())
}

fn provenance(cfg: &PipelineConfig) -> Provenance {
    Provenance {
        dataset: "mnist".into(),
        split: cfg.split,
        adjust: cfg.adjust,
        valid: cfg.keep_valid_only,
        combine: cfg.combine,
        model: "lnp".into(),
        temporal_interval: 30,
    }
}

#[test]
fn shape_100_images_p2_all_neurons() {
    let set = mnist(100);
    let model = make_lnp(&LnpConfig::default(), 1).unwrap();
    let cfg = PipelineConfig::new(2, Adjust::No, false, CombineMode::None);
    let m = assemble(&set, &model, None, &cfg, provenance(&cfg)).unwrap();
    assert_eq!((m.n_samples(), m.n_features()), (100, 240));
    assert_eq!(m.labels(), set.labels());
    assert!(m.values().iter().all(|v| v.is_finite() && *v >= 0.0));
}

#[test]
fn shape_valid_only_trend_max() {
    let set = mnist(10);
    let model = make_lnp(&LnpConfig::default(), 2).unwrap();
    let reports = analyze_validity(&model, 5000, 2, DEFAULT_Z_THRESHOLD).unwrap();
    assert_eq!(reports.iter().filter(|r| r.valid).count(), 12);
    let cfg = PipelineConfig::new(1, Adjust::Yes, true, CombineMode::Max);
    let m = assemble(&set, &model, Some(&reports), &cfg, provenance(&cfg)).unwrap();
    assert_eq!((m.n_samples(), m.n_features()), (10, 12));
}

#[test]
fn empty_set_keeps_declared_width() {
    let set = mnist(0);
    let model = make_lnp(&LnpConfig::default(), 1).unwrap();
    let cfg = PipelineConfig::new(3, Adjust::No, false, CombineMode::None);
    let m = assemble(&set, &model, None, &cfg, provenance(&cfg)).unwrap();
    assert_eq!((m.n_samples(), m.n_features()), (0, 540));
}

#[test]
fn min_never_exceeds_max() {
    let set = mnist(20);
    let images = retassess_core::preprocess::standardize_set(&set);
    let model = make_lnp(&LnpConfig::default(), 3).unwrap();
    let rs = ResponseSet::compute(&images, set.labels(), &model, 2, Adjust::Yes, 0).unwrap();
    for i in 0..rs.len() {
        for k in 0..4 {
            let lo = rs.part(i, k, CombineMode::Min).unwrap();
            let hi = rs.part(i, k, CombineMode::Max).unwrap();
            assert!(lo.0.iter().zip(&hi.0).all(|(a, b)| a <= b));
        }
    }
    assert!(rs.part(0, 0, CombineMode::None).is_err());
}

#[test]
fn serialized_matrix_is_stable() {
    let set = mnist(30);
    let model = make_lnp(&LnpConfig::default(), 4).unwrap().with_noise(0.05);
    let cfg = PipelineConfig::new(2, Adjust::Yes, false, CombineMode::Min);
    let a = assemble(&set, &model, None, &cfg, provenance(&cfg)).unwrap();
    let b = assemble(&set, &model, None, &cfg, provenance(&cfg)).unwrap();
    let (mut ta, mut tb) = (Vec::new(), Vec::new());
    a.write_to(&mut ta).unwrap();
    b.write_to(&mut tb).unwrap();
    assert_eq!(ta, tb);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("f.csv");
    a.save(&path).unwrap();
    assert_eq!(FeatureMatrix::load(&path).unwrap(), a);
}

/// Responds only to the newest frame, so rows carry no history.
struct LastFrame;

impl RetinaModel for LastFrame {
    fn temporal_interval(&self) -> usize {
        30
    }
    fn n_neurons(&self) -> usize {
        4
    }
    fn predict(&self, row: &TemporalRow, _i: u64) -> Result<RateVector> {
        let f = row.frames.last().unwrap();
        Ok(RateVector(vec![f.mean(), f.get(10, 10) as f64, f.get(25, 25) as f64, f.get(40, 12) as f64]))
    }
}

#[test]
fn permuting_images_permutes_rows() {
    let set = mnist(25);
    let perm: Vec<usize> = (0..25).map(|i| (i * 7 + 3) % 25).collect();
    let shuffled = set.select(&perm);
    for (adjust, combine) in [(Adjust::No, CombineMode::None), (Adjust::Yes, CombineMode::Max)] {
        let cfg = PipelineConfig::new(2, adjust, false, combine);
        let a = assemble(&set, &LastFrame, None, &cfg, provenance(&cfg)).unwrap();
        let b = assemble(&shuffled, &LastFrame, None, &cfg, provenance(&cfg)).unwrap();
        for (j, &i) in perm.iter().enumerate() {
            assert_eq!(b.row(j), a.row(i));
            assert_eq!(b.labels()[j], a.labels()[i]);
        }
    }
}

/// Fails on any row whose newest frame is very bright.
struct Fussy;

impl RetinaModel for Fussy {
    fn temporal_interval(&self) -> usize {
        30
    }
    fn n_neurons(&self) -> usize {
        1
    }
    fn predict(&self, row: &TemporalRow, _i: u64) -> Result<RateVector> {
        if row.frames.last().unwrap().mean() > 0.9 {
            return Err(Error::InvalidArgument("too bright".into()));
        }
        Ok(RateVector(vec![1.0]))
    }
}

#[test]
fn failing_image_is_named() {
    use retassess_core::dataset::RawImage;
    let mut images: Vec<RawImage> = (0..6).map(|_| RawImage::gray(28, 28, vec![10; 784])).collect();
    images[4] = RawImage::gray(28, 28, vec![255; 784]);
    let set = ImageSet::new(DatasetKind::Mnist, images, vec![0; 6]).unwrap();
    let cfg = PipelineConfig::new(1, Adjust::No, false, CombineMode::None);
    match assemble(&set, &Fussy, None, &cfg, provenance(&cfg)) {
        Err(Error::AtImage { index, .. }) => assert_eq!(index, 4),
        other => panic!("expected failure at image 4, got {other:?}"),
    }
}

#[test]
fn valid_without_reports_is_an_error() {
    let set = mnist(2);
    let model = make_lnp(&LnpConfig::default(), 1).unwrap();
    let cfg = PipelineConfig::new(1, Adjust::No, true, CombineMode::None);
    assert!(assemble(&set, &model, None, &cfg, provenance(&cfg)).is_err());
}

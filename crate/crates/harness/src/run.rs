//! The experiment driver.

use std::collections::HashSet;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use anyhow::{Context, Result};
use rayon::prelude::*;
use retassess_core::dataset::{load_dataset, split_indices};
use retassess_core::features::ResponseSet;
use retassess_core::preprocess::{augment_set, standardize_set};
use retassess_core::retina::{model_mse, RateVector};
use retassess_core::sta::{analyze_validity, valid_indices};
use retassess_core::temporal::{build_rows, Frame};
use retassess_core::{seed, Adjust, FeatureMatrix, Image, Provenance, ReceptiveFieldReport, RetinaModel, TemporalConfig};
use retassess_learn::{evaluate_repeated, ClassifierSpec, Dataset};

use crate::config::ExperimentConfig;
use crate::grid::{self, Coordinate};
use crate::models::{ground_truth, ModelSpec, REFERENCE_INTERVAL};
use crate::results::{read_results, ResultRow, ResultSink};
use crate::UsageError;

const SUBSAMPLE_KEY: u64 = 0x5b;
const AUGMENT_KEY: u64 = 0xa6;
const SPLIT_KEY: u64 = 0x59;
const STA_KEY: u64 = 0x57a;

/// Standardized (and augmented) images with a fixed train/test partition.
pub struct Prepared {
    pub dataset: String,
    pub images: Vec<Image>,
    pub labels: Vec<u8>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

pub fn master_seed(cfg: &ExperimentConfig) -> Result<u64, UsageError> {
    cfg.seed.ok_or_else(|| UsageError("a master seed is required (--seed)".into()))
}

/// Ingest, subsample to the budget, standardize, augment, split.
pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    let master = master_seed(cfg)?;
    let set = load_dataset(cfg.dataset, &cfg.data)?;
    let set = set.subsample(cfg.budget, seed::derive(master, &[SUBSAMPLE_KEY]));
    let images = standardize_set(&set);
    let (images, labels) = if cfg.augment {
        augment_set(&images, set.labels(), seed::derive(master, &[AUGMENT_KEY]))
    } else {
        (images, set.labels().to_vec())
    };
    let (train, test) = split_indices(&labels, cfg.split_ratio, seed::derive(master, &[SPLIT_KEY]))?;
    log::info!(
        "{}: {} images after augmentation, {} train / {} test",
        cfg.dataset,
        images.len(),
        train.len(),
        test.len()
    );
    Ok(Prepared {
        dataset: cfg.dataset.to_string(),
        images,
        labels,
        train,
        test,
    })
}

/// Snapshot rows of the first `n` test images, long enough for both the
/// model and the reference; each side reads its trailing window.
pub fn mse_against_reference(model: &dyn RetinaModel, reference: &dyn RetinaModel, data: &Prepared, n: usize) -> Result<f64> {
    let frames: Vec<Frame> = data
        .test
        .iter()
        .take(n)
        .map(|&i| Arc::new(data.images[i].clone()))
        .collect();
    let len = model.temporal_interval().max(reference.temporal_interval());
    let rows = build_rows(&frames, &TemporalConfig::new(len, Adjust::No))?;
    let cut = |l: usize| rows.iter().map(|r| r.trailing(l)).collect::<Vec<_>>();
    let truth: Vec<RateVector> = reference.predict_batch(&cut(reference.temporal_interval()), 0)?;
    Ok(model_mse(model, &truth, &cut(model.temporal_interval()))?)
}

/// A built model with the analyses shared by all its coordinates.
pub struct ModelContext {
    pub spec: ModelSpec,
    pub model: Arc<dyn RetinaModel>,
    pub mse: f64,
    pub reports: Option<Vec<ReceptiveFieldReport>>,
}

impl ModelContext {
    pub fn build(spec: &ModelSpec, cfg: &ExperimentConfig, data: &Prepared, need_reports: bool) -> Result<Self> {
        let master = master_seed(cfg)?;
        let model = spec.build(master).with_context(|| format!("building model {}", spec.name))?;
        let reference = ground_truth(master, REFERENCE_INTERVAL)?;
        let mse = mse_against_reference(model.as_ref(), &reference, data, cfg.mse_images)?;
        let reports = if need_reports {
            let r = analyze_validity(
                model.as_ref(),
                cfg.sta_rows,
                seed::derive(master, &[STA_KEY]),
                cfg.z_threshold,
            )?;
            log::info!("{}: {} valid neurons", spec.name, valid_indices(&r).len());
            Some(r)
        } else {
            None
        };
        log::info!("{}: MSE vs ground truth {mse}", spec.name);
        Ok(ModelContext {
            spec: spec.clone(),
            model,
            mse,
            reports,
        })
    }

    pub fn provenance(&self, dataset: &str, coord: &Coordinate) -> Provenance {
        Provenance {
            dataset: dataset.to_string(),
            split: coord.split,
            adjust: coord.adjust,
            valid: coord.valid,
            combine: coord.combine,
            model: self.spec.to_string(),
            temporal_interval: self.model.temporal_interval(),
        }
    }

    /// Feature matrix over all prepared images for one coordinate.
    pub fn features(&self, responses: &ResponseSet, dataset: &str, coord: &Coordinate) -> Result<FeatureMatrix> {
        let keep = if coord.valid {
            let reports = self.reports.as_ref().context("receptive-field reports missing")?;
            let idx = valid_indices(reports);
            anyhow::ensure!(!idx.is_empty(), "model {} has no valid neurons", self.spec.name);
            Some(idx)
        } else {
            None
        };
        let m = responses.features(coord.combine, keep.as_deref(), self.provenance(dataset, coord))?;
        let a = keep.as_ref().map_or(self.model.n_neurons(), Vec::len);
        anyhow::ensure!(
            m.n_features() == grid::n_features(a, coord.split),
            "feature count {} breaks the shape law for a={a}, p={}",
            m.n_features(),
            coord.split
        );
        Ok(m)
    }

    pub fn responses(&self, data: &Prepared, split: usize, adjust: Adjust) -> Result<ResponseSet> {
        Ok(ResponseSet::compute(
            &data.images,
            &data.labels,
            self.model.as_ref(),
            split,
            adjust,
            0,
        )?)
    }
}

/// Evaluate one coordinate on prepared features.
pub fn evaluate(ctx: &ModelContext, data: &Prepared, features: &FeatureMatrix, coord: &Coordinate, master: u64) -> Result<ResultRow> {
    let all = Dataset::from_matrix(features)?;
    let train = all.select(&data.train);
    let test = all.select(&data.test);
    let spec = ClassifierSpec::new(coord.classifier);
    let summary = evaluate_repeated(&spec, &train, &test, coord.training_seed(master))?;
    Ok(ResultRow {
        dataset: data.dataset.clone(),
        coord: coord.clone(),
        temporal_interval: ctx.model.temporal_interval(),
        n_features: features.n_features(),
        n_train: train.len(),
        n_test: test.len(),
        mean_accuracy: summary.mean,
        std_accuracy: summary.std,
        model_mse: ctx.mse,
        accuracies: summary.accuracies,
    })
}

#[derive(Debug, Default)]
pub struct RunReport {
    /// Every row in the results file after the run, in file order.
    pub rows: Vec<ResultRow>,
    /// Coordinates that failed in this run, with their errors.
    pub failures: Vec<(Coordinate, String)>,
    /// Coordinates already present before the run.
    pub resumed: usize,
}

/// Run every pending coordinate of the grid, appending to `out`.
pub fn run_grid(cfg: &ExperimentConfig, out: &Path) -> Result<RunReport> {
    cfg.validate()?;
    let master = master_seed(cfg)?;
    let coords = grid::enumerate(cfg);
    let done: HashSet<String> = if out.exists() {
        read_results(out)?.iter().map(|r| r.coord.key()).collect()
    } else {
        HashSet::new()
    };
    let pending: Vec<&Coordinate> = coords.iter().filter(|c| !done.contains(&c.key())).collect();
    let mut report = RunReport {
        resumed: coords.len() - pending.len(),
        ..RunReport::default()
    };
    log::info!("{} coordinates, {} already done", coords.len(), report.resumed);
    let mut sink = ResultSink::open(out)?;
    if !pending.is_empty() {
        let data = prepare(cfg)?;
        for spec in &cfg.models {
            let mine: Vec<&Coordinate> = pending.iter().copied().filter(|c| c.model == spec.name).collect();
            if mine.is_empty() {
                continue;
            }
            let need_reports = mine.iter().any(|c| c.valid);
            let ctx = match ModelContext::build(spec, cfg, &data, need_reports) {
                Ok(c) => c,
                Err(e) => {
                    for c in &mine {
                        fail(&mut sink, &mut report, c, &e)?;
                    }
                    continue;
                }
            };
            for &split in &cfg.splits {
                for &adjust in &cfg.adjust {
                    let group: Vec<&Coordinate> = mine
                        .iter()
                        .copied()
                        .filter(|c| c.split == split && c.adjust == adjust)
                        .collect();
                    if group.is_empty() {
                        continue;
                    }
                    run_group(&ctx, &data, &group, master, &mut sink, &mut report)?;
                }
            }
        }
    }
    report.rows = read_results(out)?;
    Ok(report)
}

fn fail(sink: &mut ResultSink, report: &mut RunReport, c: &Coordinate, e: &anyhow::Error) -> Result<()> {
    let msg = format!("{e:#}");
    log::error!("{}: {msg}", c.key());
    sink.failure(c, &msg)?;
    report.failures.push((c.clone(), msg));
    Ok(())
}

fn run_group(
    ctx: &ModelContext,
    data: &Prepared,
    group: &[&Coordinate],
    master: u64,
    sink: &mut ResultSink,
    report: &mut RunReport,
) -> Result<()> {
    let started = Instant::now();
    let responses = match ctx.responses(data, group[0].split, group[0].adjust) {
        Ok(r) => r,
        Err(e) => {
            for c in group {
                fail(sink, report, c, &e)?;
            }
            return Ok(());
        }
    };
    let shared = started.elapsed().as_secs_f64() / group.len() as f64;
    let outcomes: Vec<(Result<ResultRow>, f64)> = group
        .par_iter()
        .map(|c| {
            let t = Instant::now();
            let r = ctx
                .features(&responses, &data.dataset, c)
                .and_then(|m| evaluate(ctx, data, &m, c, master));
            (r, shared + t.elapsed().as_secs_f64())
        })
        .collect();
    for (c, (r, secs)) in group.iter().zip(outcomes) {
        match r {
            Ok(row) => {
                log::info!("{} -> {:.4} +- {:.4}", c.key(), row.mean_accuracy, row.std_accuracy);
                sink.row(&row, secs)?;
            }
            Err(e) => fail(sink, report, c, &e)?,
        }
    }
    Ok(())
}

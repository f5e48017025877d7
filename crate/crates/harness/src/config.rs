//! Experiment configuration: defaults, `key=value` files and overrides.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use retassess_core::{Adjust, CombineMode, DatasetKind};
use retassess_learn::{ClassifierKind, ALL_KINDS};

use crate::models::ModelSpec;
use crate::UsageError;

pub const DEFAULT_MNIST: &str = "data/mnist/t10k-images-idx3-ubyte.gz";

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: DatasetKind,
    /// Image file (IDX), batch file or directory (CIFAR-10), or Gray50 file.
    pub data: PathBuf,
    /// Images drawn from the dataset before augmentation.
    pub budget: usize,
    pub augment: bool,
    pub split_ratio: f64,
    pub splits: Vec<usize>,
    pub adjust: Vec<Adjust>,
    pub valid: Vec<bool>,
    /// Combine modes used when adjust is yes.
    pub combine: Vec<CombineMode>,
    pub classifiers: Vec<ClassifierKind>,
    pub models: Vec<ModelSpec>,
    pub seed: Option<u64>,
    /// White-noise rows for receptive-field analysis.
    pub sta_rows: usize,
    pub z_threshold: f64,
    /// Test images used to measure model MSE against the ground truth.
    pub mse_images: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: DatasetKind::Mnist,
            data: PathBuf::from(DEFAULT_MNIST),
            budget: 1000,
            augment: true,
            split_ratio: 0.7,
            splits: vec![1, 2, 3, 4],
            adjust: vec![Adjust::Yes, Adjust::No],
            valid: vec![true, false],
            combine: vec![CombineMode::Min, CombineMode::Max],
            classifiers: ALL_KINDS.to_vec(),
            models: vec![
                "RetModel1:lnp:30".parse().expect("valid"),
                "RetModel2:lnp:40".parse().expect("valid"),
            ],
            seed: None,
            sta_rows: 5000,
            z_threshold: retassess_core::sta::DEFAULT_Z_THRESHOLD,
            mse_images: 200,
        }
    }
}

fn list<T>(value: &str, parse: impl Fn(&str) -> Result<T, String>) -> Result<Vec<T>, String> {
    let items: Vec<T> = value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(parse)
        .collect::<Result<_, _>>()?;
    if items.is_empty() {
        return Err("empty list".into());
    }
    Ok(items)
}

fn yes_no(s: &str) -> Result<bool, String> {
    match s.to_ascii_lowercase().as_str() {
        "yes" | "true" => Ok(true),
        "no" | "false" => Ok(false),
        other => Err(format!("expected yes or no, got {other:?}")),
    }
}

fn num<T: FromStr>(s: &str) -> Result<T, String> {
    s.parse().map_err(|_| format!("not a number: {s:?}"))
}

impl ExperimentConfig {
    /// Apply one setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), UsageError> {
        let value = value.trim();
        let r: Result<(), String> = (|| {
            match key.trim() {
                "dataset" => self.dataset = value.parse().map_err(|e| format!("{e}"))?,
                "data" => self.data = PathBuf::from(value),
                "budget" => self.budget = num(value)?,
                "augment" => self.augment = yes_no(value)?,
                "split_ratio" => self.split_ratio = num(value)?,
                "splits" => self.splits = list(value, num)?,
                "adjust" => self.adjust = list(value, |s| s.parse().map_err(|e| format!("{e}")))?,
                "valid" => self.valid = list(value, yes_no)?,
                "combine" => self.combine = list(value, |s| s.parse().map_err(|e| format!("{e}")))?,
                "classifiers" => {
                    self.classifiers = list(value, |s| s.parse().map_err(|e| format!("{e}")))?
                }
                "models" => self.models = list(value, |s| s.parse().map_err(|e: UsageError| e.0))?,
                "seed" => self.seed = Some(num(value)?),
                "sta_rows" => self.sta_rows = num(value)?,
                "z_threshold" => self.z_threshold = num(value)?,
                "mse_images" => self.mse_images = num(value)?,
                other => return Err(format!("unknown key {other:?}")),
            }
            Ok(())
        })();
        r.map_err(|e| UsageError(format!("{key}: {e}")))
    }

    /// Apply `key=value` lines; blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<(), UsageError> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| UsageError(format!("line {}: expected key=value", n + 1)))?;
            self.set(k, v)
                .map_err(|e| UsageError(format!("line {}: {}", n + 1, e.0)))?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self, UsageError> {
        let mut c = ExperimentConfig::default();
        c.apply_text(text)?;
        Ok(c)
    }

    /// The configuration as `key=value` lines, readable by [`Self::from_text`].
    pub fn to_text(&self) -> String {
        fn join<T: ToString>(v: &[T]) -> String {
            v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
        }
        let yn = |b: &bool| if *b { "yes" } else { "no" };
        let mut s = String::new();
        let _ = writeln!(s, "dataset={}", self.dataset);
        let _ = writeln!(s, "data={}", self.data.display());
        let _ = writeln!(s, "budget={}", self.budget);
        let _ = writeln!(s, "augment={}", yn(&self.augment));
        let _ = writeln!(s, "split_ratio={}", self.split_ratio);
        let _ = writeln!(s, "splits={}", join(&self.splits));
        let _ = writeln!(s, "adjust={}", join(&self.adjust));
        let _ = writeln!(s, "valid={}", self.valid.iter().map(yn).collect::<Vec<_>>().join(","));
        let _ = writeln!(s, "combine={}", join(&self.combine));
        let _ = writeln!(s, "classifiers={}", join(&self.classifiers));
        let _ = writeln!(s, "models={}", join(&self.models));
        if let Some(seed) = self.seed {
            let _ = writeln!(s, "seed={seed}");
        }
        let _ = writeln!(s, "sta_rows={}", self.sta_rows);
        let _ = writeln!(s, "z_threshold={}", self.z_threshold);
        let _ = writeln!(s, "mse_images={}", self.mse_images);
        s
    }

    /// Check ranges and cross-field rules.
    pub fn validate(&self) -> Result<(), UsageError> {
        let bad = |m: String| Err(UsageError(m));
        if self.budget == 0 {
            return bad("budget must be positive".into());
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return bad(format!("split_ratio {} not in (0, 1)", self.split_ratio));
        }
        if let Some(&p) = self.splits.iter().find(|&&p| !(1..=4).contains(&p)) {
            return bad(format!("split {p} not in 1..=4"));
        }
        if self.adjust.contains(&Adjust::Yes)
            && (self.combine.is_empty() || self.combine.contains(&CombineMode::None))
        {
            return bad("adjust=yes needs combine modes drawn from min,max".into());
        }
        if !(self.z_threshold > 0.0) || self.sta_rows == 0 {
            return bad("sta_rows and z_threshold must be positive".into());
        }
        let mut names: Vec<&str> = self.models.iter().map(|m| m.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return bad("model names must be unique".into());
        }
        for list_has_dupes in [
            has_dupes(&self.splits),
            has_dupes(&self.adjust),
            has_dupes(&self.valid),
            has_dupes(&self.combine),
            has_dupes(&self.classifiers),
        ] {
            if list_has_dupes {
                return bad("grid lists must not repeat values".into());
            }
        }
        Ok(())
    }
}

fn has_dupes<T: PartialEq>(v: &[T]) -> bool {
    v.iter().enumerate().any(|(i, a)| v[..i].contains(a))
}

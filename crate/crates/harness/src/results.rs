//! Result rows and their CSV files.
//!
//! The results file holds only deterministic values, so two runs with the
//! same seed are byte-identical. Wall times go to a `.timings.csv` sidecar
//! and failed coordinates to `.failures.csv`.

use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use retassess_core::{Adjust, CombineMode};
use retassess_learn::ClassifierKind;

use crate::grid::Coordinate;

pub const HEADER: &str = "dataset,model,temporal_interval,split,adjust,combine,valid,classifier,n_features,n_train,n_test,mean_accuracy,std_accuracy,model_mse,accuracies";

#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub dataset: String,
    pub coord: Coordinate,
    pub temporal_interval: usize,
    pub n_features: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub model_mse: f64,
    /// Per training seed, in seed order.
    pub accuracies: Vec<f64>,
}

impl ResultRow {
    pub fn to_csv(&self) -> String {
        let c = &self.coord;
        let accs: Vec<String> = self.accuracies.iter().map(f64::to_string).collect();
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.dataset,
            c.model,
            self.temporal_interval,
            c.split,
            c.adjust,
            c.combine,
            if c.valid { "yes" } else { "no" },
            c.classifier,
            self.n_features,
            self.n_train,
            self.n_test,
            self.mean_accuracy,
            self.std_accuracy,
            self.model_mse,
            accs.join(";")
        )
    }

    pub fn from_csv(line: &str) -> Result<Self> {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 15 {
            bail!("expected 15 fields, found {}", f.len());
        }
        let num = |i: usize| -> Result<f64> {
            f[i].parse::<f64>().with_context(|| format!("field {i}: {:?}", f[i]))
        };
        let int = |i: usize| -> Result<usize> {
            f[i].parse::<usize>().with_context(|| format!("field {i}: {:?}", f[i]))
        };
        let accuracies = if f[14].is_empty() {
            Vec::new()
        } else {
            f[14]
                .split(';')
                .map(|a| a.parse::<f64>().with_context(|| format!("accuracy {a:?}")))
                .collect::<Result<_>>()?
        };
        Ok(ResultRow {
            dataset: f[0].to_string(),
            coord: Coordinate {
                model: f[1].to_string(),
                split: int(3)?,
                adjust: f[4].parse::<Adjust>()?,
                combine: f[5].parse::<CombineMode>()?,
                valid: match f[6] {
                    "yes" => true,
                    "no" => false,
                    v => bail!("valid must be yes or no, got {v:?}"),
                },
                classifier: f[7].parse::<ClassifierKind>()?,
            },
            temporal_interval: int(2)?,
            n_features: int(8)?,
            n_train: int(9)?,
            n_test: int(10)?,
            mean_accuracy: num(11)?,
            std_accuracy: num(12)?,
            model_mse: num(13)?,
            accuracies,
        })
    }
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRow>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_results(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Parse a results file. A final line without a newline is an interrupted
/// write and is ignored.
pub fn parse_results(text: &str) -> Result<Vec<ResultRow>> {
    let complete = match text.rfind('\n') {
        Some(i) => &text[..=i],
        None => "",
    };
    let mut lines = complete.lines();
    match lines.next() {
        Some(HEADER) => {}
        Some(other) => bail!("unexpected header {other:?}"),
        None => return Ok(Vec::new()),
    }
    lines
        .enumerate()
        .map(|(i, l)| ResultRow::from_csv(l).with_context(|| format!("line {}", i + 2)))
        .collect()
}

pub fn sidecar(out: &Path, suffix: &str) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('"', "\"\"").replace(['\n', '\r'], " "))
}

/// Appends rows, failures and timings; the results file is created with a
/// header and cut back to its last complete line when resuming.
pub struct ResultSink {
    results: BufWriter<File>,
    failures: BufWriter<File>,
    timings: BufWriter<File>,
}

fn open_append(path: &Path, header: &str) -> Result<BufWriter<File>> {
    let fresh = fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let mut w = BufWriter::new(f);
    if fresh {
        writeln!(w, "{header}")?;
        w.flush()?;
    }
    Ok(w)
}

impl ResultSink {
    pub fn open(out: &Path) -> Result<Self> {
        if let Ok(text) = fs::read(out) {
            let keep = text.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
            if keep < text.len() {
                log::warn!("{}: dropping incomplete last line", out.display());
                let f = OpenOptions::new().write(true).open(out)?;
                f.set_len(keep as u64)?;
            }
        }
        Ok(ResultSink {
            results: open_append(out, HEADER)?,
            failures: open_append(&sidecar(out, ".failures.csv"), "coordinate,error")?,
            timings: open_append(&sidecar(out, ".timings.csv"), "coordinate,seconds")?,
        })
    }

    pub fn row(&mut self, row: &ResultRow, seconds: f64) -> Result<()> {
        writeln!(self.results, "{}", row.to_csv())?;
        writeln!(self.timings, "{},{seconds:.3}", row.coord.key())?;
        self.results.flush()?;
        self.timings.flush()?;
        Ok(())
    }

    pub fn failure(&mut self, coord: &Coordinate, error: &str) -> Result<()> {
        writeln!(self.failures, "{},{}", coord.key(), quote(error))?;
        self.failures.flush()?;
        Ok(())
    }
}

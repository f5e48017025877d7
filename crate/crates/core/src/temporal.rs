//! Temporal stimulus windows.
//!
//! A row is the sequence of `temporal_interval` frames (10 ms each) seen by
//! the retina up to the moment its response is read out. Read backwards
//! from the newest frame, a row holds the current image `n` times, one
//! black separator, the previous image five times, another separator, the
//! image before that five times, and so on until the window is full.
//! Positions before the first image of the sequence are black.

use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{Image, RETINA_SIZE};

/// Duration of one frame in milliseconds.
pub const FRAME_MS: usize = 10;
/// Repetitions of each image in the trend mode (responses at 10..50 ms).
pub const TREND_REPETITIONS: usize = 5;
/// Repetitions in the snapshot mode (response at 100 ms).
pub const SNAPSHOT_REPETITIONS: usize = 10;

/// Shared handle to one 50x50 stimulus frame.
pub type Frame = Arc<Image>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Adjust {
    /// Five rows per image, `n = 1..=5` repetitions.
    Yes,
    /// One row per image with ten repetitions.
    No,
}

impl Adjust {
    pub fn as_str(self) -> &'static str {
        match self {
            Adjust::Yes => "yes",
            Adjust::No => "no",
        }
    }
}

impl fmt::Display for Adjust {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Adjust {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "yes" | "true" => Ok(Adjust::Yes),
            "no" | "false" => Ok(Adjust::No),
            other => Err(Error::InvalidArgument(format!("adjust must be yes or no, got {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemporalConfig {
    pub temporal_interval: usize,
    pub adjust: Adjust,
    /// Repetitions of each earlier image in the history.
    pub history_repetitions: usize,
    /// Black frames between consecutive images.
    pub separator_frames: usize,
}

impl TemporalConfig {
    pub fn new(temporal_interval: usize, adjust: Adjust) -> Self {
        TemporalConfig {
            temporal_interval,
            adjust,
            history_repetitions: TREND_REPETITIONS,
            separator_frames: 1,
        }
    }

    /// Maximum repetition count of the current image.
    pub fn repetitions_per_image(&self) -> usize {
        match self.adjust {
            Adjust::Yes => TREND_REPETITIONS,
            Adjust::No => SNAPSHOT_REPETITIONS,
        }
    }

    /// Repetition counts of the rows emitted for one image.
    pub fn repetition_schedule(&self) -> Vec<usize> {
        match self.adjust {
            Adjust::Yes => (1..=TREND_REPETITIONS).collect(),
            Adjust::No => vec![SNAPSHOT_REPETITIONS],
        }
    }

    pub fn rows_per_image(&self) -> usize {
        self.repetition_schedule().len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.temporal_interval < self.repetitions_per_image() + 1 {
            return Err(Error::InvalidTemporalConfig(format!(
                "temporal_interval {} must be at least repetitions + 1 = {}",
                self.temporal_interval,
                self.repetitions_per_image() + 1
            )));
        }
        if self.history_repetitions == 0 {
            return Err(Error::InvalidTemporalConfig(
                "history repetitions must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// One input sample for a retinal model, frames in chronological order.
#[derive(Clone, Debug)]
pub struct TemporalRow {
    pub frames: Vec<Frame>,
    pub source_index: usize,
    pub repetitions: usize,
}

impl TemporalRow {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// The newest `n` frames as a row of length `n`.
    pub fn trailing(&self, n: usize) -> TemporalRow {
        assert!(n <= self.frames.len(), "trailing window longer than row");
        TemporalRow {
            frames: self.frames[self.frames.len() - n..].to_vec(),
            source_index: self.source_index,
            repetitions: self.repetitions.min(n),
        }
    }

    /// Time of the readout relative to the onset of the current image.
    pub fn response_time_ms(&self) -> usize {
        self.repetitions * FRAME_MS
    }
}

/// The all-zero 50x50 frame. Every call returns the same shared frame.
pub fn black_frame() -> Frame {
    static BLACK: OnceLock<Frame> = OnceLock::new();
    BLACK
        .get_or_init(|| Arc::new(Image::zeros(RETINA_SIZE, RETINA_SIZE)))
        .clone()
}

/// Build the temporal rows for an image sequence: per image, one row per
/// entry of the repetition schedule, in image order then increasing `n`.
pub fn build_rows(images: &[Frame], cfg: &TemporalConfig) -> Result<Vec<TemporalRow>> {
    cfg.validate()?;
    let black = match images.first() {
        Some(f) if f.height() != RETINA_SIZE || f.width() != RETINA_SIZE => {
            Arc::new(Image::zeros(f.height(), f.width()))
        }
        _ => black_frame(),
    };
    let schedule = cfg.repetition_schedule();
    let mut rows = Vec::with_capacity(images.len() * schedule.len());
    for i in 0..images.len() {
        for &n in &schedule {
            rows.push(TemporalRow {
                frames: row_frames(images, i, n, cfg, &black),
                source_index: i,
                repetitions: n,
            });
        }
    }
    Ok(rows)
}

fn row_frames(images: &[Frame], current: usize, n: usize, cfg: &TemporalConfig, black: &Frame) -> Vec<Frame> {
    let t = cfg.temporal_interval;
    let mut newest_first: Vec<Frame> = Vec::with_capacity(t);
    let push = |v: &mut Vec<Frame>, f: &Frame, count: usize| {
        for _ in 0..count {
            if v.len() == t {
                return;
            }
            v.push(f.clone());
        }
    };
    push(&mut newest_first, &images[current], n);
    let mut prev = current;
    while newest_first.len() < t {
        push(&mut newest_first, black, cfg.separator_frames);
        if prev == 0 {
            break;
        }
        prev -= 1;
        push(&mut newest_first, &images[prev], cfg.history_repetitions);
    }
    while newest_first.len() < t {
        newest_first.push(black.clone());
    }
    newest_first.reverse();
    newest_first
}

//! Retinal model specifications and the ground-truth retina.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;

use retassess_core::retina::{load_cnn_weights, make_lnp};
use retassess_core::{seed, LnpConfig, LnpRetina, RetinaModel};

use crate::UsageError;

/// Window length of the ground-truth retina that MSE is measured against.
pub const REFERENCE_INTERVAL: usize = 30;

const GROUND_TRUTH_KEY: u64 = 0x6e7;
const DEGRADE_KEY: u64 = 0xde6;

#[derive(Clone, Debug, PartialEq)]
pub enum ModelSource {
    /// The ground-truth LNP retina at `interval`, degraded by `level`.
    Lnp { interval: usize, level: f64 },
    /// A convolutional model read from a weights file.
    Cnn { path: PathBuf },
}

/// `name:lnp:interval[:level]` or `name:cnn:path`.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpec {
    pub name: String,
    pub source: ModelSource,
}

impl FromStr for ModelSpec {
    type Err = UsageError;

    fn from_str(s: &str) -> Result<Self, UsageError> {
        let err = |m: &str| UsageError(format!("model {s:?}: {m}"));
        let mut parts = s.splitn(3, ':');
        let name = parts.next().unwrap_or("").trim();
        if name.is_empty()
            || !name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
        {
            return Err(err("name must be non-empty [A-Za-z0-9_.-]"));
        }
        let kind = parts.next().ok_or_else(|| err("missing kind"))?;
        let rest = parts.next().ok_or_else(|| err("missing parameters"))?;
        let source = match kind {
            "lnp" => {
                let (interval, level) = match rest.split_once(':') {
                    Some((i, l)) => (i, l.parse::<f64>().map_err(|_| err("bad level"))?),
                    None => (rest, 0.0),
                };
                let interval: usize = interval.parse().map_err(|_| err("bad interval"))?;
                if interval == 0 || !(level >= 0.0) {
                    return Err(err("interval must be positive and level non-negative"));
                }
                ModelSource::Lnp { interval, level }
            }
            "cnn" => ModelSource::Cnn {
                path: PathBuf::from(rest),
            },
            _ => return Err(err("kind must be lnp or cnn")),
        };
        Ok(ModelSpec {
            name: name.to_string(),
            source,
        })
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.source {
            ModelSource::Lnp { interval, level } if *level == 0.0 => {
                write!(f, "{}:lnp:{interval}", self.name)
            }
            ModelSource::Lnp { interval, level } => write!(f, "{}:lnp:{interval}:{level}", self.name),
            ModelSource::Cnn { path } => write!(f, "{}:cnn:{}", self.name, path.display()),
        }
    }
}

/// The planted LNP retina of an experiment. Every interval shares the same
/// receptive fields.
pub fn ground_truth(master_seed: u64, interval: usize) -> retassess_core::Result<LnpRetina> {
    make_lnp(
        &LnpConfig::with_interval(interval),
        seed::derive(master_seed, &[GROUND_TRUTH_KEY]),
    )
}

impl ModelSpec {
    pub fn build(&self, master_seed: u64) -> retassess_core::Result<Arc<dyn RetinaModel>> {
        Ok(match &self.source {
            ModelSource::Lnp { interval, level } => {
                let gt = ground_truth(master_seed, *interval)?;
                if *level > 0.0 {
                    let s = seed::derive(master_seed, &[DEGRADE_KEY, level.to_bits()]);
                    Arc::new(gt.degrade(*level, s)?)
                } else {
                    Arc::new(gt)
                }
            }
            ModelSource::Cnn { path } => Arc::new(load_cnn_weights(path)?),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_strings_round_trip() {
        for s in ["RetModel1:lnp:30", "deg:lnp:30:0.5", "mine:cnn:/tmp/w:x.bin"] {
            let m: ModelSpec = s.parse().unwrap();
            assert_eq!(m.to_string(), s);
        }
        let m: ModelSpec = "mine:cnn:/tmp/w:x.bin".parse().unwrap();
        assert_eq!(m.source, ModelSource::Cnn { path: "/tmp/w:x.bin".into() });
        for bad in ["", "a b:lnp:30", "x:lnp", "x:lnp:0", "x:lnp:30:-1", "x:foo:1"] {
            assert!(bad.parse::<ModelSpec>().is_err(), "{bad}");
        }
    }

    #[test]
    fn intervals_share_receptive_fields() {
        let a = ground_truth(5, 30).unwrap();
        let b = ground_truth(5, 40).unwrap();
        assert_eq!(a.neurons(), b.neurons());
        assert_eq!(b.temporal_kernel().len(), 40);
    }
}

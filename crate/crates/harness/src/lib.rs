//! Experiment grid, model comparison and summaries for functional
//! assessment of retinal models.

pub mod config;
pub mod grid;
pub mod models;
pub mod results;
pub mod run;
pub mod summary;

pub use config::ExperimentConfig;
pub use grid::Coordinate;
pub use models::ModelSpec;
pub use results::ResultRow;
pub use run::{run_grid, RunReport};

/// A problem with the invocation or configuration rather than the data.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

/// Process exit code for an error: usage, unreadable or malformed input
/// data, or anything else.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    use retassess_core::Error as E;
    use retassess_learn::LearnError as L;
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return EXIT_USAGE;
        }
        if let Some(e) = cause.downcast_ref::<E>() {
            if matches!(e, E::Data(_) | E::Io { .. } | E::Weights { .. } | E::FeatureFile(_)) {
                return EXIT_DATA;
            }
        }
        if let Some(e) = cause.downcast_ref::<L>() {
            if matches!(e, L::Io { .. } | L::Format(_)) {
                return EXIT_DATA;
            }
        }
        if cause.is::<std::io::Error>() {
            return EXIT_DATA;
        }
    }
    EXIT_INTERNAL
}

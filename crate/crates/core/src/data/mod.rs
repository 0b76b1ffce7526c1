//! Smart-meter series: CSV ingestion, the synthetic generator, theft
//! injection, statistics and model windows.

pub mod csv_io;
pub mod series;
pub mod stats;
pub mod synth;
pub mod theft;
pub mod window;

pub use csv_io::{ingest_csv, read_csv, write_csv, CsvSchema, GapPolicy};
pub use series::{Episode, MeterSeries, STEP_MINUTES};
pub use stats::{autocorrelation, correlation_matrix, pearson, CorrMatrix};
pub use synth::{synth, synth_with, Synth, SynthConfig, CHANNELS, STEPS_PER_DAY};
pub use theft::{apply_episodes, inject_theft, read_sidecar, write_sidecar};
pub use window::{window_count, windowize, NormStats, Windows};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("input has no data rows")]
    Empty,
    #[error("row {row}: {msg}")]
    Parse { row: usize, msg: String },
    #[error("missing column {0:?}")]
    MissingColumn(String),
    #[error("row {row}: duplicate timestamp {timestamp}")]
    Duplicate { row: usize, timestamp: String },
    #[error("gap of {minutes} minutes before {timestamp}")]
    Gap { timestamp: String, minutes: i64 },
    #[error("{0}")]
    Range(String),
    #[error("episode overlaps an existing theft episode")]
    Overlap,
    #[error("sidecar line {line}: {msg}")]
    Sidecar { line: usize, msg: String },
}

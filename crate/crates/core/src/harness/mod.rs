//! Experiment orchestration: configuration, end-to-end pipelines, sweeps,
//! capacity studies, analog audio runs, and file I/O.

pub mod config;
pub mod pgm;

mod audio;
mod capacity;
mod pipeline;
mod report;
mod sweep;

pub use audio::run_demod_audio;
pub use capacity::{run_capacity, run_odmr_scan};
pub use config::ExperimentConfig;
pub use pipeline::{
    build_scene, draw_channel_gains, run_simulate, simulate_bits, tones_for_tuple, SimOutcome,
};
pub use report::{AudioSummary, CapacitySummary, RunReport, SlotCounts, TimingReport};
pub use sweep::{median, run_ber_sweep, SweepRow};

use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config field `{field}`: {reason}")]
    Config { field: String, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {reason}")]
    Pgm { path: String, reason: String },
    #[error("waveform file {path}: {reason}")]
    Waveform { path: String, reason: String },
    #[error(transparent)]
    Modem(#[from] crate::modem::ModemError),
    #[error(transparent)]
    Scene(#[from] crate::scene::SceneError),
    #[error(transparent)]
    Detect(#[from] crate::rxdetect::DetectError),
}

impl HarnessError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.display().to_string(), source }
    }
}

/// Write CSV with a UTF-8 header row and `.` decimal separators.
pub(crate) fn write_csv(
    path: &Path,
    header: &str,
    rows: impl IntoIterator<Item = String>,
) -> Result<(), HarnessError> {
    let mut text = String::from(header);
    text.push('\n');
    for row in rows {
        text.push_str(&row);
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

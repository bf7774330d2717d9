//! File formats.

pub mod calfile;
pub mod csv_frames;
pub mod manifest;
pub mod mseq;
pub mod scenario;
pub mod trace;

use std::path::Path;

use dflim_core::DenseMatrix;

pub use calfile::{CalibrationFile, Preprocessing, Provenance};
pub use csv_frames::{read_csv_dir, write_csv_dir};
pub use manifest::RunManifest;
pub use mseq::{read_mseq, write_mseq, MseqReader, MseqWriter};
pub use scenario::{load_scenario, save_scenario};

use crate::error::AppResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum FrameFormat {
    /// MSEQ binary file.
    #[default]
    Mseq,
    /// Directory of CSV files, one frame each.
    CsvDir,
}

pub fn read_frames(path: &Path, format: FrameFormat) -> AppResult<Vec<DenseMatrix>> {
    match format {
        FrameFormat::Mseq => read_mseq(path),
        FrameFormat::CsvDir => read_csv_dir(path),
    }
}

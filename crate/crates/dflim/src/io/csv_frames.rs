//! Directories of CSV frames: one `*.csv` file per frame, read in file-name
//! order, numeric cells without a header row.

use std::fs;
use std::path::{Path, PathBuf};

use dflim_core::DenseMatrix;

use crate::error::{AppError, AppResult, IoContext, ParseError};

fn frame_files(dir: &Path) -> AppResult<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .at(dir)?
        .map(|e| e.map(|e| e.path()).at(dir))
        .collect::<AppResult<Vec<_>>>()?
        .into_iter()
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(ParseError::whole(dir, "no .csv frame files found").into());
    }
    Ok(files)
}

pub fn read_csv_frame(path: &Path) -> AppResult<DenseMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0usize;
    for (i, rec) in rdr.records().enumerate() {
        let row = i as u64 + 1;
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let width = rec.len();
        match cols {
            None => cols = Some(width),
            Some(c) if c != width => {
                return Err(ParseError::at_row(path, row, format!("ragged row: {width} cells, expected {c}")).into())
            }
            _ => {}
        }
        for (j, cell) in rec.iter().enumerate() {
            let v: f64 = cell
                .parse()
                .map_err(|_| ParseError::at_row(path, row, format!("column {}: `{cell}` is not a number", j + 1)))?;
            if !v.is_finite() {
                return Err(ParseError::at_row(path, row, format!("column {}: non-finite value", j + 1)).into());
            }
            data.push(v);
        }
        rows += 1;
    }
    let cols = cols.filter(|&c| c > 0).ok_or_else(|| ParseError::whole(path, "empty frame"))?;
    Ok(DenseMatrix::new(rows, cols, data)?)
}

fn csv_error(path: &Path, e: csv::Error) -> AppError {
    match e.kind() {
        csv::ErrorKind::Io(_) => {
            let csv::ErrorKind::Io(io) = e.into_kind() else { unreachable!() };
            AppError::io(path, io)
        }
        _ => {
            let row = e.position().map(|p| p.record() + 1);
            match row {
                Some(r) => ParseError::at_row(path, r, e.to_string()).into(),
                None => ParseError::whole(path, e.to_string()).into(),
            }
        }
    }
}

pub fn read_csv_dir(dir: &Path) -> AppResult<Vec<DenseMatrix>> {
    let mut frames: Vec<DenseMatrix> = Vec::new();
    for file in frame_files(dir)? {
        let f = read_csv_frame(&file)?;
        if let Some(first) = frames.first() {
            if first.shape() != f.shape() {
                return Err(ParseError::whole(
                    &file,
                    format!("frame is {}x{}, earlier frames are {}x{}", f.rows(), f.cols(), first.rows(), first.cols()),
                )
                .into());
            }
        }
        frames.push(f);
    }
    Ok(frames)
}

/// Writes one frame per file as `frame_000001.csv`, ...
pub fn write_csv_dir(frames: &[DenseMatrix], dir: &Path) -> AppResult<()> {
    fs::create_dir_all(dir).at(dir)?;
    for (i, f) in frames.iter().enumerate() {
        let path = dir.join(format!("frame_{:06}.csv", i + 1));
        let mut w = csv::WriterBuilder::new().has_headers(false).from_path(&path).map_err(|e| csv_error(&path, e))?;
        for r in 0..f.rows() {
            w.write_record(f.row(r).iter().map(|v| v.to_string())).map_err(|e| csv_error(&path, e))?;
        }
        w.flush().at(&path)?;
    }
    Ok(())
}

//! MSEQ binary frame sequences.
//!
//! Layout: the 9 ASCII bytes `DFLIMSEQ1`, then `p1`, `p2`, `n` as
//! little-endian `u32`, then `n * p1 * p2` little-endian `f64` values, frame
//! by frame, each frame row-major.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use dflim_core::DenseMatrix;

use crate::error::{AppError, AppResult, IoContext, ParseError};

pub const MAGIC: &[u8; 9] = b"DFLIMSEQ1";
pub const HEADER_LEN: u64 = 21;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MseqHeader {
    pub p1: u32,
    pub p2: u32,
    pub n: u32,
}

impl MseqHeader {
    pub fn frame_bytes(&self) -> u64 {
        8 * self.p1 as u64 * self.p2 as u64
    }

    pub fn file_len(&self) -> u64 {
        HEADER_LEN + self.n as u64 * self.frame_bytes()
    }

    fn encode(&self) -> [u8; HEADER_LEN as usize] {
        let mut h = [0u8; HEADER_LEN as usize];
        h[..9].copy_from_slice(MAGIC);
        h[9..13].copy_from_slice(&self.p1.to_le_bytes());
        h[13..17].copy_from_slice(&self.p2.to_le_bytes());
        h[17..21].copy_from_slice(&self.n.to_le_bytes());
        h
    }
}

/// Streaming reader; the file length is checked against the header on open.
pub struct MseqReader {
    path: PathBuf,
    inner: BufReader<File>,
    header: MseqHeader,
    next: u32,
    buf: Vec<u8>,
}

impl MseqReader {
    pub fn open(path: &Path) -> AppResult<Self> {
        let file = File::open(path).at(path)?;
        let actual = file.metadata().at(path)?.len();
        let mut inner = BufReader::new(file);
        let mut h = [0u8; HEADER_LEN as usize];
        if actual < HEADER_LEN {
            return Err(ParseError::at_byte(
                path,
                actual,
                format!("truncated header: expected {HEADER_LEN} bytes, file has {actual}"),
            )
            .into());
        }
        inner.read_exact(&mut h).at(path)?;
        if &h[..9] != MAGIC {
            return Err(ParseError::at_byte(path, 0, "bad magic; expected DFLIMSEQ1").into());
        }
        let word = |i: usize| u32::from_le_bytes(h[i..i + 4].try_into().expect("4-byte slice"));
        let header = MseqHeader { p1: word(9), p2: word(13), n: word(17) };
        if header.p1 == 0 || header.p2 == 0 {
            return Err(
                ParseError::at_byte(path, 9, format!("zero frame dimension {}x{}", header.p1, header.p2)).into()
            );
        }
        let expected = header.file_len();
        if actual != expected {
            return Err(ParseError::at_byte(
                path,
                actual.min(expected),
                format!(
                    "payload length mismatch for {} frames of {}x{}: expected {expected} bytes, file has {actual}",
                    header.n, header.p1, header.p2
                ),
            )
            .into());
        }
        let buf = vec![0u8; header.frame_bytes() as usize];
        Ok(Self { path: path.to_path_buf(), inner, header, next: 0, buf })
    }

    pub fn header(&self) -> MseqHeader {
        self.header
    }

    fn read_frame(&mut self) -> AppResult<DenseMatrix> {
        let offset = HEADER_LEN + self.next as u64 * self.header.frame_bytes();
        self.inner.read_exact(&mut self.buf).at(&self.path)?;
        let data: Vec<f64> =
            self.buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk"))).collect();
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(ParseError::at_byte(&self.path, offset + 8 * i as u64, "non-finite value").into());
        }
        self.next += 1;
        Ok(DenseMatrix::new(self.header.p1 as usize, self.header.p2 as usize, data)?)
    }
}

impl Iterator for MseqReader {
    type Item = AppResult<DenseMatrix>;

    fn next(&mut self) -> Option<Self::Item> {
        (self.next < self.header.n).then(|| self.read_frame())
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.header.n - self.next) as usize;
        (left, Some(left))
    }
}

pub fn read_mseq(path: &Path) -> AppResult<Vec<DenseMatrix>> {
    MseqReader::open(path)?.collect()
}

/// Streaming writer for a sequence whose length is known up front.
pub struct MseqWriter {
    path: PathBuf,
    inner: BufWriter<File>,
    header: MseqHeader,
    written: u32,
}

impl MseqWriter {
    pub fn create(path: &Path, p1: usize, p2: usize, n: usize) -> AppResult<Self> {
        let dim = |v: usize, what: &str| {
            u32::try_from(v)
                .ok()
                .filter(|&v| v > 0)
                .ok_or_else(|| AppError::Usage(format!("{what} {v} does not fit the MSEQ header")))
        };
        let header = MseqHeader {
            p1: dim(p1, "p1")?,
            p2: dim(p2, "p2")?,
            n: u32::try_from(n).map_err(|_| AppError::Usage(format!("{n} frames do not fit the MSEQ header")))?,
        };
        let mut inner = BufWriter::new(File::create(path).at(path)?);
        inner.write_all(&header.encode()).at(path)?;
        Ok(Self { path: path.to_path_buf(), inner, header, written: 0 })
    }

    pub fn write_frame(&mut self, frame: &DenseMatrix) -> AppResult<()> {
        if frame.shape() != (self.header.p1 as usize, self.header.p2 as usize) {
            return Err(AppError::Usage(format!(
                "frame {} is {}x{}, sequence is {}x{}",
                self.written + 1,
                frame.rows(),
                frame.cols(),
                self.header.p1,
                self.header.p2
            )));
        }
        if self.written == self.header.n {
            return Err(AppError::Usage(format!("more than the declared {} frames", self.header.n)));
        }
        for v in frame.data() {
            self.inner.write_all(&v.to_le_bytes()).at(&self.path)?;
        }
        self.written += 1;
        Ok(())
    }

    pub fn finish(mut self) -> AppResult<()> {
        if self.written != self.header.n {
            return Err(AppError::Usage(format!("declared {} frames but wrote {}", self.header.n, self.written)));
        }
        self.inner.flush().at(&self.path)
    }
}

pub fn write_mseq(frames: &[DenseMatrix], path: &Path) -> AppResult<()> {
    let (p1, p2) =
        frames.first().map(DenseMatrix::shape).ok_or_else(|| AppError::Usage("no frames to write".into()))?;
    let mut w = MseqWriter::create(path, p1, p2, frames.len())?;
    for f in frames {
        w.write_frame(f)?;
    }
    w.finish()
}

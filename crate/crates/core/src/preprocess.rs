//! Frame preprocessing: consecutive differencing and patch rearrangement.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

/// `D_t = X_{t+1} - X_t`; the output is one frame shorter.
pub fn diff_frames(frames: &[DenseMatrix]) -> Result<Vec<DenseMatrix>> {
    if frames.len() < 2 {
        return Err(Error::invalid(format!("differencing needs at least 2 frames, got {}", frames.len())));
    }
    frames
        .windows(2)
        .enumerate()
        .map(|(i, w)| w[1].sub(&w[0]).map_err(|_| Error::invalid(format!("frame {} changes shape", i + 2))))
        .collect()
}

/// Rearranges a `p1 x p2` frame into a `b^2 x (p1/b * p2/b)` matrix.
///
/// Non-overlapping `b x b` tiles are visited row-major (left to right, then top
/// to bottom); tile `k` becomes column `k`, vectorised column-major so entry
/// `(r, c)` of the tile lands in row `c * b + r`.
pub fn patch_transform(frame: &DenseMatrix, b: usize) -> Result<DenseMatrix> {
    let (p1, p2) = frame.shape();
    if b == 0 || p1 % b != 0 || p2 % b != 0 {
        return Err(Error::invalid(format!(
            "patch side {b} does not divide the {p1}x{p2} frame; crop to {}x{} first",
            if b == 0 { 0 } else { p1 - p1 % b },
            if b == 0 { 0 } else { p2 - p2 % b },
        )));
    }
    let (tiles_r, tiles_c) = (p1 / b, p2 / b);
    let ncols = tiles_r * tiles_c;
    let mut out = DenseMatrix::zeros(b * b, ncols);
    for tr in 0..tiles_r {
        for tc in 0..tiles_c {
            let col = tr * tiles_c + tc;
            for c in 0..b {
                for r in 0..b {
                    out[(c * b + r, col)] = frame[(tr * b + r, tc * b + c)];
                }
            }
        }
    }
    Ok(out)
}

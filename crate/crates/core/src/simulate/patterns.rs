//! Deterministic backgrounds and shift patterns.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::math;

pub const SUPPORTED_DIMS: [(usize, usize); 3] = [(100, 200), (40, 80), (50, 100)];

const CHESS_LEVEL: f64 = 0.1;
const SPARSE_LEVEL: f64 = 3.0;
const RING_LEVEL: f64 = 0.173;
const SINE_LEVEL: f64 = 0.283;
/// Singular values of the rank-3 addon in units of the chessboard's top one.
pub const ADDON_SCALES: [f64; 3] = [5.0, 4.0, 3.0];

pub(crate) fn check_dims(p1: usize, p2: usize) -> Result<()> {
    if SUPPORTED_DIMS.contains(&(p1, p2)) {
        Ok(())
    } else {
        Err(Error::invalid(format!("unsupported frame size {p1}x{p2}; expected one of 100x200, 40x80, 50x100")))
    }
}

/// Chessboard entry at 1-based pixel `(j1, j2)`. The tile is 10 rows by 40
/// columns and the pattern is defined pixelwise, so smaller frames are a
/// crop of the full one.
fn chess_entry(j1: usize, j2: usize) -> f64 {
    let top = (j1 - 1) % 10 < 5;
    let band = (j2 - 1) % 40 / 10; // 0: 1..10, 1: 11..20, 2: 21..30, 3: 31..40
    match (top, band) {
        (true, 1) | (false, 2) => CHESS_LEVEL,
        (true, 3) | (false, 0) => -CHESS_LEVEL,
        _ => 0.0,
    }
}

/// Rank-2 chessboard background with entries in `{-0.1, 0, 0.1}`.
pub fn chessboard_mean(p1: usize, p2: usize) -> Result<DenseMatrix> {
    check_dims(p1, p2)?;
    Ok(DenseMatrix::from_fn(p1, p2, |i, j| chess_entry(i + 1, j + 1)))
}

/// Orthonormal discrete sine vector `sqrt(2/(p+1)) sin(k pi j/(p+1))`, `j = 1..p`.
fn sine_vector(p: usize, k: usize) -> Vec<f64> {
    let n = (p + 1) as f64;
    let norm = math::sqrt(2.0 / n);
    (1..=p).map(|j| norm * math::sin(core::f64::consts::PI * (k * j) as f64 / n)).collect()
}

/// Smooth deterministic rank-3 matrix `sum_k s_k a_k b_k^T` built from the
/// first three discrete sine vectors on each side, with singular values
/// `(5, 4, 3)` times the chessboard's leading singular value.
pub fn rank_k_addon(p1: usize, p2: usize, k: usize) -> Result<DenseMatrix> {
    if p1 == 0 || p2 == 0 {
        return Err(Error::invalid("addon dimensions must be positive"));
    }
    if k != ADDON_SCALES.len() || k > p1.min(p2) {
        return Err(Error::invalid(format!("only a rank-3 addon is provided, got k={k}")));
    }
    // the chessboard has two equal singular values sqrt(N/2) * 0.1 where N is
    // the nonzero count; computed directly so cropped frames stay consistent
    let nonzero =
        (1..=p1).flat_map(|i| (1..=p2).map(move |j| (i, j))).filter(|&(i, j)| chess_entry(i, j) != 0.0).count();
    let lambda1 = CHESS_LEVEL * math::sqrt(nonzero as f64 / 2.0);
    let mut out = DenseMatrix::zeros(p1, p2);
    for (idx, scale) in ADDON_SCALES.iter().enumerate() {
        let a = sine_vector(p1, idx + 1);
        let b = sine_vector(p2, idx + 1);
        let s = scale * lambda1;
        for i in 0..p1 {
            for j in 0..p2 {
                out[(i, j)] += s * a[i] * b[j];
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "snake_case"))]
pub enum ShiftKind {
    None,
    Sparse,
    Ring,
    Sine,
    Chessboard,
}

impl ShiftKind {
    pub const ALL: [ShiftKind; 5] = [Self::None, Self::Sparse, Self::Ring, Self::Sine, Self::Chessboard];

    pub fn name(self) -> &'static str {
        match self {
            Self::None => "none",
            Self::Sparse => "sparse",
            Self::Ring => "ring",
            Self::Sine => "sine",
            Self::Chessboard => "chessboard",
        }
    }
}

impl core::fmt::Display for ShiftKind {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

impl core::str::FromStr for ShiftKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| Error::invalid(format!("unknown shift kind `{s}`")))
    }
}

/// Ring level at 1-based pixel offset `(d1, d2)` from the centre.
pub(crate) fn ring_entry(d1: i64, d2: i64) -> f64 {
    let radius = math::isqrt((d1 * d1 + d2 * d2) as u64);
    match radius % 12 {
        0..=3 => RING_LEVEL,
        8..=11 => -RING_LEVEL,
        _ => 0.0,
    }
}

/// `sin(n pi / 5)` with exact zeros at multiples of five.
fn sin_fifth(n: usize) -> f64 {
    let n = n % 10;
    if n % 5 == 0 {
        0.0
    } else {
        math::sin(n as f64 * core::f64::consts::PI / 5.0)
    }
}

/// Shift pattern `A` (unscaled). Indices below are 1-based.
///
/// * sparse: 3 on rows 8..=13, columns 18..=23;
/// * ring: `0.173` when the floored radius from `(p1/2, p2/2)` is `12k + 0..3`,
///   `-0.173` when it is `12k + 8..11`;
/// * sine: `0.283 sin(j2 pi/5) sin(2 j1 pi/5)`;
/// * chessboard: the rank-2 background itself.
pub fn shift_matrix(kind: ShiftKind, p1: usize, p2: usize) -> Result<DenseMatrix> {
    check_dims(p1, p2)?;
    let m = match kind {
        ShiftKind::None => DenseMatrix::zeros(p1, p2),
        ShiftKind::Sparse => DenseMatrix::from_fn(p1, p2, |i, j| {
            if (8..=13).contains(&(i + 1)) && (18..=23).contains(&(j + 1)) {
                SPARSE_LEVEL
            } else {
                0.0
            }
        }),
        ShiftKind::Ring => {
            let (c1, c2) = ((p1 / 2) as i64, (p2 / 2) as i64);
            DenseMatrix::from_fn(p1, p2, |i, j| ring_entry(i as i64 + 1 - c1, j as i64 + 1 - c2))
        }
        ShiftKind::Sine => DenseMatrix::from_fn(p1, p2, |i, j| SINE_LEVEL * sin_fifth(j + 1) * sin_fifth(2 * (i + 1))),
        ShiftKind::Chessboard => chessboard_mean(p1, p2)?,
    };
    Ok(m)
}

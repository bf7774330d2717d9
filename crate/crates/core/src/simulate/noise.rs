//! Spatial covariances, matrix-normal draws and the exponential transform.

use alloc::format;
use alloc::vec::Vec;

use rand_core::RngCore;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{cholesky_spd, DenseMatrix};
use crate::math;

pub const DEFAULT_RHO: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "snake_case"))]
pub enum CovKind {
    TriDiagonal,
    Exponential,
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(rename_all = "snake_case", deny_unknown_fields)
)]
pub struct CovSpec {
    pub kind: CovKind,
    pub dim: usize,
    #[cfg_attr(feature = "serde", serde(default = "default_rho"))]
    pub rho: f64,
}

#[cfg(feature = "serde")]
fn default_rho() -> f64 {
    DEFAULT_RHO
}

impl CovSpec {
    pub fn new(kind: CovKind, dim: usize) -> Self {
        Self { kind, dim, rho: DEFAULT_RHO }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::invalid("covariance dimension must be positive"));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::invalid(format!("rho must lie in (0, 1), got {}", self.rho)));
        }
        if self.kind == CovKind::TriDiagonal && self.rho >= 0.5 {
            // eigenvalues 1 + 2 rho cos(k pi/(p+1)) must stay positive
            return Err(Error::invalid("tri-diagonal covariance needs rho < 0.5 to stay positive definite"));
        }
        Ok(())
    }
}

/// Tri-diagonal: 1 on the diagonal and `rho` beside it. Exponential:
/// `rho^|i-j|`. Identity: `I`.
pub fn make_cov(spec: &CovSpec) -> Result<DenseMatrix> {
    spec.validate()?;
    let n = spec.dim;
    let m = match spec.kind {
        CovKind::Identity => DenseMatrix::identity(n),
        CovKind::TriDiagonal => DenseMatrix::from_fn(n, n, |i, j| match i.abs_diff(j) {
            0 => 1.0,
            1 => spec.rho,
            _ => 0.0,
        }),
        CovKind::Exponential => {
            let powers: Vec<f64> = core::iter::successors(Some(1.0), |p| Some(p * spec.rho)).take(n).collect();
            DenseMatrix::from_fn(n, n, |i, j| powers[i.abs_diff(j)])
        }
    };
    Ok(m)
}

/// Cholesky factor of a covariance with the first nonzero column of each row
/// recorded so banded factors cost only their band.
#[derive(Debug, Clone, PartialEq)]
struct Factor {
    l: DenseMatrix,
    start: Vec<usize>,
    identity: bool,
}

impl Factor {
    fn new(l: DenseMatrix) -> Self {
        let n = l.rows();
        let start = (0..n).map(|i| (0..=i).find(|&k| l[(i, k)] != 0.0).unwrap_or(i)).collect();
        let identity = l == DenseMatrix::identity(n);
        Self { l, start, identity }
    }
}

/// Sampler for `MN(0, Sigma_row, Sigma_col)`: `L_row Z L_col^T` with `Z`
/// standard normal, filled row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixNormal {
    row: Factor,
    col: Factor,
}

impl MatrixNormal {
    pub fn new(row_chol: DenseMatrix, col_chol: DenseMatrix) -> Result<Self> {
        for (name, l) in [("row", &row_chol), ("column", &col_chol)] {
            if l.rows() != l.cols() {
                return Err(Error::invalid(format!("{name} factor is not square")));
            }
            if (0..l.rows()).any(|i| (i + 1..l.cols()).any(|j| l[(i, j)] != 0.0)) {
                return Err(Error::invalid(format!("{name} factor is not lower triangular")));
            }
        }
        Ok(Self { row: Factor::new(row_chol), col: Factor::new(col_chol) })
    }

    pub fn from_specs(row: &CovSpec, col: &CovSpec) -> Result<Self> {
        Self::new(cholesky_spd(&make_cov(row)?)?, cholesky_spd(&make_cov(col)?)?)
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.row.l.rows(), self.col.l.rows())
    }

    /// `L_row Z L_col^T` for a given `Z`.
    pub fn transform(&self, z: &DenseMatrix) -> Result<DenseMatrix> {
        let (p1, p2) = self.shape();
        if z.shape() != (p1, p2) {
            return Err(Error::invalid(format!("Z is {}x{}, expected {p1}x{p2}", z.rows(), z.cols())));
        }
        // W = Z L_col^T
        let w = if self.col.identity {
            z.clone()
        } else {
            let lc = &self.col.l;
            let mut w = DenseMatrix::zeros(p1, p2);
            for i in 0..p1 {
                let zr = z.row(i);
                let out = &mut w.data_mut()[i * p2..(i + 1) * p2];
                for (j, o) in out.iter_mut().enumerate() {
                    let s = self.col.start[j];
                    *o = zr[s..=j].iter().zip(&lc.row(j)[s..=j]).map(|(a, b)| a * b).sum();
                }
            }
            w
        };
        if self.row.identity {
            return Ok(w);
        }
        let lr = &self.row.l;
        let mut out = DenseMatrix::zeros(p1, p2);
        for i in 0..p1 {
            for k in self.row.start[i]..=i {
                let c = lr[(i, k)];
                if c == 0.0 {
                    continue;
                }
                let (src, dst) = (k * p2, i * p2);
                for j in 0..p2 {
                    let v = w.data()[src + j];
                    out.data_mut()[dst + j] += c * v;
                }
            }
        }
        Ok(out)
    }

    pub fn sample<R: RngCore>(&self, rng: &mut R) -> DenseMatrix {
        let (p1, p2) = self.shape();
        let z = DenseMatrix::from_fn(p1, p2, |_, _| StandardNormal.sample(rng));
        self.transform(&z).expect("Z has the sampler's shape")
    }
}

/// One matrix-normal draw from Cholesky factors of the row and column covariances.
pub fn sample_matrix_normal<R: RngCore>(
    row_chol: &DenseMatrix,
    col_chol: &DenseMatrix,
    rng: &mut R,
) -> Result<DenseMatrix> {
    Ok(MatrixNormal::new(row_chol.clone(), col_chol.clone())?.sample(rng))
}

/// `-ln(1 - Phi(x))`, the Exp(1) quantile of a standard-normal probability.
///
/// The upper tail is evaluated as `erfc` so the right tail keeps full precision;
/// once it underflows (about `x > 37.5`) it is clamped to the smallest normal
/// double, capping the output near 708.4. Outputs are clamped below at the
/// same value so they stay strictly positive.
pub fn exp_transform_scalar(x: f64) -> f64 {
    let v = if x < 0.0 {
        let cdf = 0.5 * libm::erfc(-x * core::f64::consts::FRAC_1_SQRT_2);
        -math::ln_1p(-cdf)
    } else {
        let tail = 0.5 * libm::erfc(x * core::f64::consts::FRAC_1_SQRT_2);
        -math::ln(tail.max(f64::MIN_POSITIVE))
    };
    v.max(f64::MIN_POSITIVE)
}

/// Elementwise [`exp_transform_scalar`].
pub fn exp_transform(eps_tilde: &DenseMatrix) -> Result<DenseMatrix> {
    if !eps_tilde.is_finite() {
        return Err(Error::invalid("exp transform input must be finite"));
    }
    let mut out = eps_tilde.clone();
    out.data_mut().iter_mut().for_each(|v| *v = exp_transform_scalar(*v));
    Ok(out)
}

use alloc::format;
use alloc::vec::Vec;

use super::DenseMatrix;
use crate::error::{Error, Result};
use crate::math;

const SYMMETRY_TOL: f64 = 1e-10;
const JITTER_START: f64 = 1e-12;
const JITTER_STOP: f64 = 1e-6;

/// Lower Cholesky factor together with the diagonal jitter that was needed.
#[derive(Debug, Clone, PartialEq)]
pub struct Cholesky {
    l: DenseMatrix,
    jitter: f64,
}

impl Cholesky {
    /// Factors `(S + S^T) / 2`. If a pivot fails, retries with diagonal jitter
    /// `1e-12 * tr(S)/p`, growing by 10x up to `1e-6 * tr(S)/p`.
    pub fn factor(s: &DenseMatrix) -> Result<Self> {
        let n = s.rows();
        let sym = symmetrized(s)?;

        let mut worst = match factor_plain(&sym, 0.0) {
            Ok(l) => return Ok(Self { l, jitter: 0.0 }),
            Err(fail) => fail,
        };
        let mean_diag = sym.trace() / n as f64;
        if mean_diag > 0.0 && mean_diag.is_finite() {
            let mut rel = JITTER_START;
            while rel <= JITTER_STOP * (1.0 + 1e-9) {
                let jitter = rel * mean_diag;
                match factor_plain(&sym, jitter) {
                    Ok(l) => return Ok(Self { l, jitter }),
                    Err(fail) => {
                        if fail.0 < worst.0 {
                            worst = fail;
                        }
                    }
                }
                rel *= 10.0;
            }
        }
        Err(Error::NotPositiveDefinite { pivot: worst.0, index: worst.1 })
    }

    /// Factors without any jitter; fails on the first non-positive pivot.
    pub fn factor_strict(s: &DenseMatrix) -> Result<Self> {
        let sym = symmetrized(s)?;
        factor_plain(&sym, 0.0)
            .map(|l| Self { l, jitter: 0.0 })
            .map_err(|(pivot, index)| Error::NotPositiveDefinite { pivot, index })
    }

    pub fn l(&self) -> &DenseMatrix {
        &self.l
    }

    pub fn into_l(self) -> DenseMatrix {
        self.l
    }

    /// Diagonal jitter added before factoring succeeded (0 if none).
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Smallest squared diagonal of `L`, i.e. the smallest pivot.
    pub fn min_pivot(&self) -> f64 {
        (0..self.l.rows()).map(|i| self.l[(i, i)] * self.l[(i, i)]).fold(f64::INFINITY, f64::min)
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        solve_spd(&self.l, b)
    }
}

fn symmetrized(s: &DenseMatrix) -> Result<DenseMatrix> {
    let n = s.rows();
    let asym =
        s.asymmetry().ok_or_else(|| Error::invalid(format!("cholesky of non-square {}x{} matrix", n, s.cols())))?;
    if asym > SYMMETRY_TOL * s.max_abs().max(1.0) {
        return Err(Error::invalid(format!("matrix is not symmetric (max asymmetry {asym:e})")));
    }
    Ok(DenseMatrix::from_fn(n, n, |i, j| 0.5 * (s[(i, j)] + s[(j, i)])))
}

/// Returns the failing pivot value and index on breakdown.
fn factor_plain(s: &DenseMatrix, jitter: f64) -> core::result::Result<DenseMatrix, (f64, usize)> {
    let n = s.rows();
    let mut l = DenseMatrix::zeros(n, n);
    for j in 0..n {
        let mut pivot = s[(j, j)] + jitter;
        for k in 0..j {
            pivot -= l[(j, k)] * l[(j, k)];
        }
        if !(pivot > 0.0) || !pivot.is_finite() {
            return Err((pivot, j));
        }
        let d = math::sqrt(pivot);
        l[(j, j)] = d;
        for i in (j + 1)..n {
            let mut acc = s[(i, j)];
            for k in 0..j {
                acc -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = acc / d;
        }
    }
    Ok(l)
}

/// Lower-triangular `L` with `L L^T = S` for symmetric positive definite `S`.
pub fn cholesky_spd(s: &DenseMatrix) -> Result<DenseMatrix> {
    Cholesky::factor(s).map(Cholesky::into_l)
}

/// Solves `L y = b` for lower-triangular `L`.
pub fn forward_substitute(l: &DenseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    check_dims(l, b)?;
    let n = b.len();
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let row = l.row(i);
        let acc: f64 = row[..i].iter().zip(&y).map(|(a, v)| a * v).sum();
        y.push((b[i] - acc) / row[i]);
    }
    Ok(y)
}

/// Solves `S x = b` given the Cholesky factor `L` of `S`.
pub fn solve_spd(chol: &DenseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    let mut x = forward_substitute(chol, b)?;
    let n = x.len();
    for i in (0..n).rev() {
        let mut acc = x[i];
        for k in (i + 1)..n {
            acc -= chol[(k, i)] * x[k];
        }
        x[i] = acc / chol[(i, i)];
    }
    Ok(x)
}

fn check_dims(l: &DenseMatrix, b: &[f64]) -> Result<()> {
    if l.rows() != l.cols() || l.rows() != b.len() {
        return Err(Error::invalid(format!(
            "triangular solve: factor {}x{} with right-hand side of length {}",
            l.rows(),
            l.cols(),
            b.len()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use rand_chacha::ChaCha8Rng;
    use rand_core::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_spd(n: usize, seed: u64) -> DenseMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DenseMatrix::from_fn(n, n, |_, _| StandardNormal.sample(&mut rng));
        a.transpose().matmul(&a).unwrap().add(&DenseMatrix::identity(n)).unwrap()
    }

    #[test]
    fn identity_and_hand_case() {
        assert_eq!(cholesky_spd(&DenseMatrix::identity(4)).unwrap(), DenseMatrix::identity(4));
        let s = DenseMatrix::from_rows(&[[4.0, 2.0], [2.0, 5.0]]).unwrap();
        let l = cholesky_spd(&s).unwrap();
        assert_eq!(l, DenseMatrix::from_rows(&[[2.0, 0.0], [1.0, 2.0]]).unwrap());
    }

    #[test]
    fn random_spd_reconstructs() {
        let s = random_spd(8, 3);
        let l = cholesky_spd(&s).unwrap();
        let r = l.matmul_transpose(&l).unwrap().sub(&s).unwrap().max_abs();
        assert!(r <= 1e-10, "{r}");
    }

    #[test]
    fn solves_hand_and_generated_systems() {
        let l = cholesky_spd(&DenseMatrix::identity(2)).unwrap();
        assert_eq!(solve_spd(&l, &[1.0, 2.0]).unwrap(), vec![1.0, 2.0]);

        let s = DenseMatrix::from_rows(&[[4.0, 2.0], [2.0, 5.0]]).unwrap();
        let x = solve_spd(&cholesky_spd(&s).unwrap(), &[6.0, 7.0]).unwrap();
        let back = s.mat_vec(&x).unwrap();
        assert!((back[0] - 6.0).abs() < 1e-14 && (back[1] - 7.0).abs() < 1e-14);

        let s = random_spd(10, 8);
        let xstar: Vec<f64> = (0..10).map(|i| i as f64 - 4.5).collect();
        let b = s.mat_vec(&xstar).unwrap();
        let x = solve_spd(&cholesky_spd(&s).unwrap(), &b).unwrap();
        for (a, e) in x.iter().zip(&xstar) {
            assert!((a - e).abs() <= 1e-8);
        }
        assert!(matches!(solve_spd(&cholesky_spd(&s).unwrap(), &[1.0]), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn singular_psd_is_rescued_by_jitter() {
        // rank one: [[1,1],[1,1]]
        let s = DenseMatrix::from_rows(&[[1.0, 1.0], [1.0, 1.0]]).unwrap();
        let c = Cholesky::factor(&s).unwrap();
        assert!(c.jitter() > 0.0 && c.jitter() <= 1e-6);
        assert!(c.min_pivot() < 1e-5);
    }

    #[test]
    fn indefinite_fails_with_pivot() {
        let s = DenseMatrix::from_rows(&[[1.0, 2.0], [2.0, 1.0]]).unwrap();
        match Cholesky::factor(&s) {
            Err(Error::NotPositiveDefinite { pivot, index }) => {
                assert_eq!(index, 1);
                assert!(pivot < 0.0);
            }
            other => panic!("unexpected {other:?}"),
        }
        let zero = DenseMatrix::zeros(3, 3);
        assert!(matches!(Cholesky::factor(&zero), Err(Error::NotPositiveDefinite { .. })));
    }

    #[test]
    fn asymmetric_input_rejected_but_rounding_tolerated() {
        let s = DenseMatrix::from_rows(&[[2.0, 1.0], [0.5, 2.0]]).unwrap();
        assert!(matches!(cholesky_spd(&s), Err(Error::InvalidInput(_))));
        let s = DenseMatrix::from_rows(&[[2.0, 1.0 + 1e-13], [1.0, 2.0]]).unwrap();
        assert!(cholesky_spd(&s).is_ok());
    }
}

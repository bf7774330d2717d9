//! Per-frame feature extraction: bilinear projections onto the in-control
//! singular directions (`beta`), leading singular values of the residual
//! (`gamma`), and the quadratic-form statistic that drives the CUSUM.

use alloc::format;
use alloc::vec::Vec;

use crate::calibration::InControlModel;
use crate::error::{Error, Result};
use crate::linalg::{self, DenseMatrix};

const ORTHONORMAL_TOL: f64 = 1e-10;

/// Leading singular triplets `(lambda_i, u_i, v_i)` of the in-control mean.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionBasis {
    lambda: Vec<f64>,
    u: DenseMatrix,
    v: DenseMatrix,
    u_cols: Vec<Vec<f64>>,
    v_cols: Vec<Vec<f64>>,
}

impl ProjectionBasis {
    pub fn new(lambda: Vec<f64>, u: DenseMatrix, v: DenseMatrix) -> Result<Self> {
        let r = lambda.len();
        if r == 0 {
            return Err(Error::invalid("projection basis needs rank >= 1"));
        }
        if u.cols() != r || v.cols() != r {
            return Err(Error::invalid(format!(
                "basis rank {r} but u has {} and v has {} columns",
                u.cols(),
                v.cols()
            )));
        }
        if lambda.iter().any(|&l| !(l > 0.0)) {
            return Err(Error::invalid("basis singular values must be strictly positive"));
        }
        if lambda.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::invalid("basis singular values must be descending"));
        }
        for (name, m) in [("u", &u), ("v", &v)] {
            let g = m.transpose().matmul(m)?;
            let err = g.sub(&DenseMatrix::identity(r))?.max_abs();
            if err > ORTHONORMAL_TOL {
                return Err(Error::invalid(format!("{name} columns are not orthonormal (error {err:e})")));
            }
        }
        let u_cols = (0..r).map(|i| u.column(i)).collect();
        let v_cols = (0..r).map(|i| v.column(i)).collect();
        Ok(Self { lambda, u, v, u_cols, v_cols })
    }

    pub fn rank(&self) -> usize {
        self.lambda.len()
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn u(&self) -> &DenseMatrix {
        &self.u
    }

    pub fn v(&self) -> &DenseMatrix {
        &self.v
    }

    /// Frame shape `(p1, p2)` the basis projects.
    pub fn frame_shape(&self) -> (usize, usize) {
        (self.u.rows(), self.v.rows())
    }
}

/// `y_t = [beta; gamma]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl FeatureVector {
    pub fn dim(&self) -> usize {
        self.beta.len() + self.gamma.len()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut y = Vec::with_capacity(self.dim());
        y.extend_from_slice(&self.beta);
        y.extend_from_slice(&self.gamma);
        y
    }
}

/// `beta_i = u_i^T X v_i` for every basis direction.
pub fn project_beta(x: &DenseMatrix, basis: &ProjectionBasis) -> Result<Vec<f64>> {
    if x.shape() != basis.frame_shape() {
        let (p1, p2) = basis.frame_shape();
        return Err(Error::invalid(format!("frame is {}x{} but the basis projects {p1}x{p2}", x.rows(), x.cols())));
    }
    basis.u_cols.iter().zip(&basis.v_cols).map(|(u, v)| x.bilinear(u, v)).collect()
}

pub fn residual(x: &DenseMatrix, m0: &DenseMatrix) -> Result<DenseMatrix> {
    x.sub(m0)
}

/// The `r` largest singular values of the residual, descending.
pub fn project_gamma(resid: &DenseMatrix, r: usize) -> Result<Vec<f64>> {
    linalg::top_singular_values(resid, r)
}

pub fn feature_vector(x: &DenseMatrix, model: &InControlModel) -> Result<FeatureVector> {
    let beta = project_beta(x, model.basis())?;
    let gamma = project_gamma(&residual(x, model.m0())?, model.rank())?;
    Ok(FeatureVector { beta, gamma })
}

/// `(y - mu0)^T Cov0^{-1} (y - mu0)`, evaluated as `|L^{-1}(y - mu0)|^2`.
pub fn t_statistic(y: &FeatureVector, mu0: &[f64], cov0_chol: &DenseMatrix) -> Result<f64> {
    quadratic_form(&y.to_vec(), mu0, cov0_chol)
}

/// Slice form of [`t_statistic`].
pub fn quadratic_form(y: &[f64], mu0: &[f64], cov0_chol: &DenseMatrix) -> Result<f64> {
    if y.len() != mu0.len() {
        return Err(Error::invalid(format!(
            "feature vector has length {} but the in-control mean has length {}",
            y.len(),
            mu0.len()
        )));
    }
    let dev: Vec<f64> = y.iter().zip(mu0).map(|(a, b)| a - b).collect();
    let z = linalg::forward_substitute(cov0_chol, &dev)?;
    Ok(z.iter().map(|v| v * v).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::build_model;
    use crate::linalg::{cholesky_spd, svd};
    use alloc::vec;
    use rand_chacha::ChaCha8Rng;
    use rand_core::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
        DenseMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
    }

    /// `M0 = 5 e1 f1^T + 2 e2 f2^T` on a 6x9 grid with non-axis directions.
    fn fixture_model() -> InControlModel {
        let a1: Vec<f64> = (0..6).map(|i| if i < 3 { 1.0 } else { 0.0 }).collect();
        let a2: Vec<f64> = (0..6).map(|i| if i < 3 { 0.0 } else { 1.0 }).collect();
        let b1: Vec<f64> = (0..9).map(|j| if j % 2 == 0 { 1.0 } else { 0.0 }).collect();
        let b2: Vec<f64> = (0..9).map(|j| if j % 2 == 1 { 1.0 } else { 0.0 }).collect();
        let m0 = DenseMatrix::from_fn(6, 9, |i, j| 2.0 * a1[i] * b1[j] + 0.5 * a2[i] * b2[j]);
        build_model(m0, 1.0).unwrap()
    }

    #[test]
    fn beta_at_the_mean_is_lambda() {
        let model = fixture_model();
        assert_eq!(model.rank(), 2);
        let beta = project_beta(model.m0(), model.basis()).unwrap();
        for (b, l) in beta.iter().zip(model.basis().lambda()) {
            assert!((b - l).abs() <= 1e-12);
        }
        let scaled = model.m0().scale(1.0 + 0.75);
        let beta = project_beta(&scaled, model.basis()).unwrap();
        for (b, l) in beta.iter().zip(model.basis().lambda()) {
            assert!((b - 1.75 * l).abs() <= 1e-12);
        }
    }

    #[test]
    fn beta_matches_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let model = fixture_model();
        let x = random(6, 9, &mut rng);
        let beta = project_beta(&x, model.basis()).unwrap();
        let (u, v) = (model.basis().u(), model.basis().v());
        for i in 0..2 {
            let mut acc = 0.0;
            for j1 in 0..6 {
                for j2 in 0..9 {
                    acc += u[(j1, i)] * x[(j1, j2)] * v[(j2, i)];
                }
            }
            assert!((acc - beta[i]).abs() < 1e-12);
        }
        assert!(project_beta(&random(9, 6, &mut rng), model.basis()).is_err());
    }

    #[test]
    fn residual_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m0 = random(4, 5, &mut rng);
        let a = random(4, 5, &mut rng);
        assert_eq!(residual(&m0, &m0).unwrap(), DenseMatrix::zeros(4, 5));
        let x = m0.add(&a).unwrap();
        let r = residual(&x, &m0).unwrap();
        for i in 0..4 {
            for j in 0..5 {
                assert_eq!(r[(i, j)], x[(i, j)] - m0[(i, j)]);
            }
        }
        assert!(r.sub(&a).unwrap().max_abs() < 1e-14);
        assert!(residual(&m0, &random(5, 4, &mut rng)).is_err());
    }

    #[test]
    fn gamma_cases() {
        assert_eq!(project_gamma(&DenseMatrix::zeros(4, 6), 3).unwrap(), vec![0.0; 3]);
        let mut single = DenseMatrix::zeros(4, 6);
        single[(0, 0)] = 7.0;
        assert!((project_gamma(&single, 1).unwrap()[0] - 7.0).abs() < 1e-13);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let r = random(10, 16, &mut rng);
        let full = svd(&r, 10).unwrap();
        let g = project_gamma(&r, 4).unwrap();
        for (gi, si) in g.iter().zip(&full.s) {
            assert!((gi - si).abs() < 1e-10);
        }
    }

    #[test]
    fn feature_vector_composition() {
        let model = fixture_model();
        let y = feature_vector(model.m0(), &model).unwrap();
        assert!(y.gamma.iter().all(|&g| g.abs() < 1e-12));
        assert_eq!(y.dim(), 4);

        // A built from directions orthogonal to both u-span and v-span
        let u_perp: Vec<f64> = vec![1.0, -1.0, 0.0, 0.0, 0.0, 0.0];
        let v_perp: Vec<f64> = vec![1.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let a = DenseMatrix::from_fn(6, 9, |i, j| 3.0 * u_perp[i] * v_perp[j]);
        let x = model.m0().add(&a).unwrap();
        let y = feature_vector(&x, &model).unwrap();
        for (b, l) in y.beta.iter().zip(model.basis().lambda()) {
            assert!((b - l).abs() < 1e-12);
        }
        let a_sv = svd(&a, 2).unwrap().s;
        assert!((y.gamma[0] - a_sv[0]).abs() < 1e-12);
        assert!((y.gamma[0] - 6.0).abs() < 1e-12);
        assert!(y.gamma[1].abs() < 1e-6);
    }

    #[test]
    fn t_statistic_cases() {
        let chol = cholesky_spd(&DenseMatrix::identity(2)).unwrap();
        let y = FeatureVector { beta: vec![4.0], gamma: vec![6.0] };
        assert_eq!(t_statistic(&y, &[4.0, 6.0], &chol).unwrap(), 0.0);
        assert_eq!(t_statistic(&y, &[1.0, 2.0], &chol).unwrap(), 25.0);
        assert!(t_statistic(&y, &[1.0], &chol).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let a = random(6, 6, &mut rng);
        let s = a.transpose().matmul(&a).unwrap().add(&DenseMatrix::identity(6)).unwrap();
        let inv = nalgebra::DMatrix::from_row_slice(6, 6, s.data()).try_inverse().unwrap();
        let y = FeatureVector {
            beta: (0..3).map(|_| StandardNormal.sample(&mut rng)).collect(),
            gamma: (0..3).map(|_| StandardNormal.sample(&mut rng)).collect(),
        };
        let mu: Vec<f64> = (0..6).map(|_| StandardNormal.sample(&mut rng)).collect();
        let d = nalgebra::DVector::from_iterator(6, y.to_vec().iter().zip(&mu).map(|(a, b)| a - b));
        let oracle = (d.transpose() * &inv * &d)[(0, 0)];
        let got = t_statistic(&y, &mu, &cholesky_spd(&s).unwrap()).unwrap();
        assert!((got - oracle).abs() <= 1e-8 * (1.0 + oracle));
    }
}

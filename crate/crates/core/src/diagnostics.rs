//! Closed-form run-length approximations and the decomposition of the
//! out-of-control mean shift of `T_t` into covariance and mean components.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{dot, forward_substitute, Cholesky, DenseMatrix};
use crate::math;

/// Inputs to the Brownian-motion ARL approximation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArlInputs {
    pub h: f64,
    /// Net drift `E[T] - E0[T] - c sigma_T` of the CUSUM increments.
    pub d_t: f64,
    pub omega_sq: f64,
}

impl ArlInputs {
    pub fn new(h: f64, d_t: f64, omega_sq: f64) -> Result<Self> {
        if !(h > 0.0) || !(omega_sq > 0.0) || !omega_sq.is_finite() || !d_t.is_finite() || h.is_nan() {
            return Err(Error::invalid(format!(
                "ARL inputs need h > 0, omega^2 > 0 and finite drift (got h={h}, d={d_t}, omega^2={omega_sq})"
            )));
        }
        Ok(Self { h, d_t, omega_sq })
    }
}

/// Expected run length of a reflected Brownian motion with drift `d` and
/// variance `Omega^2` to reach `H`: `H^2/Omega^2` when `d = 0`, otherwise
/// `Omega^2/(2 d^2) * (exp(-2 H d/Omega^2) - 1 + 2 H d/Omega^2)`.
///
/// Drifts with `|d| H / Omega^2 < 1e-12` use the driftless branch. Overflow
/// yields `+inf`.
pub fn arl_approx(inp: ArlInputs) -> f64 {
    let ArlInputs { h, d_t: d, omega_sq } = inp;
    if d.abs() * h / omega_sq < 1e-12 {
        return h * h / omega_sq;
    }
    omega_sq / (2.0 * d * d) * math::exp_excess(-2.0 * h * d / omega_sq)
}

/// Out-of-control ARL when `Omega_1^2` dominates the drift: `2 H^2 / Omega_1^2`.
///
/// This is the customary second-order expansion. The exact small-drift limit
/// of [`arl_approx`] is `H^2 / Omega^2`, so this overstates it by a factor of 2.
pub fn arl1_large_omega_approx(h: f64, omega1_sq: f64) -> f64 {
    2.0 * h * h / omega1_sq
}

/// Block structure of the in-control and out-of-control feature covariances
/// `Sigma = [[Sb, P], [P^T, Sg]]` and `Sigma~ = [[Sb, P~], [P~^T, Sg~]]`, with
/// the mean shift `delta = [delta_beta; delta_gamma]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockCov {
    pub sigma_beta: DenseMatrix,
    pub p: DenseMatrix,
    pub sigma_gamma: DenseMatrix,
    pub p_tilde: DenseMatrix,
    pub sigma_gamma_tilde: DenseMatrix,
    pub delta_beta: Vec<f64>,
    pub delta_gamma: Vec<f64>,
}

impl BlockCov {
    /// Splits two `2r x 2r` covariances. The beta block of `sigma_tilde` is
    /// ignored: the shift leaves `Cov(beta)` unchanged.
    pub fn from_covariances(sigma: &DenseMatrix, sigma_tilde: &DenseMatrix, delta: &[f64]) -> Result<Self> {
        let k = delta.len();
        if k == 0 || k % 2 != 0 || sigma.shape() != (k, k) || sigma_tilde.shape() != (k, k) {
            return Err(Error::invalid("covariances must be 2r x 2r matching the shift length"));
        }
        let r = k / 2;
        let block = |m: &DenseMatrix, i0: usize, j0: usize| DenseMatrix::from_fn(r, r, |i, j| m[(i0 + i, j0 + j)]);
        Ok(Self {
            sigma_beta: block(sigma, 0, 0),
            p: block(sigma, 0, r),
            sigma_gamma: block(sigma, r, r),
            p_tilde: block(sigma_tilde, 0, r),
            sigma_gamma_tilde: block(sigma_tilde, r, r),
            delta_beta: delta[..r].to_vec(),
            delta_gamma: delta[r..].to_vec(),
        })
    }

    pub fn rank(&self) -> usize {
        self.sigma_beta.rows()
    }

    pub fn sigma(&self) -> DenseMatrix {
        assemble(&self.sigma_beta, &self.p, &self.sigma_gamma)
    }

    pub fn sigma_tilde(&self) -> DenseMatrix {
        assemble(&self.sigma_beta, &self.p_tilde, &self.sigma_gamma_tilde)
    }

    pub fn delta(&self) -> Vec<f64> {
        let mut d = self.delta_beta.clone();
        d.extend_from_slice(&self.delta_gamma);
        d
    }

    fn validate(&self) -> Result<()> {
        let r = self.rank();
        let square = [&self.sigma_beta, &self.p, &self.sigma_gamma, &self.p_tilde, &self.sigma_gamma_tilde];
        if r == 0 || square.iter().any(|m| m.shape() != (r, r)) {
            return Err(Error::invalid("all covariance blocks must be r x r"));
        }
        if self.delta_beta.len() != r || self.delta_gamma.len() != r {
            return Err(Error::invalid("shift blocks must have length r"));
        }
        if self.delta_beta.iter().chain(&self.delta_gamma).any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite shift"));
        }
        Ok(())
    }
}

fn assemble(b: &DenseMatrix, p: &DenseMatrix, g: &DenseMatrix) -> DenseMatrix {
    let r = b.rows();
    DenseMatrix::from_fn(2 * r, 2 * r, |i, j| match (i < r, j < r) {
        (true, true) => b[(i, j)],
        (true, false) => p[(i, j - r)],
        (false, true) => p[(j, i - r)],
        (false, false) => g[(i - r, j - r)],
    })
}

/// `L^{-1} B`, column by column.
fn lower_solve(l: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    let mut out = DenseMatrix::zeros(b.rows(), b.cols());
    for j in 0..b.cols() {
        let x = forward_substitute(l, &b.column(j))?;
        for (i, v) in x.into_iter().enumerate() {
            out[(i, j)] = v;
        }
    }
    Ok(out)
}

/// `(Delta1, Delta2, Delta3)` with
/// `Delta1 = tr(S^{-1} S~) - r`, `Delta2 = tr(S^{-1} (P - P~)^T Sb^{-1} (P - P~))`,
/// `Delta3 = |Lb^{-1} db|^2 + |Ls^{-1} (dg - P^T Sb^{-1} db)|^2`,
/// where `S = Sg - P^T Sb^{-1} P` and `S~ = Sg~ - P~^T Sb^{-1} P~` are the
/// Schur complements. Their sum equals `tr(Sigma^{-1} Sigma~) + delta^T Sigma^{-1} delta - 2r`.
pub fn delta_decomposition(bc: &BlockCov) -> Result<(f64, f64, f64)> {
    bc.validate()?;
    let r = bc.rank();
    let lb = Cholesky::factor_strict(&bc.sigma_beta)?.into_l();

    let w = lower_solve(&lb, &bc.p)?;
    let w_tilde = lower_solve(&lb, &bc.p_tilde)?;
    let schur = bc.sigma_gamma.sub(&w.transpose().matmul(&w)?)?;
    let schur_tilde = bc.sigma_gamma_tilde.sub(&w_tilde.transpose().matmul(&w_tilde)?)?;
    let ls = Cholesky::factor_strict(&schur)?.into_l();
    Cholesky::factor_strict(&schur_tilde)?;

    // tr(S^{-1} S~) = tr(Ls^{-1} S~ Ls^{-T})
    let y = lower_solve(&ls, &schur_tilde)?;
    let z = lower_solve(&ls, &y.transpose())?;
    let delta1 = z.trace() - r as f64;

    let dq = w.sub(&w_tilde)?;
    let delta2 = lower_solve(&ls, &dq.transpose())?.data().iter().map(|v| v * v).sum::<f64>();

    let a = forward_substitute(&lb, &bc.delta_beta)?;
    let wa = w.transpose().mat_vec(&a)?;
    let rest: Vec<f64> = bc.delta_gamma.iter().zip(&wa).map(|(g, c)| g - c).collect();
    let b = forward_substitute(&ls, &rest)?;
    let delta3 = dot(&a, &a) + dot(&b, &b);

    Ok((delta1, delta2, delta3))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::solve_spd;
    use alloc::vec;
    use rand_chacha::ChaCha8Rng;
    use rand_core::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_spd(n: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
        let a = DenseMatrix::from_fn(n, n, |_, _| StandardNormal.sample(rng));
        a.transpose().matmul(&a).unwrap().add(&DenseMatrix::identity(n).scale(0.5)).unwrap()
    }

    fn random_vec(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..n).map(|_| StandardNormal.sample(rng)).collect()
    }

    // explicit 2r x 2r evaluation through full solves
    fn direct(bc: &BlockCov) -> f64 {
        let sigma = bc.sigma();
        let tilde = bc.sigma_tilde();
        let k = sigma.rows();
        let l = Cholesky::factor_strict(&sigma).unwrap().into_l();
        let mut tr = 0.0;
        for j in 0..k {
            tr += solve_spd(&l, &tilde.column(j)).unwrap()[j];
        }
        let d = bc.delta();
        tr + dot(&d, &solve_spd(&l, &d).unwrap()) - k as f64
    }

    fn random_instance(r: usize, rng: &mut ChaCha8Rng) -> BlockCov {
        let sigma = random_spd(2 * r, rng);
        // gamma block P~^T Sb^{-1} P~ + SPD keeps the tilde matrix positive definite
        let lb = Cholesky::factor_strict(&DenseMatrix::from_fn(r, r, |i, j| sigma[(i, j)])).unwrap().into_l();
        let p = DenseMatrix::from_fn(r, r, |_, _| StandardNormal.sample(rng));
        let inner = random_spd(r, rng);
        let solved: Vec<Vec<f64>> = (0..r).map(|j| solve_spd(&lb, &p.column(j)).unwrap()).collect();
        let tilde = assemble(
            &DenseMatrix::from_fn(r, r, |i, j| sigma[(i, j)]),
            &p,
            &DenseMatrix::from_fn(r, r, |i, j| dot(&p.column(i), &solved[j]) + inner[(i, j)]),
        );
        let delta = random_vec(2 * r, rng);
        BlockCov::from_covariances(&sigma, &tilde, &delta).unwrap()
    }

    #[test]
    fn driftless_branch() {
        assert_eq!(arl_approx(ArlInputs::new(10.0, 0.0, 4.0).unwrap()), 25.0);
        let near = arl_approx(ArlInputs::new(10.0, 1e-9, 4.0).unwrap());
        assert!((near / 25.0 - 1.0).abs() < 1e-6);
        let near = arl_approx(ArlInputs::new(10.0, -1e-9, 4.0).unwrap());
        assert!((near / 25.0 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn arl_reference_value() {
        // 50-digit evaluation of the closed form
        let v = arl_approx(ArlInputs::new(20.0, 0.5, 9.0).unwrap());
        assert!((v - 23.950_624_417_994_126).abs() <= 1e-12 * v, "{v}");
    }

    #[test]
    fn arl_growth_regimes() {
        let (d, w) = (0.3, 2.0);
        for h in [20.0, 40.0, 80.0] {
            let neg1 = arl_approx(ArlInputs::new(h, -d, w).unwrap());
            let neg2 = arl_approx(ArlInputs::new(2.0 * h, -d, w).unwrap());
            assert!(neg2 / neg1 > 2.0);
            let pos1 = arl_approx(ArlInputs::new(h, d, w).unwrap());
            let pos2 = arl_approx(ArlInputs::new(2.0 * h, d, w).unwrap());
            // linear plus constant: 2 arl(h) - arl(2h) -> omega^2 / (2 d^2)
            assert!((pos2 - 2.0 * pos1).abs() <= w / (2.0 * d * d) + 1e-9);
        }
        assert!(arl_approx(ArlInputs::new(1e6, -10.0, 1.0).unwrap()).is_infinite());
        assert!(ArlInputs::new(0.0, 1.0, 1.0).is_err());
        assert!(ArlInputs::new(1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn large_omega_arl1() {
        assert_eq!(arl1_large_omega_approx(10.0, 4.0), 50.0);
        assert_eq!(arl1_large_omega_approx(10.0, 2.0), 2.0 * arl1_large_omega_approx(10.0, 4.0));
        for h in [5.0, 10.0, 30.0] {
            for d in [0.01, 0.05, 0.2] {
                let omega_sq = 2.0 * h * d / 0.05;
                let exact = arl_approx(ArlInputs::new(h, d, omega_sq).unwrap());
                let approx = arl1_large_omega_approx(h, omega_sq);
                // the closed form tends to H^2/Omega^2, half of the expansion
                assert!((2.0 * exact / approx - 1.0).abs() < 0.1, "{h} {d}");
            }
        }
    }

    #[test]
    fn null_shift_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let sigma = random_spd(4, &mut rng);
        let bc = BlockCov::from_covariances(&sigma, &sigma, &[0.0; 4]).unwrap();
        let (d1, d2, d3) = delta_decomposition(&bc).unwrap();
        assert!(d1.abs() < 1e-12 && d2.abs() < 1e-12 && d3 == 0.0);
    }

    #[test]
    fn identity_reduction() {
        let r = 3;
        let i = DenseMatrix::identity(r);
        let bc = BlockCov {
            sigma_beta: i.clone(),
            p: DenseMatrix::zeros(r, r),
            sigma_gamma: i.clone(),
            p_tilde: DenseMatrix::zeros(r, r),
            sigma_gamma_tilde: i,
            delta_beta: vec![0.0; r],
            delta_gamma: vec![3.0, 4.0, 0.0],
        };
        assert_eq!(delta_decomposition(&bc).unwrap(), (0.0, 0.0, 25.0));
    }

    #[test]
    fn matches_direct_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for r in 1..=5 {
            for _ in 0..10 {
                let bc = random_instance(r, &mut rng);
                let (d1, d2, d3) = delta_decomposition(&bc).unwrap();
                let want = direct(&bc);
                assert!(d2 >= 0.0 && d3 >= 0.0);
                assert!((d1 + d2 + d3 - want).abs() <= 1e-9 * want.abs().max(1.0), "r={r}: {} vs {want}", d1 + d2 + d3);
            }
        }
    }

    #[test]
    fn rejects_indefinite_schur() {
        let i = DenseMatrix::identity(1);
        let bc = BlockCov {
            sigma_beta: i.clone(),
            p: DenseMatrix::from_rows(&[[2.0]]).unwrap(),
            sigma_gamma: i.clone(),
            p_tilde: DenseMatrix::zeros(1, 1),
            sigma_gamma_tilde: i,
            delta_beta: vec![0.0],
            delta_gamma: vec![0.0],
        };
        assert!(matches!(delta_decomposition(&bc), Err(Error::NotPositiveDefinite { .. })));
    }
}

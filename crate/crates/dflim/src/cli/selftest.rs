//! Small hand-checkable examples run by `dflim selftest`.

use dflim_core::calibration::{build_model, estimate_mean, estimate_moments, select_rank, sigma_t_hat, InControlModel};
use dflim_core::cusum::{run_statistics, step, MonitorConfig, MonitorState};
use dflim_core::features::{feature_vector, project_beta, project_gamma, residual, t_statistic, FeatureVector};
use dflim_core::linalg::{cholesky_spd, forward_substitute, std_normal_cdf, top_singular_values, DenseMatrix};

type Check = (&'static str, fn() -> bool);

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

fn all_close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| close(*x, *y, tol))
}

fn outer(a: &[f64], b: &[f64]) -> DenseMatrix {
    DenseMatrix::from_fn(a.len(), b.len(), |i, j| a[i] * b[j])
}

fn rank1_model() -> InControlModel {
    build_model(outer(&[1.2, 1.6, 0.0], &[0.0, 3.0, 0.0, 0.0]), 0.9).expect("rank-1 model")
}

fn svd_identity() -> bool {
    top_singular_values(&DenseMatrix::identity(3), 3).is_ok_and(|s| all_close(&s, &[1.0; 3], 1e-12))
}

fn svd_rank1() -> bool {
    top_singular_values(&outer(&[1.2, 1.6], &[0.0, 3.0, 0.0]), 1).is_ok_and(|s| close(s[0], 6.0, 1e-12))
}

fn chol_identity() -> bool {
    cholesky_spd(&DenseMatrix::identity(3)).is_ok_and(|l| l == DenseMatrix::identity(3))
}

fn chol_2x2() -> bool {
    let s = DenseMatrix::from_rows(&[[4.0, 2.0], [2.0, 5.0]]).unwrap();
    cholesky_spd(&s).is_ok_and(|l| all_close(l.data(), &[2.0, 0.0, 1.0, 2.0], 1e-12))
}

fn forward_identity() -> bool {
    forward_substitute(&DenseMatrix::identity(2), &[1.0, 2.0]).is_ok_and(|x| x == [1.0, 2.0])
}

fn phi_zero() -> bool {
    std_normal_cdf(0.0) == 0.5
}

fn phi_symmetry() -> bool {
    [0.3, 1.0, 2.7, 5.0].iter().all(|&x| close(std_normal_cdf(x) + std_normal_cdf(-x), 1.0, 1e-14))
}

fn beta_at_mean() -> bool {
    let m = rank1_model();
    project_beta(m.m0(), m.basis()).is_ok_and(|b| all_close(&b, m.basis().lambda(), 1e-10))
}

fn beta_linear() -> bool {
    let m = rank1_model();
    let x = m.m0().scale(1.5);
    project_beta(&x, m.basis()).is_ok_and(|b| close(b[0], 1.5 * m.basis().lambda()[0], 1e-10))
}

fn residual_zero() -> bool {
    let m = rank1_model();
    residual(m.m0(), m.m0()).is_ok_and(|r| r.max_abs() == 0.0)
}

fn residual_shift() -> bool {
    let m = rank1_model();
    let a = outer(&[0.0, 1.0, 0.0], &[2.0, 0.0, 0.0, 1.0]);
    let x = m.m0().add(&a).unwrap();
    residual(&x, m.m0()).is_ok_and(|r| all_close(r.data(), a.data(), 1e-12))
}

fn gamma_zero() -> bool {
    project_gamma(&DenseMatrix::zeros(3, 4), 2).is_ok_and(|g| g == [0.0, 0.0])
}

fn gamma_single_entry() -> bool {
    let mut r = DenseMatrix::zeros(3, 4);
    r.data_mut()[0] = 7.0;
    project_gamma(&r, 1).is_ok_and(|g| close(g[0], 7.0, 1e-12))
}

fn features_at_mean() -> bool {
    let m = rank1_model();
    feature_vector(m.m0(), &m)
        .is_ok_and(|y| all_close(&y.beta, m.basis().lambda(), 1e-10) && y.gamma.iter().all(|g| g.abs() <= 1e-10))
}

fn t_at_mean() -> bool {
    let y = FeatureVector { beta: vec![1.0], gamma: vec![2.0] };
    t_statistic(&y, &[1.0, 2.0], &DenseMatrix::identity(2)).is_ok_and(|t| t == 0.0)
}

fn t_euclidean() -> bool {
    let y = FeatureVector { beta: vec![3.0], gamma: vec![4.0] };
    t_statistic(&y, &[0.0, 0.0], &DenseMatrix::identity(2)).is_ok_and(|t| close(t, 25.0, 1e-12))
}

fn step_zero_increment() -> bool {
    let c = MonitorConfig::new(4.0, 10.0).unwrap();
    step(MonitorState::default(), 4.0, &c).is_ok_and(|(s, a)| s.s == 0.0 && a.is_none())
}

fn step_clamped() -> bool {
    let c = MonitorConfig::new(4.0, 10.0).unwrap();
    step(MonitorState::default(), -1.0, &c).is_ok_and(|(s, a)| s.s == 0.0 && a.is_none())
}

fn run_one_step_crossing() -> bool {
    let c = MonitorConfig::new(4.0, 10.0).unwrap();
    run_statistics([14.0], &c).is_ok_and(|a| a.map(|e| e.time) == Some(1))
}

fn run_huge_limit() -> bool {
    let c = MonitorConfig::new(4.0, 1e300).unwrap();
    run_statistics([5.0; 50], &c).is_ok_and(|a| a.is_none())
}

fn mean_single() -> bool {
    let m = outer(&[1.0, 2.0], &[3.0, 4.0]);
    estimate_mean(std::slice::from_ref(&m)).is_ok_and(|x| x == m)
}

fn mean_symmetric() -> bool {
    let m = outer(&[1.0, 2.0], &[3.0, 4.0]);
    estimate_mean(&[m.clone(), m.scale(-1.0)]).is_ok_and(|x| x.max_abs() == 0.0)
}

fn rank_one_nonzero() -> bool {
    [0.1, 0.5, 1.0].iter().all(|&q| select_rank(&[5.0, 0.0, 0.0], q).is_ok_and(|r| r == 1))
}

fn rank_full_energy() -> bool {
    select_rank(&[3.0, 2.0, 1.0, 0.0], 1.0).is_ok_and(|r| r == 3)
}

fn model_rank1() -> bool {
    let m = rank1_model();
    m.rank() == 1 && close(m.basis().lambda()[0], 6.0, 1e-12)
}

fn moments_identical() -> bool {
    let y = FeatureVector { beta: vec![1.0], gamma: vec![2.0] };
    estimate_moments(&[y.clone(), y.clone(), y]).is_ok_and(|(_, c)| c.max_abs() == 0.0)
}

fn moments_two_point() -> bool {
    let a = FeatureVector { beta: vec![0.0], gamma: vec![0.0] };
    let b = FeatureVector { beta: vec![2.0], gamma: vec![0.0] };
    estimate_moments(&[a, b]).is_ok_and(|(mu, c)| mu == [1.0, 0.0] && c.data() == [2.0, 0.0, 0.0, 0.0])
}

fn sigma_two_point() -> bool {
    sigma_t_hat(&[0.0, 2.0]).is_ok_and(|s| close(s, 2f64.sqrt(), 1e-15))
}

fn sigma_constant() -> bool {
    sigma_t_hat(&[1.0, 1.0, 1.0]).is_err()
}

pub const CHECKS: &[Check] = &[
    ("svd/identity", svd_identity),
    ("svd/rank-one-norm-product", svd_rank1),
    ("cholesky/identity", chol_identity),
    ("cholesky/two-by-two", chol_2x2),
    ("forward-solve/identity", forward_identity),
    ("normal-cdf/zero", phi_zero),
    ("normal-cdf/symmetry", phi_symmetry),
    ("beta/at-mean", beta_at_mean),
    ("beta/linearity", beta_linear),
    ("residual/at-mean", residual_zero),
    ("residual/shift", residual_shift),
    ("gamma/zero-residual", gamma_zero),
    ("gamma/single-entry", gamma_single_entry),
    ("features/at-mean", features_at_mean),
    ("t-statistic/at-mean", t_at_mean),
    ("t-statistic/euclidean", t_euclidean),
    ("cusum/zero-increment", step_zero_increment),
    ("cusum/clamped", step_clamped),
    ("cusum/one-step-crossing", run_one_step_crossing),
    ("cusum/huge-limit", run_huge_limit),
    ("mean/single-frame", mean_single),
    ("mean/symmetric-pair", mean_symmetric),
    ("rank/one-nonzero", rank_one_nonzero),
    ("rank/full-energy", rank_full_energy),
    ("model/rank-one", model_rank1),
    ("moments/identical", moments_identical),
    ("moments/two-point", moments_two_point),
    ("sigma-t/two-point", sigma_two_point),
    ("sigma-t/constant", sigma_constant),
];

pub fn run_all() -> Vec<(&'static str, bool)> {
    CHECKS.iter().map(|(name, f)| (*name, std::panic::catch_unwind(f).unwrap_or(false))).collect()
}

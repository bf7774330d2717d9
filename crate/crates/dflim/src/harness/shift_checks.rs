use dflim_core::calibration::{build_model, estimate_moments, DEFAULT_Q};
use dflim_core::diagnostics::{delta_decomposition, BlockCov};
use dflim_core::features::{feature_vector, quadratic_form, FeatureVector};
use dflim_core::linalg::{dot, solve_spd, svd, Cholesky};
use dflim_core::simulate::PreparedScenario;
use rayon::prelude::*;
use serde::Serialize;

use super::arl::mean_and_se;

const IN_CONTROL_REPLICATION: u64 = u64::MAX - 1;
const SHIFTED_REPLICATION: u64 = u64::MAX - 2;

/// An estimated shift against its predicted value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ShiftCheck {
    pub estimate: f64,
    pub std_err: f64,
    pub predicted: f64,
}

impl ShiftCheck {
    /// `|estimate - predicted| <= k * std_err`.
    pub fn within_se(&self, k: f64) -> bool {
        (self.estimate - self.predicted).abs() <= k * self.std_err
    }

    pub fn relative_error(&self) -> f64 {
        (self.estimate - self.predicted).abs() / self.predicted.abs()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShiftReport {
    pub n_draws: usize,
    pub rank: usize,
    /// `mean(beta_i) - lambda_i` under the shift against `u_i^T A v_i`.
    pub beta_shift: Vec<ShiftCheck>,
    /// `(mean_1(gamma_i) - mean_0(gamma_i)) / sqrt(p1 p2)` against the i-th
    /// singular value of `A` over `sqrt(p1 p2)`.
    pub gamma_shift: Vec<ShiftCheck>,
    /// Decomposition of the `T` shift from sample moments of both draw sets,
    /// with the shifted beta block taken equal to the in-control one. `None`
    /// when the shifted Schur complement is not positive definite, which
    /// happens once beta and gamma become almost collinear.
    pub delta: Option<(f64, f64, f64)>,
    pub delta_error: Option<String>,
    /// `mean_1(T) - mean_0(T)` with `T` standardised by the in-control sample
    /// moments, against `tr(S0^{-1} S1) + d^T S0^{-1} d - 2r` from the full
    /// sample covariances.
    pub t_shift: ShiftCheck,
}

/// Draws `n_draws` independent in-control frames `M0 + eps` and as many
/// shifted frames `M0 + A + eps` (no temporal mixing), using the scenario's
/// background, shift and spatial noise, and compares feature shifts with the
/// closed-form predictions.
pub fn empirical_shift_checks(scenario: &PreparedScenario, n_draws: usize) -> dflim_core::Result<ShiftReport> {
    if n_draws < 8 {
        return Err(dflim_core::Error::InsufficientData { needed: 8, got: n_draws });
    }
    let model = build_model(scenario.m0().clone(), DEFAULT_Q)?;
    let r = model.rank();
    let a = scenario.shift();

    let draw = |replication: u64, shifted: bool| -> dflim_core::Result<Vec<FeatureVector>> {
        (0..n_draws as u64)
            .into_par_iter()
            .map(|i| {
                let mut x = scenario.m0().clone();
                if shifted {
                    x.add_scaled_assign(1.0, a)?;
                }
                x.add_scaled_assign(1.0, &scenario.noise(replication, i))?;
                feature_vector(&x, &model)
            })
            .collect()
    };
    let y0 = draw(IN_CONTROL_REPLICATION, false)?;
    let y1 = draw(SHIFTED_REPLICATION, true)?;

    let basis = model.basis();
    let mut beta_shift = Vec::with_capacity(r);
    for i in 0..r {
        let vals: Vec<f64> = y1.iter().map(|y| y.beta[i] - basis.lambda()[i]).collect();
        let (mean, se) = mean_and_se(&vals);
        let predicted = a.bilinear(&basis.u().column(i), &basis.v().column(i))?;
        beta_shift.push(ShiftCheck { estimate: mean, std_err: se, predicted });
    }

    let (p1, p2) = scenario.m0().shape();
    let norm = ((p1 * p2) as f64).sqrt();
    let rho = svd(a, r.min(p1.min(p2)))?.s;
    let mut gamma_shift = Vec::with_capacity(r);
    for (i, rho_i) in rho.iter().enumerate().take(r) {
        let g1: Vec<f64> = y1.iter().map(|y| y.gamma[i]).collect();
        let g0: Vec<f64> = y0.iter().map(|y| y.gamma[i]).collect();
        let (m1, s1) = mean_and_se(&g1);
        let (m0, s0) = mean_and_se(&g0);
        gamma_shift.push(ShiftCheck {
            estimate: (m1 - m0) / norm,
            std_err: s1.hypot(s0) / norm,
            predicted: rho_i / norm,
        });
    }

    let (mu0, cov0) = estimate_moments(&y0)?;
    let (mu1, cov1) = estimate_moments(&y1)?;
    let delta: Vec<f64> = mu1.iter().zip(&mu0).map(|(a, b)| a - b).collect();
    let bc = BlockCov::from_covariances(&cov0, &cov1, &delta)?;
    let (decomposition, delta_error) = match delta_decomposition(&bc) {
        Ok(d) => (Some(d), None),
        Err(e) => (None, Some(e.to_string())),
    };

    let chol = Cholesky::factor(&cov0)?.into_l();
    let mut predicted = dot(&delta, &solve_spd(&chol, &delta)?) - (2 * r) as f64;
    for j in 0..2 * r {
        predicted += solve_spd(&chol, &cov1.column(j))?[j];
    }
    let t_of = |ys: &[FeatureVector]| -> dflim_core::Result<Vec<f64>> {
        ys.iter().map(|y| quadratic_form(&y.to_vec(), &mu0, &chol)).collect()
    };
    let (t1, t1_se) = mean_and_se(&t_of(&y1)?);
    let (t0, t0_se) = mean_and_se(&t_of(&y0)?);
    let t_shift = ShiftCheck { estimate: t1 - t0, std_err: t1_se.hypot(t0_se), predicted };

    Ok(ShiftReport { n_draws, rank: r, beta_shift, gamma_shift, delta: decomposition, delta_error, t_shift })
}

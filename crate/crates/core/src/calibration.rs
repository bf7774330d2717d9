//! Setup phase: in-control mean and rank, projection basis, feature moments,
//! marginal and long-run variance of the statistic, and the control limit.

use alloc::boxed::Box;
use alloc::format;
use alloc::vec::Vec;
use core::fmt;

use crate::cusum::MonitorConfig;
use crate::error::{Error, Result};
use crate::features::{feature_vector, quadratic_form, FeatureVector, ProjectionBasis};
use crate::linalg::{svd, Cholesky, DenseMatrix};
use crate::math;

/// Siegmund's overshoot correction, added to `H` in units of `Omega0`.
pub const SIEGMUND_CORRECTION: f64 = 1.166;
pub const DEFAULT_C: f64 = 0.01;
pub const DEFAULT_Q: f64 = 0.9;
pub const DEFAULT_BATCH_M: usize = 50;

const MAX_BRACKET_DOUBLINGS: usize = 200;
const MAX_BISECTIONS: usize = 400;
const PIVOT_FLOOR: f64 = 1e-10;

/// In-control mean and its leading singular directions.
#[derive(Debug, Clone, PartialEq)]
pub struct InControlModel {
    m0: DenseMatrix,
    basis: ProjectionBasis,
}

impl InControlModel {
    pub fn new(m0: DenseMatrix, basis: ProjectionBasis) -> Result<Self> {
        if m0.shape() != basis.frame_shape() {
            return Err(Error::invalid("basis shape does not match the in-control mean"));
        }
        Ok(Self { m0, basis })
    }

    pub fn m0(&self) -> &DenseMatrix {
        &self.m0
    }

    pub fn basis(&self) -> &ProjectionBasis {
        &self.basis
    }

    pub fn rank(&self) -> usize {
        self.basis.rank()
    }

    pub fn frame_shape(&self) -> (usize, usize) {
        self.m0.shape()
    }
}

/// Everything the monitor needs besides the model.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationParams {
    /// In-control mean of the `2r` features.
    pub mu0: Vec<f64>,
    pub cov0: DenseMatrix,
    pub cov0_chol: DenseMatrix,
    /// Marginal standard deviation of `T_t`.
    pub sigma_t: f64,
    /// Empirical in-control mean of `T_t`.
    pub t_mean: f64,
    /// Long-run variance of `T_t`.
    pub omega0_sq: f64,
    pub c: f64,
    pub target_arl0: f64,
    pub control_limit_h: f64,
    pub batch_size_m: usize,
}

impl CalibrationParams {
    pub fn drift(&self) -> f64 {
        self.t_mean + self.c * self.sigma_t
    }

    pub fn monitor_config(&self) -> Result<MonitorConfig> {
        MonitorConfig::new(self.drift(), self.control_limit_h)
    }

    /// Checks the field invariants; used after deserialisation.
    pub fn validate(&self) -> Result<()> {
        let k = self.mu0.len();
        if k == 0 || k % 2 != 0 {
            return Err(Error::invalid(format!("feature dimension {k} must be positive and even")));
        }
        if self.cov0.shape() != (k, k) || self.cov0_chol.shape() != (k, k) {
            return Err(Error::invalid("covariance shapes do not match the feature dimension"));
        }
        if self.cov0.asymmetry().unwrap_or(f64::INFINITY) > 1e-10 * self.cov0.max_abs().max(1.0) {
            return Err(Error::invalid("cov0 is not symmetric"));
        }
        for i in 0..k {
            if !(self.cov0_chol[(i, i)] > 0.0) {
                return Err(Error::invalid("cov0_chol has a non-positive diagonal"));
            }
            for j in (i + 1)..k {
                if self.cov0_chol[(i, j)] != 0.0 {
                    return Err(Error::invalid("cov0_chol is not lower triangular"));
                }
            }
        }
        let positive = [
            ("sigma_t", self.sigma_t),
            ("omega0_sq", self.omega0_sq),
            ("c", self.c),
            ("target_arl0", self.target_arl0),
            ("control_limit_h", self.control_limit_h),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if !self.t_mean.is_finite() || self.mu0.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite in-control moments"));
        }
        if self.batch_size_m < 2 {
            return Err(Error::invalid("batch size must be at least 2"));
        }
        Ok(())
    }
}

/// Knobs for [`calibrate`].
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationOptions {
    /// Use this mean instead of the training average.
    pub m0_override: Option<DenseMatrix>,
    /// Energy fraction for rank selection, in `(0, 1]`.
    pub q: f64,
    pub c: f64,
    pub target_arl0: f64,
    pub batch_m: usize,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self { m0_override: None, q: DEFAULT_Q, c: DEFAULT_C, target_arl0: 200.0, batch_m: DEFAULT_BATCH_M }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CalibrationStage {
    EstimateMean,
    BuildModel,
    Features,
    Moments,
    Covariance,
    Statistics,
    SigmaT,
    LongRunVariance,
    ControlLimit,
}

impl fmt::Display for CalibrationStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::EstimateMean => "estimate-mean",
            Self::BuildModel => "build-model",
            Self::Features => "features",
            Self::Moments => "moments",
            Self::Covariance => "covariance",
            Self::Statistics => "statistics",
            Self::SigmaT => "sigma-t",
            Self::LongRunVariance => "long-run-variance",
            Self::ControlLimit => "control-limit",
        };
        f.write_str(s)
    }
}

trait StageExt<T> {
    fn stage(self, stage: CalibrationStage) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: CalibrationStage) -> Result<T> {
        self.map_err(|e| Error::Calibration { stage, source: Box::new(e) })
    }
}

/// Elementwise average of the frames.
pub fn estimate_mean(frames: &[DenseMatrix]) -> Result<DenseMatrix> {
    let first = frames.first().ok_or(Error::InsufficientData { needed: 1, got: 0 })?;
    let mut acc = DenseMatrix::zeros(first.rows(), first.cols());
    for (i, f) in frames.iter().enumerate() {
        acc.add_scaled_assign(1.0, f).map_err(|_| {
            Error::invalid(format!(
                "frame {} is {}x{}, expected {}x{}",
                i + 1,
                f.rows(),
                f.cols(),
                first.rows(),
                first.cols()
            ))
        })?;
    }
    Ok(acc.scale(1.0 / frames.len() as f64))
}

/// Smallest `r` whose leading squared singular values carry at least a
/// fraction `q` of the total energy. Values below `len * eps * s_max` count as
/// exact zeros.
pub fn select_rank(singular_values: &[f64], q: f64) -> Result<usize> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::invalid(format!("energy fraction q must lie in (0, 1], got {q}")));
    }
    if singular_values.iter().any(|&s| !(s >= 0.0) || !s.is_finite()) {
        return Err(Error::invalid("singular values must be finite and non-negative"));
    }
    let s_max = singular_values.iter().fold(0.0f64, |m, &s| m.max(s));
    if s_max == 0.0 {
        return Err(Error::DegenerateSpectrum);
    }
    let cutoff = singular_values.len() as f64 * f64::EPSILON * s_max;
    let energy: Vec<f64> = singular_values.iter().map(|&s| if s > cutoff { s * s } else { 0.0 }).collect();
    let total: f64 = energy.iter().sum();
    let mut cum = 0.0;
    for (i, e) in energy.iter().enumerate() {
        cum += e;
        if cum >= q * total * (1.0 - 1e-14) {
            return Ok(i + 1);
        }
    }
    Ok(energy.iter().filter(|&&e| e > 0.0).count())
}

/// SVD of `m0`, energy-based rank selection, and the truncated basis.
pub fn build_model(m0: DenseMatrix, q: f64) -> Result<InControlModel> {
    let p = m0.rows().min(m0.cols());
    let full = svd(&m0, p)?;
    let r = select_rank(&full.s, q)?;
    let pick = |m: &DenseMatrix| DenseMatrix::from_fn(m.rows(), r, |i, j| m[(i, j)]);
    let basis = ProjectionBasis::new(full.s[..r].to_vec(), pick(&full.u), pick(&full.v))?;
    InControlModel::new(m0, basis)
}

/// Sample mean and unbiased (`n - 1`) sample covariance of the feature vectors.
pub fn estimate_moments(ys: &[FeatureVector]) -> Result<(Vec<f64>, DenseMatrix)> {
    if ys.len() < 2 {
        return Err(Error::InsufficientData { needed: 2, got: ys.len() });
    }
    let k = ys[0].dim();
    if k == 0 {
        return Err(Error::invalid("empty feature vectors"));
    }
    let rows: Vec<Vec<f64>> = ys.iter().map(FeatureVector::to_vec).collect();
    if let Some(i) = rows.iter().position(|y| y.len() != k) {
        return Err(Error::invalid(format!("feature vector {} has length {}, expected {k}", i + 1, rows[i].len())));
    }
    let n = rows.len() as f64;
    let mut mean = alloc::vec![0.0; k];
    for y in &rows {
        for (m, v) in mean.iter_mut().zip(y) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut cov = DenseMatrix::zeros(k, k);
    for y in &rows {
        for i in 0..k {
            let di = y[i] - mean[i];
            for j in 0..=i {
                cov[(i, j)] += di * (y[j] - mean[j]);
            }
        }
    }
    for i in 0..k {
        for j in 0..=i {
            let v = cov[(i, j)] / (n - 1.0);
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    Ok((mean, cov))
}

/// Sample standard deviation with the `n - 1` denominator.
pub fn sigma_t_hat(ts: &[f64]) -> Result<f64> {
    if ts.len() < 2 {
        return Err(Error::InsufficientData { needed: 2, got: ts.len() });
    }
    let n = ts.len() as f64;
    let mean = ts.iter().sum::<f64>() / n;
    let ss: f64 = ts.iter().map(|t| (t - mean) * (t - mean)).sum();
    let sd = math::sqrt(ss / (n - 1.0));
    if !(sd > 0.0) {
        return Err(Error::DegenerateVariance("statistic series is constant; sigma_T is undefined".into()));
    }
    Ok(sd)
}

/// CvM weight `g(t) = -24 + 150 t - 150 t^2`; integrates to 1 on `[0, 1]`.
#[inline]
pub fn cvm_weight(t: f64) -> f64 {
    -24.0 + 150.0 * t - 150.0 * t * t
}

/// Overlapping weighted Cramér-von Mises estimate of the long-run variance.
///
/// Batches are the `n - m + 1` windows `ts[i..i + m]`. Each contributes
/// `(1/m) sum_j g(j/m) (j^2/m) (partial_mean_j - batch_mean)^2`, and the
/// estimate is their average. The weights are signed, so very short or
/// adversarial series can yield a non-positive value.
pub fn cvm_omega2(ts: &[f64], m: usize) -> Result<f64> {
    if m < 2 {
        return Err(Error::invalid(format!("batch size must be at least 2, got {m}")));
    }
    if ts.len() < m {
        return Err(Error::InsufficientData { needed: m, got: ts.len() });
    }
    let mf = m as f64;
    let weights: Vec<f64> = (1..=m)
        .map(|j| {
            let jf = j as f64;
            cvm_weight(jf / mf) * jf * jf / mf
        })
        .collect();
    let batches = ts.len() - m + 1;
    let mut dev = alloc::vec![0.0; m];
    let mut total = 0.0;
    for i in 0..batches {
        let window = &ts[i..i + m];
        // offsets from the first entry keep constant windows exactly zero
        for (d, t) in dev.iter_mut().zip(window) {
            *d = t - window[0];
        }
        let mean = dev.iter().sum::<f64>() / mf;
        let mut partial = 0.0;
        let mut c_i = 0.0;
        for (j, (d, w)) in dev.iter().zip(&weights).enumerate() {
            partial += d;
            let diff = partial / (j + 1) as f64 - mean;
            c_i += w * diff * diff;
        }
        total += c_i / mf;
    }
    Ok(total / batches as f64)
}

/// In-control ARL implied by control limit `h`:
/// `Omega^2 / (2 (c sigma)^2) * (e^x - 1 - x)` with
/// `x = 2 c sigma (h + 1.166 Omega) / Omega^2`. Returns `+inf` once `x > 700`.
pub fn arl0_rhs(h: f64, omega0: f64, sigma_t: f64, c: f64) -> f64 {
    let omega_sq = omega0 * omega0;
    let k = c * sigma_t;
    let x = 2.0 * k * (h + SIEGMUND_CORRECTION * omega0) / omega_sq;
    if x > 700.0 {
        return f64::INFINITY;
    }
    omega_sq / (2.0 * k * k) * math::exp_excess(x)
}

/// Solves `arl0_rhs(H) = target_arl0` for `H` by bracketing and bisection.
pub fn solve_control_limit(omega0: f64, sigma_t: f64, c: f64, target_arl0: f64) -> Result<f64> {
    for (name, v) in [("omega0", omega0), ("sigma_t", sigma_t), ("c", c), ("target_arl0", target_arl0)] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::invalid(format!("{name} must be positive and finite, got {v}")));
        }
    }
    let f = |h: f64| arl0_rhs(h, omega0, sigma_t, c);
    let minimum = f(0.0);
    if !(target_arl0 > minimum) {
        return Err(Error::InfeasibleTarget { target: target_arl0, minimum });
    }
    let mut lo = 0.0;
    let mut hi = omega0;
    let mut doublings = 0;
    while f(hi) < target_arl0 {
        lo = hi;
        hi *= 2.0;
        doublings += 1;
        if doublings > MAX_BRACKET_DOUBLINGS {
            return Err(Error::NumericalFailure("could not bracket the control limit".into()));
        }
    }
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let v = f(mid);
        if (v - target_arl0).abs() <= 1e-12 * target_arl0 {
            return Ok(mid);
        }
        if v < target_arl0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (flo, fhi) = (f(lo), f(hi));
    let h = if (flo - target_arl0).abs() <= (fhi - target_arl0).abs() { lo } else { hi };
    Ok(h)
}

/// Runs the whole setup phase on in-control training frames.
pub fn calibrate(frames: &[DenseMatrix], opts: &CalibrationOptions) -> Result<(InControlModel, CalibrationParams)> {
    use CalibrationStage::*;

    if !(opts.c > 0.0) || !opts.c.is_finite() {
        return Err(Error::invalid(format!("c must be positive, got {}", opts.c))).stage(ControlLimit);
    }
    if !(0.01..=0.1).contains(&opts.c) {
        log::warn!("c = {} lies outside the recommended range [0.01, 0.1]", opts.c);
    }
    let n = frames.len();
    let m0 = match &opts.m0_override {
        Some(m0) => {
            if let Some((i, f)) = frames.iter().enumerate().find(|(_, f)| f.shape() != m0.shape()) {
                return Err(Error::invalid(format!(
                    "frame {} is {}x{} but M0 is {}x{}",
                    i + 1,
                    f.rows(),
                    f.cols(),
                    m0.rows(),
                    m0.cols()
                )))
                .stage(EstimateMean);
            }
            m0.clone()
        }
        None => estimate_mean(frames).stage(EstimateMean)?,
    };
    let model = build_model(m0, opts.q).stage(BuildModel)?;
    let r = model.rank();
    if n < 2 * r + 2 {
        return Err(Error::InsufficientData { needed: 2 * r + 2, got: n }).stage(Moments);
    }
    if n < opts.batch_m {
        return Err(Error::InsufficientData { needed: opts.batch_m, got: n }).stage(LongRunVariance);
    }
    if n < 2 * opts.batch_m {
        log::warn!(
            "only {n} training frames for batch size {}; the long-run variance estimate will be unstable",
            opts.batch_m
        );
    }

    let ys = frames
        .iter()
        .enumerate()
        .map(|(i, f)| {
            feature_vector(f, &model).map_err(|e| match e {
                Error::InvalidInput(msg) => Error::InvalidInput(format!("frame {}: {msg}", i + 1)),
                other => other,
            })
        })
        .collect::<Result<Vec<_>>>()
        .stage(Features)?;

    let (mu0, cov0) = estimate_moments(&ys).stage(Moments)?;
    let trace = cov0.trace();
    if !(trace > 0.0) {
        return Err(Error::DegenerateVariance("feature covariance is zero; the training frames are constant".into()))
            .stage(Covariance);
    }
    let chol = Cholesky::factor(&cov0).stage(Covariance)?;
    let floor = PIVOT_FLOOR * trace / (2 * r) as f64;
    if chol.min_pivot() < floor {
        return Err(Error::IllConditioned { min_pivot: chol.min_pivot(), floor }).stage(Covariance);
    }
    if chol.jitter() > 0.0 {
        log::warn!("feature covariance needed diagonal jitter {:e}", chol.jitter());
    }
    let cov0_chol = chol.into_l();

    let ts = ys
        .iter()
        .map(|y| quadratic_form(&y.to_vec(), &mu0, &cov0_chol))
        .collect::<Result<Vec<_>>>()
        .stage(Statistics)?;
    let t_mean = ts.iter().sum::<f64>() / n as f64;
    let sigma_t = sigma_t_hat(&ts).stage(SigmaT)?;
    let omega0_sq = cvm_omega2(&ts, opts.batch_m).stage(LongRunVariance)?;
    if !(omega0_sq > 0.0) {
        return Err(Error::DegenerateVariance(format!("long-run variance estimate {omega0_sq} is not positive")))
            .stage(LongRunVariance);
    }
    let control_limit_h =
        solve_control_limit(math::sqrt(omega0_sq), sigma_t, opts.c, opts.target_arl0).stage(ControlLimit)?;

    let params = CalibrationParams {
        mu0,
        cov0,
        cov0_chol,
        sigma_t,
        t_mean,
        omega0_sq,
        c: opts.c,
        target_arl0: opts.target_arl0,
        control_limit_h,
        batch_size_m: opts.batch_m,
    };
    Ok((model, params))
}

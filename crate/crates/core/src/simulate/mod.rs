//! Synthetic low-rank image streams: backgrounds, spatially correlated noise,
//! moving-average temporal mixing and mean-shift patterns.

mod noise;
mod patterns;

use alloc::borrow::Cow;
use alloc::collections::VecDeque;
use alloc::format;
use alloc::vec::Vec;

pub use noise::{
    exp_transform, exp_transform_scalar, make_cov, sample_matrix_normal, CovKind, CovSpec, MatrixNormal, DEFAULT_RHO,
};
pub use patterns::{chessboard_mean, rank_k_addon, shift_matrix, ShiftKind, ADDON_SCALES, SUPPORTED_DIMS};

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::rng::stream_rng;

pub const DEFAULT_PHI: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "snake_case"))]
pub enum NoiseDist {
    Normal,
    ExpTransformed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(rename_all = "snake_case", deny_unknown_fields)
)]
pub struct NoiseSpec {
    pub dist: NoiseDist,
    pub row_cov: CovSpec,
    pub col_cov: CovSpec,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(rename_all = "snake_case", deny_unknown_fields)
)]
pub struct TemporalSpec {
    pub lag: usize,
    #[cfg_attr(feature = "serde", serde(default = "default_phi"))]
    pub phi: f64,
}

#[cfg(feature = "serde")]
fn default_phi() -> f64 {
    DEFAULT_PHI
}

#[cfg(feature = "serde")]
fn default_amplitude() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "snake_case"))]
pub enum Background {
    /// Rank-2 chessboard.
    Chessboard2,
    /// Chessboard plus the smooth rank-3 addon (rank 5).
    Chessboard2PlusRank3,
}

impl Background {
    pub fn mean(self, p1: usize, p2: usize) -> Result<DenseMatrix> {
        let cb = chessboard_mean(p1, p2)?;
        match self {
            Self::Chessboard2 => Ok(cb),
            Self::Chessboard2PlusRank3 => cb.add(&rank_k_addon(p1, p2, 3)?),
        }
    }

    pub fn rank(self) -> usize {
        match self {
            Self::Chessboard2 => 2,
            Self::Chessboard2PlusRank3 => 5,
        }
    }
}

/// Complete description of a synthetic stream.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(rename_all = "snake_case", deny_unknown_fields)
)]
pub struct ScenarioConfig {
    pub p1: usize,
    pub p2: usize,
    pub background: Background,
    pub shift: ShiftKind,
    /// Multiplies the shift pattern.
    #[cfg_attr(feature = "serde", serde(default = "default_amplitude"))]
    pub amplitude: f64,
    pub noise: NoiseSpec,
    pub temporal: TemporalSpec,
    pub length: usize,
    pub seed: u64,
}

impl ScenarioConfig {
    /// Normal noise, tri-diagonal covariances, lag 5, rank-2 background, no
    /// shift, 800 frames.
    pub fn baseline(p1: usize, p2: usize) -> Self {
        Self {
            p1,
            p2,
            background: Background::Chessboard2,
            shift: ShiftKind::None,
            amplitude: 1.0,
            noise: NoiseSpec {
                dist: NoiseDist::Normal,
                row_cov: CovSpec::new(CovKind::TriDiagonal, p1),
                col_cov: CovSpec::new(CovKind::TriDiagonal, p2),
            },
            temporal: TemporalSpec { lag: 5, phi: DEFAULT_PHI },
            length: 800,
            seed: 0,
        }
    }

    /// Sets both covariance kinds, keeping the dimensions.
    pub fn with_cov(mut self, kind: CovKind) -> Self {
        self.noise.row_cov.kind = kind;
        self.noise.col_cov.kind = kind;
        self
    }

    pub fn validate(&self) -> Result<()> {
        patterns::check_dims(self.p1, self.p2)?;
        if self.noise.row_cov.dim != self.p1 || self.noise.col_cov.dim != self.p2 {
            return Err(Error::invalid(format!(
                "noise covariances are {}x{} but frames are {}x{}",
                self.noise.row_cov.dim, self.noise.col_cov.dim, self.p1, self.p2
            )));
        }
        self.noise.row_cov.validate()?;
        self.noise.col_cov.validate()?;
        if !(self.temporal.phi > 0.0 && self.temporal.phi < 1.0) {
            return Err(Error::invalid(format!("phi must lie in (0, 1), got {}", self.temporal.phi)));
        }
        if !self.amplitude.is_finite() {
            return Err(Error::invalid("shift amplitude must be finite"));
        }
        if self.length == 0 {
            return Err(Error::invalid("sequence length must be positive"));
        }
        Ok(())
    }

    pub fn prepare(&self) -> Result<PreparedScenario> {
        PreparedScenario::new(self)
    }
}

/// A scenario with its background, shift and noise factors precomputed.
/// Cheap to share between replications.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedScenario {
    config: ScenarioConfig,
    m0: DenseMatrix,
    shift: DenseMatrix,
    sampler: MatrixNormal,
    weights: Vec<f64>,
}

impl PreparedScenario {
    pub fn new(config: &ScenarioConfig) -> Result<Self> {
        config.validate()?;
        let m0 = config.background.mean(config.p1, config.p2)?;
        let shift = shift_matrix(config.shift, config.p1, config.p2)?.scale(config.amplitude);
        let sampler = MatrixNormal::from_specs(&config.noise.row_cov, &config.noise.col_cov)?;
        let weights = core::iter::successors(Some(1.0), |w| Some(w * config.temporal.phi))
            .take(config.temporal.lag + 1)
            .collect();
        Ok(Self { config: config.clone(), m0, shift, sampler, weights })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    /// The true in-control mean.
    pub fn m0(&self) -> &DenseMatrix {
        &self.m0
    }

    /// The shift actually added (pattern times amplitude).
    pub fn shift(&self) -> &DenseMatrix {
        &self.shift
    }

    /// One raw noise matrix `eps` with global noise index `index`.
    pub fn noise(&self, replication: u64, index: u64) -> DenseMatrix {
        let mut rng = stream_rng(self.config.seed, replication, index);
        let e = self.sampler.sample(&mut rng);
        match self.config.noise.dist {
            NoiseDist::Normal => e,
            NoiseDist::ExpTransformed => exp_transform(&e).expect("matrix-normal draws are finite"),
        }
    }

    /// Frames of replication `replication`; `shift_at` is the 1-based index of
    /// the first shifted frame.
    pub fn generator(&self, replication: u64, shift_at: Option<u64>) -> SequenceGenerator<'_> {
        SequenceGenerator::with_scenario(Cow::Borrowed(self), replication, shift_at)
    }
}

/// Iterator over `X_t = M0 [+ A] + sum_j phi^j eps_{t-j}`, `t = 1..=length`.
///
/// Noise matrices are indexed globally: indices `0..lag` are warm-up draws
/// and frame `t` uses index `lag + t - 1` as its newest term, so every frame
/// carries the full moving-average structure. Each index has its own RNG
/// stream keyed by `(seed, replication, index)`.
#[derive(Debug, Clone)]
pub struct SequenceGenerator<'a> {
    scenario: Cow<'a, PreparedScenario>,
    replication: u64,
    shift_at: Option<u64>,
    /// Newest first.
    window: VecDeque<DenseMatrix>,
    t: u64,
    length: u64,
}

impl<'a> SequenceGenerator<'a> {
    fn with_scenario(scenario: Cow<'a, PreparedScenario>, replication: u64, shift_at: Option<u64>) -> Self {
        let length = scenario.config.length as u64;
        Self { scenario, replication, shift_at, window: VecDeque::new(), t: 0, length }
    }

    /// Overrides the number of frames produced.
    pub fn with_length(mut self, length: u64) -> Self {
        self.length = length;
        self
    }

    pub fn frames_emitted(&self) -> u64 {
        self.t
    }
}

impl Iterator for SequenceGenerator<'_> {
    type Item = DenseMatrix;

    fn next(&mut self) -> Option<DenseMatrix> {
        if self.t >= self.length {
            return None;
        }
        let sc = &*self.scenario;
        let lag = sc.weights.len() - 1;
        if self.window.is_empty() {
            // warm-up: indices lag-1 down to 0, newest first
            for idx in (0..lag as u64).rev() {
                self.window.push_back(sc.noise(self.replication, idx));
            }
        }
        self.t += 1;
        let newest = sc.noise(self.replication, lag as u64 + self.t - 1);
        self.window.push_front(newest);
        self.window.truncate(lag + 1);

        let mut x = sc.m0.clone();
        if self.shift_at.is_some_and(|k| self.t >= k) && sc.config.shift != ShiftKind::None {
            x.add_scaled_assign(1.0, &sc.shift).expect("shapes fixed at preparation");
        }
        for (w, e) in sc.weights.iter().zip(&self.window) {
            x.add_scaled_assign(*w, e).expect("shapes fixed at preparation");
        }
        Some(x)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.length - self.t) as usize;
        (left, Some(left))
    }
}

/// Owning generator for a single replication (replication 0).
pub fn generate_sequence(cfg: &ScenarioConfig, shift_at: Option<u64>) -> Result<SequenceGenerator<'static>> {
    Ok(SequenceGenerator::with_scenario(Cow::Owned(PreparedScenario::new(cfg)?), 0, shift_at))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_cfg(p1: usize, p2: usize, lag: usize) -> ScenarioConfig {
        let mut cfg = ScenarioConfig::baseline(p1, p2).with_cov(CovKind::Identity);
        cfg.temporal.lag = lag;
        cfg
    }

    #[test]
    fn determinism_and_seed_dependence() {
        let mut cfg = ScenarioConfig::baseline(40, 80);
        cfg.length = 5;
        let a: Vec<_> = generate_sequence(&cfg, None).unwrap().collect();
        let b: Vec<_> = generate_sequence(&cfg, None).unwrap().collect();
        assert_eq!(a.len(), 5);
        assert!(a.iter().zip(&b).all(|(x, y)| x.data().iter().zip(y.data()).all(|(u, v)| u.to_bits() == v.to_bits())));
        cfg.seed = 1;
        let c: Vec<_> = generate_sequence(&cfg, None).unwrap().collect();
        assert_ne!(a, c);
    }

    #[test]
    fn frames_follow_moving_average() {
        let mut cfg = identity_cfg(40, 80, 3);
        cfg.length = 4;
        let sc = cfg.prepare().unwrap();
        let frames: Vec<_> = sc.generator(2, None).collect();
        for (t, x) in frames.iter().enumerate() {
            let mut want = sc.m0().clone();
            for j in 0..=3u64 {
                let idx = 3 + t as u64 - j;
                want.add_scaled_assign(0.5f64.powi(j as i32), &sc.noise(2, idx)).unwrap();
            }
            assert!(x.sub(&want).unwrap().max_abs() < 1e-14);
        }
    }

    #[test]
    fn shift_starts_at_requested_frame() {
        let mut cfg = identity_cfg(40, 80, 0);
        cfg.shift = ShiftKind::Sparse;
        cfg.amplitude = 2.0;
        cfg.length = 4;
        let sc = cfg.prepare().unwrap();
        let plain: Vec<_> = sc.generator(0, None).collect();
        let shifted: Vec<_> = sc.generator(0, Some(3)).collect();
        assert_eq!(plain[..2], shifted[..2]);
        let d = shifted[3].sub(&plain[3]).unwrap();
        assert!(d.sub(&shift_matrix(ShiftKind::Sparse, 40, 80).unwrap().scale(2.0)).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn white_noise_variance() {
        let mut cfg = identity_cfg(40, 80, 0);
        cfg.length = 100;
        let sc = cfg.prepare().unwrap();
        let (mut s, mut ss, mut n) = (0.0, 0.0, 0.0);
        for x in sc.generator(0, None) {
            for v in x.sub(sc.m0()).unwrap().data() {
                s += v;
                ss += v * v;
                n += 1.0;
            }
        }
        let var = ss / n - (s / n).powi(2);
        assert!((var - 1.0).abs() < 0.02, "{var}");
    }

    #[test]
    fn ma5_variance_and_lag_one_autocovariance() {
        let mut cfg = identity_cfg(40, 80, 5);
        cfg.length = 400;
        let sc = cfg.prepare().unwrap();
        let resid: Vec<DenseMatrix> = sc.generator(0, None).map(|x| x.sub(sc.m0()).unwrap()).collect();
        let m = 40 * 80;
        let mut var = 0.0;
        let mut cov1 = 0.0;
        for t in 0..resid.len() {
            for k in 0..m {
                let v = resid[t].data()[k];
                var += v * v;
                if t > 0 {
                    cov1 += v * resid[t - 1].data()[k];
                }
            }
        }
        var /= (resid.len() * m) as f64;
        cov1 /= ((resid.len() - 1) * m) as f64;
        assert!((var / 1.333251953125 - 1.0).abs() < 0.02, "{var}");
        let want = 0.5 * (1.0 - 0.25f64.powi(5)) / 0.75;
        assert!((cov1 - want).abs() < 0.02, "{cov1}");
    }

    #[test]
    fn config_validation() {
        let mut cfg = ScenarioConfig::baseline(40, 80);
        cfg.noise.row_cov.dim = 41;
        assert!(cfg.prepare().is_err());
        let mut cfg = ScenarioConfig::baseline(40, 80);
        cfg.temporal.phi = 1.0;
        assert!(cfg.validate().is_err());
        assert!(ScenarioConfig::baseline(30, 60).validate().is_err());
    }

    #[test]
    fn background_ranks() {
        assert_eq!(Background::Chessboard2.mean(50, 100).unwrap(), chessboard_mean(50, 100).unwrap());
        let m = Background::Chessboard2PlusRank3.mean(40, 80).unwrap();
        let s = crate::linalg::svd(&m, 40).unwrap().s;
        assert!(s[4] > 1e-3 && s[5] < 1e-10);
    }
}

use dflim_core::calibration::{calibrate, CalibrationOptions};
use dflim_core::cusum::Detector;
use dflim_core::rng::CALIBRATION_REPLICATION;
use dflim_core::simulate::PreparedScenario;
use dflim_core::{CalibrationParams, Error, InControlModel};
use rayon::prelude::*;

/// What to do with replications that never alarm.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Censoring {
    /// Count them at `max_len`; the mean is then a lower bound.
    #[default]
    IncludeAtMaxLen,
    /// Leave them out of the mean.
    Exclude,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct ArlSettings {
    pub n_reps: u64,
    pub max_len: u64,
    /// 1-based index of the first shifted frame; run lengths are counted from it.
    pub shift_at: Option<u64>,
    pub censoring: Censoring,
    /// Replication ids are `first_replication..first_replication + n_reps`.
    pub first_replication: u64,
}

impl ArlSettings {
    pub fn new(n_reps: u64, max_len: u64) -> Self {
        Self { n_reps, max_len, shift_at: None, censoring: Censoring::default(), first_replication: 0 }
    }

    pub fn shifted_at(mut self, k: u64) -> Self {
        self.shift_at = Some(k);
        self
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ArlEstimate {
    pub mean_rl: f64,
    pub std_err: f64,
    pub n_reps: u64,
    pub n_censored: u64,
    /// Alarms before the shift (only with `shift_at > 1`); excluded from the mean.
    pub n_false_alarms: u64,
    pub max_len: u64,
    /// Per replication: the run length, or `None` if censored.
    #[serde(skip)]
    pub runs: Vec<Option<u64>>,
}

impl ArlEstimate {
    /// The mean understates the true ARL when runs were cut off at `max_len`.
    pub fn is_lower_bound(&self) -> bool {
        self.n_censored > 0
    }
}

/// How many in-control frames to calibrate on, and with which options.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSpec {
    pub n_frames: usize,
    pub options: CalibrationOptions,
    /// Supply the scenario's true `M0` instead of the training average.
    pub known_m0: bool,
}

impl Default for TrainingSpec {
    fn default() -> Self {
        Self { n_frames: 400, options: CalibrationOptions::default(), known_m0: true }
    }
}

/// Calibrates on frames of the scenario's dedicated training replication.
/// The scenario's shift is never applied to training frames.
pub fn calibrate_scenario(
    scenario: &PreparedScenario,
    training: &TrainingSpec,
) -> dflim_core::Result<(InControlModel, CalibrationParams)> {
    let frames: Vec<_> =
        scenario.generator(CALIBRATION_REPLICATION, None).with_length(training.n_frames as u64).collect();
    let mut opts = training.options.clone();
    if training.known_m0 {
        opts.m0_override = Some(scenario.m0().clone());
    }
    calibrate(&frames, &opts)
}

enum Outcome {
    Alarm(u64),
    Censored,
}

fn one_replication(
    scenario: &PreparedScenario,
    model: &InControlModel,
    params: &CalibrationParams,
    settings: &ArlSettings,
    replication: u64,
) -> dflim_core::Result<Outcome> {
    let mut det = Detector::new(model, params)?;
    for frame in scenario.generator(replication, settings.shift_at).with_length(settings.max_len) {
        let rec = det.observe(&frame)?;
        if rec.alarm {
            return Ok(Outcome::Alarm(rec.t));
        }
    }
    Ok(Outcome::Censored)
}

/// Runs `n_reps` independent replications, in parallel on the current rayon
/// pool, and summarises their run lengths. Results are merged in replication
/// order, so the estimate does not depend on scheduling.
pub fn estimate_arl(
    scenario: &PreparedScenario,
    model: &InControlModel,
    params: &CalibrationParams,
    settings: &ArlSettings,
) -> dflim_core::Result<ArlEstimate> {
    let cfg = scenario.config();
    if model.frame_shape() != (cfg.p1, cfg.p2) {
        return Err(Error::InvalidInput(format!(
            "calibration is for {}x{} frames but the scenario produces {}x{}",
            model.frame_shape().0,
            model.frame_shape().1,
            cfg.p1,
            cfg.p2
        )));
    }
    if settings.n_reps < 2 || settings.max_len == 0 {
        return Err(Error::InvalidInput("need at least 2 replications and a positive horizon".into()));
    }
    if settings.shift_at.is_some_and(|k| k == 0 || k > settings.max_len) {
        return Err(Error::InvalidInput("shift_at must lie in 1..=max_len".into()));
    }
    let outcomes = (0..settings.n_reps)
        .into_par_iter()
        .map(|i| one_replication(scenario, model, params, settings, settings.first_replication + i))
        .collect::<dflim_core::Result<Vec<_>>>()?;

    let offset = settings.shift_at.map_or(0, |k| k - 1);
    let mut runs = Vec::with_capacity(outcomes.len());
    let mut n_false_alarms = 0;
    for o in outcomes {
        match o {
            Outcome::Alarm(t) if t <= offset => n_false_alarms += 1,
            Outcome::Alarm(t) => runs.push(Some(t - offset)),
            Outcome::Censored => runs.push(None),
        }
    }
    let horizon = settings.max_len - offset;
    let values: Vec<f64> = runs
        .iter()
        .filter_map(|r| match (r, settings.censoring) {
            (Some(t), _) => Some(*t as f64),
            (None, Censoring::IncludeAtMaxLen) => Some(horizon as f64),
            (None, Censoring::Exclude) => None,
        })
        .collect();
    let (mean_rl, std_err) = mean_and_se(&values);
    Ok(ArlEstimate {
        mean_rl,
        std_err,
        n_reps: settings.n_reps,
        n_censored: runs.iter().filter(|r| r.is_none()).count() as u64,
        n_false_alarms,
        max_len: settings.max_len,
        runs,
    })
}

/// Sample mean and `sd / sqrt(n)`; NaN where undefined.
pub(crate) fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

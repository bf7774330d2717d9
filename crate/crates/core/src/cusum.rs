//! One-sided CUSUM on the quadratic-form statistic, with single-alarm and
//! restart-on-alarm drivers.

use alloc::format;
use alloc::vec::Vec;
use core::borrow::Borrow;

use crate::calibration::{CalibrationParams, InControlModel};
use crate::error::{Error, Result};
use crate::features::{feature_vector, t_statistic};
use crate::linalg::DenseMatrix;

/// Recursion constants: `S_t = max(0, S_{t-1} + T_t - drift)`, alarm when
/// `S_t >= control_limit_h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonitorConfig {
    /// `E0[T_t] + c * sigma_T`.
    pub drift: f64,
    /// May be `+inf` to disable alarms.
    pub control_limit_h: f64,
}

impl MonitorConfig {
    pub fn new(drift: f64, control_limit_h: f64) -> Result<Self> {
        if !drift.is_finite() {
            return Err(Error::invalid(format!("drift must be finite, got {drift}")));
        }
        if !(control_limit_h > 0.0) {
            return Err(Error::invalid(format!("control limit must be positive, got {control_limit_h}")));
        }
        Ok(Self { drift, control_limit_h })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MonitorState {
    pub s: f64,
    /// Frames consumed so far.
    pub t: u64,
    pub alarmed: bool,
}

impl MonitorState {
    /// Clears the statistic and the alarm flag; the frame counter keeps running.
    pub fn reset(&mut self) {
        self.s = 0.0;
        self.alarmed = false;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlarmEvent {
    /// 1-based index of the alarming frame.
    pub time: u64,
    pub s_at_alarm: f64,
}

/// One recursion step.
pub fn step(state: MonitorState, t_stat: f64, config: &MonitorConfig) -> Result<(MonitorState, Option<AlarmEvent>)> {
    if state.alarmed {
        return Err(Error::UsageError("step called after an alarm without reset".into()));
    }
    if !t_stat.is_finite() {
        return Err(Error::invalid(format!("statistic at t={} is not finite", state.t + 1)));
    }
    let s = (state.s + t_stat - config.drift).max(0.0);
    let t = state.t + 1;
    let alarmed = s >= config.control_limit_h;
    let alarm = alarmed.then_some(AlarmEvent { time: t, s_at_alarm: s });
    Ok((MonitorState { s, t, alarmed }, alarm))
}

/// Per-step trace record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub t: u64,
    pub t_stat: f64,
    pub s: f64,
    pub alarm: bool,
}

/// Stateful monitor bound to a calibrated model.
#[derive(Debug, Clone)]
pub struct Detector<'a> {
    model: &'a InControlModel,
    params: &'a CalibrationParams,
    config: MonitorConfig,
    state: MonitorState,
}

impl<'a> Detector<'a> {
    pub fn new(model: &'a InControlModel, params: &'a CalibrationParams) -> Result<Self> {
        if params.mu0.len() != 2 * model.rank() {
            return Err(Error::invalid(format!(
                "calibration has {} features but the model rank is {}",
                params.mu0.len(),
                model.rank()
            )));
        }
        Ok(Self { model, params, config: params.monitor_config()?, state: MonitorState::default() })
    }

    pub fn with_config(mut self, config: MonitorConfig) -> Self {
        self.config = config;
        self
    }

    pub fn config(&self) -> &MonitorConfig {
        &self.config
    }

    pub fn state(&self) -> &MonitorState {
        &self.state
    }

    pub fn reset(&mut self) {
        self.state.reset();
    }

    /// The statistic `T_t` for one frame, without touching the state.
    pub fn statistic(&self, frame: &DenseMatrix) -> Result<f64> {
        let y = feature_vector(frame, self.model)?;
        t_statistic(&y, &self.params.mu0, &self.params.cov0_chol)
    }

    pub fn observe(&mut self, frame: &DenseMatrix) -> Result<StepRecord> {
        let index = self.state.t + 1;
        if self.state.alarmed {
            return Err(Error::UsageError(format!("frame {index} observed after an alarm without reset")));
        }
        let t_stat = self.statistic(frame).map_err(|e| match e {
            Error::InvalidInput(msg) => Error::InvalidInput(format!("frame {index}: {msg}")),
            other => other,
        })?;
        self.observe_statistic(t_stat)
    }

    pub fn observe_statistic(&mut self, t_stat: f64) -> Result<StepRecord> {
        let (next, alarm) = step(self.state, t_stat, &self.config)?;
        self.state = next;
        Ok(StepRecord { t: next.t, t_stat, s: next.s, alarm: alarm.is_some() })
    }
}

/// Streams frames until the first alarm. `Ok(None)` if the stream ends first.
pub fn run<I>(frames: I, model: &InControlModel, params: &CalibrationParams) -> Result<Option<AlarmEvent>>
where
    I: IntoIterator,
    I::Item: Borrow<DenseMatrix>,
{
    let alarms = run_traced(frames, model, params, false, |_| {})?;
    Ok(alarms.first().copied())
}

/// Streams every frame, resetting `S` to zero after each alarm. Alarm times are
/// absolute frame indices.
pub fn run_with_restart<I>(frames: I, model: &InControlModel, params: &CalibrationParams) -> Result<Vec<AlarmEvent>>
where
    I: IntoIterator,
    I::Item: Borrow<DenseMatrix>,
{
    run_traced(frames, model, params, true, |_| {})
}

/// Shared driver; `sink` sees every step record.
pub fn run_traced<I, F>(
    frames: I,
    model: &InControlModel,
    params: &CalibrationParams,
    restart: bool,
    mut sink: F,
) -> Result<Vec<AlarmEvent>>
where
    I: IntoIterator,
    I::Item: Borrow<DenseMatrix>,
    F: FnMut(&StepRecord),
{
    let mut det = Detector::new(model, params)?;
    let mut alarms = Vec::new();
    for frame in frames {
        let rec = det.observe(frame.borrow())?;
        sink(&rec);
        if rec.alarm {
            alarms.push(AlarmEvent { time: rec.t, s_at_alarm: rec.s });
            if !restart {
                break;
            }
            det.reset();
        }
    }
    Ok(alarms)
}

/// CUSUM over a precomputed statistic sequence; first alarm only.
pub fn run_statistics<I>(stats: I, config: &MonitorConfig) -> Result<Option<AlarmEvent>>
where
    I: IntoIterator<Item = f64>,
{
    let mut state = MonitorState::default();
    for t_stat in stats {
        let (next, alarm) = step(state, t_stat, config)?;
        if alarm.is_some() {
            return Ok(alarm);
        }
        state = next;
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg(drift: f64, h: f64) -> MonitorConfig {
        MonitorConfig::new(drift, h).unwrap()
    }

    #[test]
    fn step_examples() {
        let c = cfg(4.5, 10.0);
        let (s, a) = step(MonitorState::default(), 4.5, &c).unwrap();
        assert_eq!((s.s, s.t, a), (0.0, 1, None));
        let (s, a) = step(MonitorState::default(), 4.5 - 5.0, &c).unwrap();
        assert_eq!((s.s, a), (0.0, None));
        let start = MonitorState { s: 8.0, t: 6, alarmed: false };
        let (s, a) = step(start, 4.5 + 3.0, &c).unwrap();
        assert_eq!(s.s, 11.0);
        assert_eq!(a, Some(AlarmEvent { time: 7, s_at_alarm: 11.0 }));
        assert!(s.alarmed);
        assert!(matches!(step(s, 0.0, &c), Err(Error::UsageError(_))));
    }

    #[test]
    fn alarm_is_weak_inequality() {
        let c = cfg(1.0, 2.0);
        let (_, a) = step(MonitorState::default(), 3.0, &c).unwrap();
        assert!(a.is_some());
    }

    #[test]
    fn config_validation() {
        assert!(MonitorConfig::new(1.0, 0.0).is_err());
        assert!(MonitorConfig::new(1.0, f64::NAN).is_err());
        assert!(MonitorConfig::new(f64::NAN, 1.0).is_err());
        assert!(MonitorConfig::new(1.0, f64::INFINITY).is_ok());
    }

    #[test]
    fn single_step_crossing() {
        let c = cfg(2.0, 5.0);
        assert_eq!(run_statistics([7.0], &c).unwrap().map(|a| a.time), Some(1));
        assert_eq!(run_statistics([6.9], &c).unwrap(), None);
    }

    /// max(0, max_k sum_{j=k..t} (T_j - drift))
    fn windowed_max(ts: &[f64], drift: f64, t: usize) -> f64 {
        let mut best = 0.0f64;
        for k in 0..=t {
            let w: f64 = ts[k..=t].iter().map(|x| x - drift).sum();
            best = best.max(w);
        }
        best
    }

    proptest! {
        #[test]
        fn cusum_equals_windowed_max(ts in prop::collection::vec(0.0f64..10.0, 1..50), drift in 0.5f64..6.0) {
            let c = cfg(drift, f64::INFINITY);
            let mut state = MonitorState::default();
            for t in 0..ts.len() {
                state = step(state, ts[t], &c).unwrap().0;
                let oracle = windowed_max(&ts, drift, t);
                prop_assert!((state.s - oracle).abs() <= 1e-9 * (1.0 + oracle));
            }
        }

        #[test]
        fn raising_statistics_never_delays_alarm(
            ts in prop::collection::vec(0.0f64..10.0, 1..60),
            delta in 0.001f64..3.0,
            h in 1.0f64..30.0,
        ) {
            let c = cfg(5.0, h);
            let base = run_statistics(ts.iter().copied(), &c).unwrap().map(|a| a.time);
            let raised = run_statistics(ts.iter().map(|x| x + delta), &c).unwrap().map(|a| a.time);
            match (base, raised) {
                (Some(b), Some(r)) => prop_assert!(r <= b),
                (Some(_), None) => prop_assert!(false, "raised sequence lost its alarm"),
                _ => {}
            }
        }

        #[test]
        fn replay_is_deterministic(ts in prop::collection::vec(-3.0f64..10.0, 1..40)) {
            let c = cfg(2.0, f64::INFINITY);
            let traj = |ts: &[f64]| {
                let mut st = MonitorState::default();
                ts.iter().map(|&x| { st = step(st, x, &c).unwrap().0; st.s }).collect::<Vec<_>>()
            };
            prop_assert_eq!(traj(&ts), traj(&ts));
        }
    }
}

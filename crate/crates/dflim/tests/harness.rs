use dflim::harness::{
    calibrate_scenario, empirical_shift_checks, estimate_arl, run_grid, ArlSettings, Censoring, GridCell, GridSpec,
    TrainingSpec,
};
use dflim_core::simulate::{CovKind, ScenarioConfig, ShiftKind};
use dflim_core::{CalibrationParams, InControlModel};

fn fast() -> ScenarioConfig {
    ScenarioConfig::baseline(40, 80)
}

fn calibrated(cfg: &ScenarioConfig) -> (InControlModel, CalibrationParams) {
    calibrate_scenario(&cfg.prepare().unwrap(), &TrainingSpec::default()).unwrap()
}

#[test]
fn infinite_limit_censors_every_run() {
    let cfg = fast();
    let (model, mut params) = calibrated(&cfg);
    params.control_limit_h = f64::INFINITY;
    let est = estimate_arl(&cfg.prepare().unwrap(), &model, &params, &ArlSettings::new(6, 40)).unwrap();
    assert_eq!(est.n_censored, 6);
    assert_eq!(est.mean_rl, 40.0);
    assert!(est.is_lower_bound());

    let excluded = ArlSettings { censoring: Censoring::Exclude, ..ArlSettings::new(6, 40) };
    let est = estimate_arl(&cfg.prepare().unwrap(), &model, &params, &excluded).unwrap();
    assert!(est.mean_rl.is_nan() && est.n_censored == 6);
}

#[test]
fn enormous_shift_is_caught_on_the_first_frame() {
    let cfg = fast();
    let (model, params) = calibrated(&cfg);
    let shifted = ScenarioConfig { shift: ShiftKind::Chessboard, amplitude: 50.0, ..cfg };
    let est =
        estimate_arl(&shifted.prepare().unwrap(), &model, &params, &ArlSettings::new(20, 50).shifted_at(1)).unwrap();
    assert_eq!(est.n_censored, 0);
    assert_eq!(est.mean_rl, 1.0);
}

#[test]
fn run_lengths_count_from_the_shift() {
    let cfg = fast();
    let (model, params) = calibrated(&cfg);
    let shifted = ScenarioConfig { shift: ShiftKind::Chessboard, amplitude: 50.0, ..cfg };
    let est =
        estimate_arl(&shifted.prepare().unwrap(), &model, &params, &ArlSettings::new(10, 200).shifted_at(30)).unwrap();
    let detected: Vec<_> = est.runs.iter().flatten().collect();
    assert_eq!(detected.len() as u64 + est.n_false_alarms, 10);
    assert!(detected.iter().all(|&&t| t == 1));
}

#[test]
fn larger_limit_never_shortens_runs() {
    let cfg = fast();
    let sc = cfg.prepare().unwrap();
    let (model, params) = calibrated(&cfg);
    let mut prev: Option<Vec<Option<u64>>> = None;
    for h in [5.0, 10.0, 20.0, 40.0] {
        let p = CalibrationParams { control_limit_h: h, ..params.clone() };
        let est = estimate_arl(&sc, &model, &p, &ArlSettings::new(12, 150)).unwrap();
        if let Some(prev) = &prev {
            for (a, b) in prev.iter().zip(&est.runs) {
                // None (censored) is the longest possible run
                assert!(b.unwrap_or(u64::MAX) >= a.unwrap_or(u64::MAX), "{a:?} -> {b:?} at H={h}");
            }
        }
        prev = Some(est.runs);
    }
}

#[test]
fn replications_are_uncorrelated() {
    let cfg = fast();
    let (model, params) = calibrated(&cfg);
    let p = CalibrationParams { control_limit_h: 8.0, ..params };
    let n = 200;
    let est = estimate_arl(&cfg.prepare().unwrap(), &model, &p, &ArlSettings::new(n, 400)).unwrap();
    let xs: Vec<f64> = est.runs.iter().map(|r| r.unwrap_or(400) as f64).collect();
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    let var: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
    let lag1: f64 = xs.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum();
    let rho = lag1 / var;
    assert!(rho.abs() <= 4.0 / (n as f64).sqrt(), "lag-1 correlation {rho}");
}

#[test]
fn mismatched_calibration_is_rejected() {
    let (model, params) = calibrated(&fast());
    let other = ScenarioConfig::baseline(50, 100).prepare().unwrap();
    assert!(estimate_arl(&other, &model, &params, &ArlSettings::new(4, 10)).is_err());
}

fn small_grid() -> GridSpec {
    GridSpec {
        cells: vec![GridCell::in_control(fast()), GridCell::shifted(fast(), ShiftKind::Sine, 1)],
        n_reps: 8,
        max_len: 120,
        censoring: Censoring::IncludeAtMaxLen,
        training: TrainingSpec { n_frames: 200, ..TrainingSpec::default() },
    }
}

#[test]
fn grid_is_reproducible() {
    let a = run_grid(&small_grid());
    let b = run_grid(&small_grid());
    assert_eq!(a.to_csv(), b.to_csv());
    assert_eq!(a.rows.len(), 2);
    assert!(a.rows.iter().all(|r| r.error.is_none()));
    // both cells share one calibration
    assert_eq!(a.rows[0].h, a.rows[1].h);
}

#[test]
fn grid_records_cell_failures_and_continues() {
    let mut spec = small_grid();
    let mut bad = fast();
    bad.p1 = 41;
    spec.cells.insert(0, GridCell::in_control(bad));
    let report = run_grid(&spec);
    assert_eq!(report.rows.len(), 3);
    assert!(report.rows[0].error.is_some());
    assert!(report.rows[1..].iter().all(|r| r.estimate.is_some()));
}

#[test]
fn null_shift_is_within_noise() {
    let cfg = ScenarioConfig { shift: ShiftKind::Chessboard, amplitude: 0.0, ..fast() };
    let rep = empirical_shift_checks(&cfg.prepare().unwrap(), 1000).unwrap();
    for c in rep.beta_shift.iter().chain(&rep.gamma_shift) {
        assert!(c.predicted.abs() < 1e-12, "{c:?}");
    }
    for c in rep.beta_shift.iter().chain(&rep.gamma_shift).chain([&rep.t_shift]) {
        assert!(c.estimate.abs() <= 4.0 * c.std_err, "{c:?}");
    }
    let (d1, d2, d3) = rep.delta.expect("decomposition defined under the null");
    assert!(d2 >= 0.0 && d3 >= 0.0);
    assert!((d1 + d2 + d3).abs() <= 4.0 * rep.t_shift.std_err, "{:?}", rep.delta);
}

#[test]
fn half_background_shift_moves_beta_by_half_lambda() {
    let cfg = ScenarioConfig { shift: ShiftKind::Chessboard, amplitude: 0.5, ..fast() };
    let sc = cfg.prepare().unwrap();
    let rep = empirical_shift_checks(&sc, 2000).unwrap();
    let lambda = 0.5 * 8f64.sqrt();
    for c in &rep.beta_shift {
        assert!((c.predicted - lambda).abs() <= 1e-9, "{c:?}");
        assert!(c.within_se(4.0), "{c:?}");
    }
    let (d1, d2, d3) = rep.delta.expect("decomposition defined");
    assert!(d2 >= 0.0 && d3 > 0.0);
    assert!((d1 + d2 + d3 - rep.t_shift.estimate).abs() <= 4.0 * rep.t_shift.std_err, "{rep:?}");
    assert!(rep.t_shift.within_se(4.0), "{:?}", rep.t_shift);
}

/// Top singular value of `A + E` for a rank-one `A` of size `rho` and i.i.d.
/// unit noise, above the detectability threshold.
fn spiked_top(rho: f64, p1: f64, p2: f64) -> f64 {
    ((rho * rho + p1) * (rho * rho + p2)).sqrt() / rho
}

#[test]
fn sparse_shift_follows_spiked_model() {
    let cfg =
        ScenarioConfig { shift: ShiftKind::Sparse, ..ScenarioConfig::baseline(100, 200).with_cov(CovKind::Identity) };
    let rep = empirical_shift_checks(&cfg.prepare().unwrap(), 300).unwrap();
    let g = rep.gamma_shift[0];
    assert!((g.predicted - 18.0 / 20000f64.sqrt()).abs() <= 1e-12);
    let expected = (spiked_top(18.0, 100.0, 200.0) - (10.0 + 200f64.sqrt())) / 20000f64.sqrt();
    assert!((g.estimate - expected).abs() <= 0.25 * expected, "{g:?} vs {expected}");
}

#[test]
fn dense_shift_gamma_tracks_normalised_singular_values() {
    let cfg = ScenarioConfig {
        shift: ShiftKind::Chessboard,
        amplitude: 20.0,
        ..ScenarioConfig::baseline(100, 200).with_cov(CovKind::Identity)
    };
    let rep = empirical_shift_checks(&cfg.prepare().unwrap(), 300).unwrap();
    for g in &rep.gamma_shift {
        assert!(g.relative_error() <= 0.25, "{g:?}");
    }
}

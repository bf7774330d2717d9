use std::fs;
use std::path::Path;

use dflim_core::simulate::{NoiseDist, ScenarioConfig, ShiftKind};
use dflim_core::{CalibrationParams, InControlModel};
use serde::Serialize;

use super::arl::{calibrate_scenario, estimate_arl, ArlEstimate, ArlSettings, Censoring, TrainingSpec};
use crate::error::{AppResult, IoContext};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridCell {
    pub scenario: ScenarioConfig,
    pub shift_at: Option<u64>,
}

impl GridCell {
    pub fn in_control(scenario: ScenarioConfig) -> Self {
        Self { scenario, shift_at: None }
    }

    pub fn shifted(mut scenario: ScenarioConfig, shift: ShiftKind, shift_at: u64) -> Self {
        scenario.shift = shift;
        Self { scenario, shift_at: Some(shift_at) }
    }

    /// The in-control part that calibration depends on.
    fn calibration_key(&self) -> ScenarioConfig {
        let mut s = self.scenario.clone();
        s.shift = ShiftKind::None;
        s.amplitude = 1.0;
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub cells: Vec<GridCell>,
    pub n_reps: u64,
    pub max_len: u64,
    pub censoring: Censoring,
    pub training: TrainingSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridRow {
    pub cell: GridCell,
    pub rank: Option<usize>,
    pub h: Option<f64>,
    pub estimate: Option<ArlEstimate>,
    /// Set when the cell failed; the grid carries on.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridReport {
    pub rows: Vec<GridRow>,
    pub spec: GridSpec,
}

pub const GRID_HEADER: &str = "dist,background,lag,phi,row_cov,col_cov,p1,p2,shift,amplitude,shift_at,seed,rank,h,mean_rl,std_err,n_reps,n_censored,n_false_alarms,max_len,lower_bound,error";

fn snake<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default()
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

impl GridReport {
    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
        w.write_record(GRID_HEADER.split(',')).expect("in-memory write");
        for row in &self.rows {
            let s = &row.cell.scenario;
            let e = row.estimate.as_ref();
            let dist = match s.noise.dist {
                NoiseDist::Normal => "normal",
                NoiseDist::ExpTransformed => "exp_transformed",
            };
            let rec = [
                dist.to_string(),
                snake(&s.background),
                s.temporal.lag.to_string(),
                s.temporal.phi.to_string(),
                snake(&s.noise.row_cov.kind),
                snake(&s.noise.col_cov.kind),
                s.p1.to_string(),
                s.p2.to_string(),
                s.shift.name().to_string(),
                s.amplitude.to_string(),
                opt(row.cell.shift_at),
                s.seed.to_string(),
                opt(row.rank),
                opt(row.h),
                opt(e.map(|e| e.mean_rl)),
                opt(e.map(|e| e.std_err)),
                opt(e.map(|e| e.n_reps)),
                opt(e.map(|e| e.n_censored)),
                opt(e.map(|e| e.n_false_alarms)),
                opt(e.map(|e| e.max_len)),
                opt(e.map(|e| e.is_lower_bound())),
                row.error.clone().unwrap_or_default(),
            ];
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
    }

    /// Seeds, settings and software version for the CSV.
    pub fn sidecar_json(&self) -> String {
        let t = &self.spec.training;
        let doc = serde_json::json!({
            "tool": env!("CARGO_PKG_NAME"),
            "version": env!("CARGO_PKG_VERSION"),
            "n_reps": self.spec.n_reps,
            "max_len": self.spec.max_len,
            "censoring": self.spec.censoring,
            "training": {
                "n_frames": t.n_frames,
                "known_m0": t.known_m0,
                "q": t.options.q,
                "c": t.options.c,
                "target_arl0": t.options.target_arl0,
                "batch_m": t.options.batch_m,
            },
            "cells": self.rows.iter().map(|r| serde_json::json!({
                "seed": r.cell.scenario.seed,
                "shift_at": r.cell.shift_at,
                "scenario": r.cell.scenario,
            })).collect::<Vec<_>>(),
        });
        serde_json::to_string_pretty(&doc).expect("sidecar serialises")
    }

    /// Writes `path` and `path` + `.json`.
    pub fn write(&self, path: &Path) -> AppResult<()> {
        fs::write(path, self.to_csv()).at(path)?;
        let mut side = path.as_os_str().to_os_string();
        side.push(".json");
        let side = std::path::PathBuf::from(side);
        fs::write(&side, self.sidecar_json()).at(&side)
    }
}

type CachedCalibration = Result<(InControlModel, CalibrationParams), String>;

/// One ARL estimate per cell. Cells sharing an in-control setting share one
/// calibration. Failures are recorded in the row and the grid continues.
pub fn run_grid(spec: &GridSpec) -> GridReport {
    let mut calibrations: Vec<(ScenarioConfig, CachedCalibration)> = Vec::new();
    let mut rows = Vec::with_capacity(spec.cells.len());
    for cell in &spec.cells {
        let key = cell.calibration_key();
        let idx = match calibrations.iter().position(|(k, _)| *k == key) {
            Some(i) => i,
            None => {
                let cal =
                    key.prepare().and_then(|sc| calibrate_scenario(&sc, &spec.training)).map_err(|e| e.to_string());
                calibrations.push((key, cal));
                calibrations.len() - 1
            }
        };
        let mut row = GridRow { cell: cell.clone(), rank: None, h: None, estimate: None, error: None };
        match &calibrations[idx].1 {
            Err(e) => row.error = Some(e.clone()),
            Ok((model, params)) => {
                row.rank = Some(model.rank());
                row.h = Some(params.control_limit_h);
                let settings = ArlSettings {
                    n_reps: spec.n_reps,
                    max_len: spec.max_len,
                    shift_at: cell.shift_at,
                    censoring: spec.censoring,
                    first_replication: 0,
                };
                match cell.scenario.prepare().and_then(|sc| estimate_arl(&sc, model, params, &settings)) {
                    Ok(e) => row.estimate = Some(e),
                    Err(e) => row.error = Some(e.to_string()),
                }
            }
        }
        log::info!(
            "cell {} / {}: shift={} mean_rl={:?}",
            rows.len() + 1,
            spec.cells.len(),
            cell.scenario.shift,
            row.estimate.as_ref().map(|e| e.mean_rl)
        );
        rows.push(row);
    }
    GridReport { rows, spec: spec.clone() }
}

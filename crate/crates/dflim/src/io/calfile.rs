//! `dflim-cal-v1` calibration documents.

use std::fs;
use std::path::Path;

use dflim_core::calibration::CalibrationOptions;
use dflim_core::{CalibrationParams, DenseMatrix, InControlModel, ProjectionBasis};
use serde::{Deserialize, Serialize};

use crate::error::{AppResult, IoContext, ParseError};

pub const CAL_SCHEMA: &str = "dflim-cal-v1";

/// Preprocessing applied to raw frames before features are computed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Preprocessing {
    /// Consecutive differences `X_{t+1} - X_t`.
    pub diff: bool,
    /// Patch side for the patch rearrangement.
    pub patch: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub n_frames: usize,
    pub q: f64,
    pub c: f64,
    pub batch_m: usize,
    pub target_arl0: f64,
    /// True when `M0` was supplied rather than estimated.
    pub m0_supplied: bool,
    pub seed: Option<u64>,
    pub source: Option<String>,
}

impl Provenance {
    pub fn new(n_frames: usize, opts: &CalibrationOptions, seed: Option<u64>, source: Option<String>) -> Self {
        Self {
            n_frames,
            q: opts.q,
            c: opts.c,
            batch_m: opts.batch_m,
            target_arl0: opts.target_arl0,
            m0_supplied: opts.m0_override.is_some(),
            seed,
            source,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDoc {
    m0: DenseMatrix,
    rank: usize,
    lambda: Vec<f64>,
    u: DenseMatrix,
    v: DenseMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamsDoc {
    mu0: Vec<f64>,
    cov0: DenseMatrix,
    cov0_chol: DenseMatrix,
    sigma_t: f64,
    t_mean: f64,
    omega0_sq: f64,
    c: f64,
    target_arl0: f64,
    control_limit_h: f64,
    batch_size_m: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CalDoc {
    schema: String,
    model: ModelDoc,
    params: ParamsDoc,
    preprocessing: Preprocessing,
    provenance: Provenance,
}

/// Everything a monitor run needs.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationFile {
    pub model: InControlModel,
    pub params: CalibrationParams,
    pub preprocessing: Preprocessing,
    pub provenance: Provenance,
}

impl CalibrationFile {
    pub fn to_json(&self) -> String {
        let b = self.model.basis();
        let p = &self.params;
        let doc = CalDoc {
            schema: CAL_SCHEMA.into(),
            model: ModelDoc {
                m0: self.model.m0().clone(),
                rank: b.rank(),
                lambda: b.lambda().to_vec(),
                u: b.u().clone(),
                v: b.v().clone(),
            },
            params: ParamsDoc {
                mu0: p.mu0.clone(),
                cov0: p.cov0.clone(),
                cov0_chol: p.cov0_chol.clone(),
                sigma_t: p.sigma_t,
                t_mean: p.t_mean,
                omega0_sq: p.omega0_sq,
                c: p.c,
                target_arl0: p.target_arl0,
                control_limit_h: p.control_limit_h,
                batch_size_m: p.batch_size_m,
            },
            preprocessing: self.preprocessing,
            provenance: self.provenance.clone(),
        };
        serde_json::to_string_pretty(&doc).expect("calibration document serialises")
    }

    pub fn from_json(text: &str, path: &Path) -> AppResult<Self> {
        let doc: CalDoc =
            serde_json::from_str(text).map_err(|e| ParseError::at_row(path, e.line() as u64, e.to_string()))?;
        if doc.schema != CAL_SCHEMA {
            return Err(ParseError::whole(path, format!("schema `{}`, expected `{CAL_SCHEMA}`", doc.schema)).into());
        }
        let invalid = |e: dflim_core::Error| ParseError::whole(path, e.to_string());
        if doc.model.rank != doc.model.lambda.len() {
            return Err(ParseError::whole(path, "model rank disagrees with the number of singular values").into());
        }
        let basis = ProjectionBasis::new(doc.model.lambda, doc.model.u, doc.model.v).map_err(invalid)?;
        let model = InControlModel::new(doc.model.m0, basis).map_err(invalid)?;
        let p = doc.params;
        let params = CalibrationParams {
            mu0: p.mu0,
            cov0: p.cov0,
            cov0_chol: p.cov0_chol,
            sigma_t: p.sigma_t,
            t_mean: p.t_mean,
            omega0_sq: p.omega0_sq,
            c: p.c,
            target_arl0: p.target_arl0,
            control_limit_h: p.control_limit_h,
            batch_size_m: p.batch_size_m,
        };
        params.validate().map_err(invalid)?;
        if params.mu0.len() != 2 * model.rank() {
            return Err(ParseError::whole(path, "feature dimension is not twice the model rank").into());
        }
        Ok(Self { model, params, preprocessing: doc.preprocessing, provenance: doc.provenance })
    }

    pub fn load(path: &Path) -> AppResult<Self> {
        let text = fs::read_to_string(path).at(path)?;
        Self::from_json(&text, path)
    }

    pub fn save(&self, path: &Path) -> AppResult<()> {
        fs::write(path, self.to_json()).at(path)
    }
}

impl Preprocessing {
    /// Differencing first, then patching each frame.
    pub fn apply(&self, frames: Vec<DenseMatrix>) -> dflim_core::Result<Vec<DenseMatrix>> {
        let frames = if self.diff { dflim_core::preprocess::diff_frames(&frames)? } else { frames };
        match self.patch {
            Some(b) => frames.iter().map(|f| dflim_core::preprocess::patch_transform(f, b)).collect(),
            None => Ok(frames),
        }
    }
}

//! Command-line interface.

mod selftest;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use dflim_core::calibration::{calibrate, CalibrationOptions, DEFAULT_BATCH_M, DEFAULT_C, DEFAULT_Q};
use dflim_core::cusum::run_traced;
use dflim_core::simulate::{Background, CovKind, NoiseDist, ScenarioConfig, ShiftKind};

use crate::error::{AppError, AppResult};
use crate::harness::{run_grid, thread_pool, Censoring, GridCell, GridSpec, TrainingSpec};
use crate::io::manifest::manifest_path_for;
use crate::io::trace::{write_alarms, TraceWriter};
use crate::io::{
    load_scenario, read_frames, save_scenario, CalibrationFile, FrameFormat, MseqWriter, Preprocessing, Provenance,
    RunManifest,
};

#[derive(Debug, Parser)]
#[command(name = "dflim", version, about = "Distribution-free CUSUM monitoring of low-rank image streams")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate the in-control model and control limit from training frames.
    Calibrate(CalibrateArgs),
    /// Run the CUSUM over a frame sequence and export the trace and alarms.
    Monitor(MonitorArgs),
    /// Write a synthetic sequence described by a dflim-scn-v1 file.
    Simulate(SimulateArgs),
    /// Monte Carlo ARL estimates over a grid of synthetic settings.
    ArlTable(ArlTableArgs),
    /// Run the built-in example checks.
    Selftest(SelftestArgs),
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// Training frames (in control).
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t)]
    pub format: FrameFormat,
    /// Output dflim-cal-v1 JSON.
    #[arg(long)]
    pub out: PathBuf,
    /// Known in-control mean (single-frame MSEQ) instead of the training average.
    #[arg(long)]
    pub m0: Option<PathBuf>,
    /// Energy fraction for rank selection.
    #[arg(long, default_value_t = DEFAULT_Q)]
    pub q: f64,
    /// Drift allowance in units of sigma_T.
    #[arg(long, default_value_t = DEFAULT_C)]
    pub c: f64,
    #[arg(long, default_value_t = 200.0)]
    pub target_arl0: f64,
    /// Batch size of the long-run variance estimator.
    #[arg(long, default_value_t = DEFAULT_BATCH_M)]
    pub batch_m: usize,
    /// Difference consecutive frames first.
    #[arg(long)]
    pub diff: bool,
    /// Rearrange each frame into b x b patches: tiles are scanned row by row
    /// and each tile becomes one column, read column-major.
    #[arg(long, value_name = "B")]
    pub patch: Option<usize>,
    /// Seed recorded in the provenance (for synthetic input).
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MonitorArgs {
    #[arg(long)]
    pub calibration: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t)]
    pub format: FrameFormat,
    /// Per-step CSV: t, T_t, S_t, alarm.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[arg(long)]
    pub alarms: PathBuf,
    /// Stop at the first alarm instead of resetting and continuing.
    #[arg(long)]
    pub no_restart: bool,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// dflim-scn-v1 scenario file.
    #[arg(long, required_unless_present = "template")]
    pub scenario: Option<PathBuf>,
    /// Output MSEQ file.
    #[arg(long, required_unless_present = "template")]
    pub out: Option<PathBuf>,
    /// Write a baseline scenario file here and exit.
    #[arg(long, value_name = "PATH", conflicts_with_all = ["scenario", "out"])]
    pub template: Option<PathBuf>,
    /// Overrides the scenario seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 0)]
    pub replication: u64,
    /// 1-based index of the first shifted frame (default: no shift).
    #[arg(long)]
    pub shift_at: Option<u64>,
    /// Overrides the scenario length.
    #[arg(long)]
    pub length: Option<usize>,
    /// Also write the true in-control mean as a single-frame MSEQ.
    #[arg(long, value_name = "PATH")]
    pub write_mean: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Profile {
    /// 100 x 200 frames.
    Full,
    /// 40 x 80 frames.
    Fast,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DistArg {
    Normal,
    Exp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CovArg {
    Tri,
    Exp,
}

#[derive(Debug, Args)]
pub struct ArlTableArgs {
    #[arg(long, value_enum, default_value = "full")]
    pub profile: Profile,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "normal")]
    pub dist: Vec<DistArg>,
    /// Background ranks (2 or 5).
    #[arg(long, value_delimiter = ',', default_value = "2")]
    pub rank: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "5")]
    pub lag: Vec<usize>,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "tri")]
    pub cov: Vec<CovArg>,
    /// Shift patterns; `none` gives in-control rows.
    #[arg(long, value_delimiter = ',', default_value = "none")]
    pub shifts: Vec<ShiftKind>,
    #[arg(long, default_value_t = 1.0)]
    pub amplitude: f64,
    #[arg(long, default_value_t = 1)]
    pub shift_at: u64,
    #[arg(long, default_value_t = 300)]
    pub reps: u64,
    #[arg(long, default_value_t = 800)]
    pub max_len: u64,
    #[arg(long, default_value_t = 400)]
    pub train: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_C)]
    pub c: f64,
    #[arg(long, default_value_t = DEFAULT_Q)]
    pub q: f64,
    #[arg(long, default_value_t = 200.0)]
    pub target_arl0: f64,
    #[arg(long, default_value_t = DEFAULT_BATCH_M)]
    pub batch_m: usize,
    /// Estimate M0 from the training frames instead of using the true one.
    #[arg(long)]
    pub estimate_m0: bool,
    /// Leave censored runs out of the mean instead of counting them at max_len.
    #[arg(long)]
    pub exclude_censored: bool,
    /// Report CSV; a JSON sidecar is written next to it.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SelftestArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

pub fn run(cli: Cli) -> AppResult<()> {
    match cli.command {
        Command::Calibrate(a) => cmd_calibrate(&a),
        Command::Monitor(a) => cmd_monitor(&a),
        Command::Simulate(a) => cmd_simulate(&a),
        Command::ArlTable(a) => cmd_arl_table(&a),
        Command::Selftest(a) => cmd_selftest(&a),
    }
}

fn finish_manifest(m: RunManifest, explicit: &Option<PathBuf>, primary: &Path) -> AppResult<()> {
    let path = explicit.clone().unwrap_or_else(|| manifest_path_for(primary));
    m.write(&path)
}

pub fn cmd_calibrate(a: &CalibrateArgs) -> AppResult<()> {
    let mut manifest = RunManifest::start("calibrate");
    manifest.config_path = Some(a.input.clone());
    manifest.seed = a.seed;
    let pre = Preprocessing { diff: a.diff, patch: a.patch };
    let frames = pre.apply(read_frames(&a.input, a.format)?)?;
    let m0_override = match &a.m0 {
        Some(p) => {
            let mut m = crate::io::read_mseq(p)?;
            if m.len() != 1 {
                return Err(AppError::Usage(format!("{} must hold exactly one frame, found {}", p.display(), m.len())));
            }
            Some(m.remove(0))
        }
        None => None,
    };
    let opts = CalibrationOptions { m0_override, q: a.q, c: a.c, target_arl0: a.target_arl0, batch_m: a.batch_m };
    let (model, params) = calibrate(&frames, &opts)?;
    log::info!("rank {} control limit {}", model.rank(), params.control_limit_h);
    let file = CalibrationFile {
        provenance: Provenance::new(frames.len(), &opts, a.seed, Some(a.input.display().to_string())),
        model,
        params,
        preprocessing: pre,
    };
    file.save(&a.out)?;
    manifest.outputs.push(a.out.clone());
    finish_manifest(manifest, &a.manifest, &a.out)
}

pub fn cmd_monitor(a: &MonitorArgs) -> AppResult<()> {
    let mut manifest = RunManifest::start("monitor");
    manifest.calibration_path = Some(a.calibration.clone());
    manifest.config_path = Some(a.input.clone());
    let cal = CalibrationFile::load(&a.calibration)?;
    let frames = cal.preprocessing.apply(read_frames(&a.input, a.format)?)?;
    let config = cal.params.monitor_config()?;
    let mut trace = a.trace.as_deref().map(|p| TraceWriter::create(p, &config)).transpose()?;
    let mut sink_err = None;
    let alarms = run_traced(&frames, &cal.model, &cal.params, !a.no_restart, |rec| {
        if let (Some(t), None) = (trace.as_mut(), &sink_err) {
            if let Err(e) = t.record(rec) {
                sink_err = Some(e);
            }
        }
    })?;
    if let Some(e) = sink_err {
        return Err(e);
    }
    if let Some(t) = trace {
        t.finish()?;
        manifest.outputs.push(a.trace.clone().expect("trace path set"));
    }
    write_alarms(&a.alarms, &alarms)?;
    manifest.outputs.push(a.alarms.clone());
    match alarms.first() {
        Some(first) => log::info!("{} alarm(s), first at frame {}", alarms.len(), first.time),
        None => log::info!("no alarm in {} frames", frames.len()),
    }
    finish_manifest(manifest, &a.manifest, &a.alarms)
}

pub fn cmd_simulate(a: &SimulateArgs) -> AppResult<()> {
    if let Some(path) = &a.template {
        return save_scenario(&ScenarioConfig::baseline(100, 200), path);
    }
    let (Some(scn_path), Some(out)) = (&a.scenario, &a.out) else {
        return Err(AppError::Usage("--scenario and --out are required".into()));
    };
    let mut manifest = RunManifest::start("simulate");
    manifest.config_path = Some(scn_path.clone());
    let mut cfg = load_scenario(scn_path)?;
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    if let Some(len) = a.length {
        cfg.length = len;
    }
    manifest.seed = Some(cfg.seed);
    let sc = cfg.prepare()?;
    let mut w = MseqWriter::create(out, cfg.p1, cfg.p2, cfg.length)?;
    for frame in sc.generator(a.replication, a.shift_at) {
        w.write_frame(&frame)?;
    }
    w.finish()?;
    manifest.outputs.push(out.clone());
    if let Some(path) = &a.write_mean {
        crate::io::write_mseq(std::slice::from_ref(sc.m0()), path)?;
        manifest.outputs.push(path.clone());
    }
    finish_manifest(manifest, &a.manifest, out)
}

fn grid_cells(a: &ArlTableArgs) -> AppResult<Vec<GridCell>> {
    let (p1, p2) = match a.profile {
        Profile::Full => (100, 200),
        Profile::Fast => (40, 80),
    };
    let mut cells = Vec::new();
    for &dist in &a.dist {
        for &rank in &a.rank {
            let background = match rank {
                2 => Background::Chessboard2,
                5 => Background::Chessboard2PlusRank3,
                other => return Err(AppError::Usage(format!("background rank must be 2 or 5, got {other}"))),
            };
            for &lag in &a.lag {
                for &cov in &a.cov {
                    let kind = match cov {
                        CovArg::Tri => CovKind::TriDiagonal,
                        CovArg::Exp => CovKind::Exponential,
                    };
                    let mut s = ScenarioConfig::baseline(p1, p2).with_cov(kind);
                    s.noise.dist = match dist {
                        DistArg::Normal => NoiseDist::Normal,
                        DistArg::Exp => NoiseDist::ExpTransformed,
                    };
                    s.background = background;
                    s.temporal.lag = lag;
                    s.amplitude = a.amplitude;
                    s.seed = a.seed;
                    for &shift in &a.shifts {
                        cells.push(match shift {
                            ShiftKind::None => GridCell::in_control(s.clone()),
                            k => GridCell::shifted(s.clone(), k, a.shift_at),
                        });
                    }
                }
            }
        }
    }
    Ok(cells)
}

pub fn cmd_arl_table(a: &ArlTableArgs) -> AppResult<()> {
    let mut manifest = RunManifest::start("arl-table");
    manifest.seed = Some(a.seed);
    let spec = GridSpec {
        cells: grid_cells(a)?,
        n_reps: a.reps,
        max_len: a.max_len,
        censoring: if a.exclude_censored { Censoring::Exclude } else { Censoring::IncludeAtMaxLen },
        training: TrainingSpec {
            n_frames: a.train,
            options: CalibrationOptions {
                m0_override: None,
                q: a.q,
                c: a.c,
                target_arl0: a.target_arl0,
                batch_m: a.batch_m,
            },
            known_m0: !a.estimate_m0,
        },
    };
    let report = thread_pool()?.install(|| run_grid(&spec));
    report.write(&a.out)?;
    for row in &report.rows {
        if let Some(e) = &row.error {
            log::warn!("cell with shift {} failed: {e}", row.cell.scenario.shift);
        }
        if row.estimate.as_ref().is_some_and(|e| e.is_lower_bound()) {
            log::warn!("cell with shift {} has censored runs; its mean is a lower bound", row.cell.scenario.shift);
        }
    }
    manifest.outputs.push(a.out.clone());
    finish_manifest(manifest, &a.manifest, &a.out)
}

pub fn cmd_selftest(a: &SelftestArgs) -> AppResult<()> {
    let manifest = RunManifest::start("selftest");
    let results = selftest::run_all();
    let mut failed = 0;
    for (name, ok) in &results {
        println!("{} {name}", if *ok { "PASS" } else { "FAIL" });
        failed += usize::from(!ok);
    }
    println!("{} passed, {failed} failed", results.len() - failed);
    if let Some(p) = &a.manifest {
        manifest.write(p)?;
    }
    if failed > 0 {
        return Err(AppError::Domain(dflim_core::Error::NumericalFailure(format!(
            "{failed} selftest check(s) failed"
        ))));
    }
    Ok(())
}

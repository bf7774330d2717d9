//! Per-step trace and alarm CSV files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use dflim_core::{AlarmEvent, MonitorConfig, StepRecord};

use crate::error::{AppResult, IoContext};

/// Trace CSV: comment lines with the drift and control limit, then
/// `t,t_stat,s,alarm` rows.
pub struct TraceWriter {
    path: PathBuf,
    inner: BufWriter<File>,
}

impl TraceWriter {
    pub fn create(path: &Path, config: &MonitorConfig) -> AppResult<Self> {
        let mut inner = BufWriter::new(File::create(path).at(path)?);
        writeln!(inner, "# drift={}", config.drift).at(path)?;
        writeln!(inner, "# control_limit_h={}", config.control_limit_h).at(path)?;
        writeln!(inner, "t,t_stat,s,alarm").at(path)?;
        Ok(Self { path: path.to_path_buf(), inner })
    }

    pub fn record(&mut self, r: &StepRecord) -> AppResult<()> {
        writeln!(self.inner, "{},{},{},{}", r.t, r.t_stat, r.s, u8::from(r.alarm)).at(&self.path)
    }

    pub fn finish(mut self) -> AppResult<()> {
        self.inner.flush().at(&self.path)
    }
}

pub fn write_alarms(path: &Path, alarms: &[AlarmEvent]) -> AppResult<()> {
    let mut w = BufWriter::new(File::create(path).at(path)?);
    writeln!(w, "alarm,time,s_at_alarm").at(path)?;
    for (i, a) in alarms.iter().enumerate() {
        writeln!(w, "{},{},{}", i + 1, a.time, a.s_at_alarm).at(path)?;
    }
    w.flush().at(path)
}

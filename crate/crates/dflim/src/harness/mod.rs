//! Monte Carlo estimation of run lengths and empirical checks of the
//! feature-shift results.

mod arl;
mod grid;
mod shift_checks;

pub use arl::{calibrate_scenario, estimate_arl, ArlEstimate, ArlSettings, Censoring, TrainingSpec};
pub use grid::{run_grid, GridCell, GridReport, GridRow, GridSpec};
pub use shift_checks::{empirical_shift_checks, ShiftCheck, ShiftReport};

use crate::error::{AppError, AppResult};

/// Environment variable capping harness threads.
pub const THREADS_ENV: &str = "DFLIM_THREADS";

/// Thread pool sized by `DFLIM_THREADS` (default: rayon's choice).
pub fn thread_pool() -> AppResult<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| AppError::Usage(format!("{THREADS_ENV} must be a positive integer, got `{v}`")))?;
        b = b.num_threads(n);
    }
    b.build().map_err(|e| AppError::Usage(format!("cannot start thread pool: {e}")))
}

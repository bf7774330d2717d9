//! Files, Monte Carlo harness and command-line frontend for [`dflim_core`].

pub mod cli;
pub mod error;
pub mod harness;
pub mod io;

pub use error::{AppError, AppResult, ParseError};

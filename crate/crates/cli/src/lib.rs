//! Scenario files, delay-mode studies and the `taskalloc` command set.

pub mod app;
pub mod delay;
pub mod error;
pub mod file;
pub mod format;

pub use app::{run, Cli};
pub use delay::{poa_in_mode, solve_in_mode, sweep_in_mode, DelayMode, ModeAllocation, SweepRow};
pub use error::{CliError, Result};
pub use file::ScenarioFile;

//! Batch front end: CSV file formats, `key=value` run configuration and the
//! `run`, `make-testcase` and `diagnose` pipelines behind the `dsi` binary.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
//! failure.

mod app;
pub mod config;
pub mod io;
mod pipeline;

pub use app::{command, main_with_args};
pub use config::{EmitFlags, KeyValues, Method, RunConfig, RUN_KEYS};
pub use io::load_inputs;
pub use pipeline::{diagnose, make_testcase, run, DiagnoseRequest, DiagnoseSummary, RunSummary, TestCase, MANIFEST_FILE};

//! Scenario runner, report emitter and built-in corpus for `fraclab-core`.

pub mod corpus;
pub mod report;
pub mod scenario;

pub use report::{emit_report, Format, ReportBundle};
pub use scenario::{parse_scenario, run_scenario, RunOptions, Scenario};

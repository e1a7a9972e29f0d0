//! Configuration, replication studies and file output behind the `segproc`
//! command line tool.

pub mod config;
pub mod residuals;
pub mod study;

pub use config::{ModelKind, ModelSpec, RawConfig, StudySpec};
pub use study::{run_study, StudyReport};

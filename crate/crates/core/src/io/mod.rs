//! Run configuration, snapshots and task orchestration for the command-line tool.

pub mod config;
pub mod run;
pub mod snapshot;

pub use config::{parse_config, RunConfig, Task};
pub use run::{run, RunManifest, RunStatus};
pub use snapshot::{read_snapshot, write_snapshot, Snapshot};

//! Command-line front end and the on-disk formats of a run: config, metrics,
//! checkpoints, record files, plots and the run manifest.

pub mod checkpoint;
pub mod cli;
pub mod config_io;
pub mod manifest;
pub mod metrics_io;
pub mod plot;
pub mod records;

pub use checkpoint::{Checkpoint, FORMAT_VERSION};
pub use cli::cli_main;
pub use config_io::{load_config, parse_config, save_config};
pub use manifest::{layout, RunManifest};
pub use metrics_io::{metrics_to_string, parse_metrics, read_metrics, write_metrics, METRICS_HEADER};
pub use plot::{moving_average, render_svg};
pub use records::{
    collect_latents, read_demos, read_latents, write_demos, write_latents, LatentRecord, PhaseTag, RecordHeader,
};

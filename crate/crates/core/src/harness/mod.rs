//! Configuration, dataset persistence and experiment orchestration.

mod config;
mod dataset;
mod pipeline;
mod style_mix;

use std::path::{Path, PathBuf};

pub use config::{apply_override, EvalConfig, ExperimentConfig, ObjectsConfig, SignalConfig};
pub use dataset::{
    calibrate_signal, detection_task, simulate_dataset, Dataset, DatasetManifest, Domain, Dtype, SimulatedDataset,
    MANIFEST_FILE, MANIFEST_VERSION,
};
pub use pipeline::{
    archive_config, ensemble_snr, evaluate_checkpoint, evaluate_run, fid_per_axis, final_checkpoint, high_band_power,
    load_sampler, mode_dir, run_pipeline, sample_generator, summarize_fields, summarize_generator, summarize_truth,
    train_mode, AxisFid, EnsembleSummary, GroundTruthRow, ModelRow, Report, CONFIG_FILE, REPORT_FILE, REPORT_VERSION,
};
pub use style_mix::{
    grid_dimensions, render_grid, style_mix_fields, style_mix_grid, style_stats, GridMeta, StyleGrid, StyleMixOptions,
    StyleStats, GUTTER,
};

/// Environment variable naming the directory relative output paths live in.
pub const RUN_ROOT_ENV: &str = "AMBIENTSOM_RUN_ROOT";

/// The run root: `$AMBIENTSOM_RUN_ROOT`, or the working directory.
pub fn run_root() -> PathBuf {
    std::env::var_os(RUN_ROOT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("."))
}

/// Resolves a relative path against the run root.
pub fn resolve(path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        run_root().join(path)
    }
}

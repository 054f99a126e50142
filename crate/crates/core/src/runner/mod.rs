//! Experiment orchestration: configuration, the training loop, logs,
//! checkpoints and offline metric replay.

mod config;
mod experiment;
mod listing;
mod logs;
mod probe;
mod replay;
mod sweep;

pub use config::{
    load_config, parse_config, resolve, Algo, ExperimentConfig, LoggingConfig, NetworkConfig, RawConfig,
    ScenarioConfig, SupervisedConfig,
};
pub use experiment::{
    expected_firings, expected_gradient_steps, run_dir, run_experiment, RETURN_WINDOW, STREAM_ACTION, STREAM_ENV,
    STREAM_EVAL, STREAM_INIT, STREAM_MITIGATION, STREAM_UPDATE,
};
pub use listing::{list_methods_json, list_methods_text};
pub use logs::{
    read_metrics, read_summary, DivergenceRecord, FiringRecord, RunArtifacts, RunSummary, CHECKPOINT_DIR,
    CONFIG_FILE, EPISODES_FILE, METRICS_FILE, SUMMARY_FILE,
};
pub use probe::{ProbeSpec, PROBE_STREAM};
pub use replay::{replay_metrics, Replay};
pub use sweep::{parse_seed_range, sweep};

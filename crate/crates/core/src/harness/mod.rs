//! Experiment plumbing behind the `zlin` binary: architecture strings, TOML configs,
//! checkpoints, metrics files, the training loop and the commands.

mod arch;
mod checkpoint;
mod config;
mod metrics;
mod run;
mod train;

pub use arch::parse_architecture;
pub use checkpoint::{
    checkpoint_precision, decode_network, encode_network, load_network, save_network,
    CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use config::{
    DataConfig, DataSource, EvalConfig, ExperimentConfig, GradcheckConfig, Overrides,
    PretrainConfig, ProbeConfig, TrainConfig,
};
pub use metrics::{metrics_header, MetricsRow, MetricsWriter, Split};
pub use run::{run, Command, Outcome};
pub use train::{
    evaluate, head_index, insert_dropout, load_splits, optimizer, prepare, prepare_with, stream,
    train_network, EpochReport, Evaluation, Prepared, Stream,
};

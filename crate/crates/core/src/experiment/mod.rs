//! Training runs, metrics and sweeps over MNIST.

pub mod config;
mod metrics;
pub mod report;
mod run;
pub mod sweep;

pub use config::{Bound, ConfigError, ExperimentConfig};
pub use metrics::{accuracy_of, evaluate, evaluate_with_sparsity, hidden_sparsity, WeightHistogram};
pub use run::{
    default_data_dir, load_datasets, network_from_snapshot, resolved_network_config, prepare, train, train_network, EpochMetrics, ExperimentRecord,
    Prepared, TrainError, INPUTS, OUTPUTS,
};
pub use sweep::{run_sweep, CellResult, SweepMode, SweepSpec};

//! Federated logistic-regression training simulator.

pub mod data;
pub mod model;
pub mod train;

pub use data::{
    load_mnist, load_mnist_dir, partition, partition_with, synthetic_dataset, synthetic_split, Dataset,
    PartitionScheme, Split, MNIST_CLASSES, MNIST_FEATURES,
};
pub use model::{evaluate, Evaluation, LogisticRegression};
pub use train::{
    local_update, ps_update, run_training, write_metrics_csv, LocalUpdate, RoundMetrics, Simulation, TrainConfig,
};

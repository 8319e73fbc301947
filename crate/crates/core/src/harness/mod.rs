//! Experiment orchestration: configuration, dataset construction, pipeline
//! stages, metrics reporting and the layer sweep.

pub mod check;
pub mod config;
pub mod data;
pub mod metrics;
pub mod stages;
pub mod sweep;

pub use config::ExperimentConfig;
pub use data::{evaluated_pairs, generate_data, DataBundle, LangPair, PairTasks, PsmSet};
pub use metrics::{read_canonical, write_canonical, MetricsRecord};
pub use stages::{run_experiment, Pipeline, System};

//! Data files, synthetic data, training, evaluation and gradient checks
//! around `stgcn-core`.

pub mod bench;
pub mod config;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod synthetic;
pub mod train;

pub use config::{resolve_topology, ModelSettings, RunConfig};
pub use dataset::{read_sequence_file, write_sequence_file, Dataset, Sample};
pub use error::{HarnessError, Result};
pub use eval::{evaluate, predict, EvalReport};
pub use synthetic::{class_templates, generate_synthetic, SyntheticSpec};
pub use train::{train, History, LrSchedule, NesterovSgd, TrainConfig};

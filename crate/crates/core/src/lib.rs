//! Spatial-temporal graph convolution on skeleton sequences, with an
//! inter-frame extension stage that lets each joint read its graph
//! neighbors on the previous frame.
//!
//! * [`topology`]: skeleton graphs, hop distances, subset partitions.
//! * [`tensor`]: dense values and forward kernels.
//! * [`tape`]: reverse-mode differentiation over those kernels.
//! * [`layers`]: spatial, inter-frame and temporal convolutions, the model.
//! * [`checkpoint`]: binary parameter container.

pub mod checkpoint;
pub mod error;
pub mod layers;
pub mod tape;
pub mod tensor;
pub mod topology;

pub use checkpoint::Checkpoint;
pub use error::{Error, Result};
pub use layers::{
    layer_forward, loss_and_gradients, loss_only, model_forward, model_logits, spatial_gcn,
    tem_forward, ClassifierParams, LayerParams, LayerSpec, Model, ModelConfig, ModelParams,
    Partitions, SampleGradients, SubsetWeights, TemMode,
};
pub use tape::{Gradients, Tape, Value, VarId};
pub use tensor::{FeatureTensor, Matrix, TemporalKernel};
pub use topology::{
    build_spatial_partition, build_temporal_partition, normalize_partition, path_distance,
    HopDistanceTable, PartitionKind, PartitionedAdjacency, SkeletonTopology,
};

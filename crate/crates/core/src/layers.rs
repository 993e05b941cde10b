//! Spatial graph convolution, the inter-frame extension module, temporal
//! convolution and the classifier head.
//!
//! One layer runs
//!
//! ```text
//! out = relu(conv_time(tem(relu(spatial(x))), kernel, stride))
//! ```
//!
//! where `spatial` mixes each frame over the intra-frame partition,
//! `tem` mixes frame `t - 1` over the inter-frame partition into frame `t`,
//! and `conv_time` is a zero-padded `size x 1` convolution along time.
//!
//! Every forward path records onto a [`Tape`], so inference and training
//! evaluate the exact same arithmetic.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{mismatch, Error, Result};
use crate::tape::{Gradients, Tape, Value, VarId};
use crate::tensor::{softmax, FeatureTensor, Matrix, TemporalKernel};
use crate::topology::{
    build_spatial_partition, build_temporal_partition, path_distance, PartitionedAdjacency,
    SkeletonTopology, SUBSET_COUNT,
};

/// Default temporal kernel size.
pub const DEFAULT_KERNEL_SIZE: usize = 9;

/// How the inter-frame stage combines with the current frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TemMode {
    /// `out_t = in_t + g_t`
    Residual,
    /// `out_t = g_t`
    Replace,
}

impl TemMode {
    pub fn as_str(self) -> &'static str {
        match self {
            TemMode::Residual => "residual",
            TemMode::Replace => "replace",
        }
    }
}

impl std::str::FromStr for TemMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "residual" => Ok(TemMode::Residual),
            "replace" => Ok(TemMode::Replace),
            other => Err(Error::InvalidConfig(format!("unknown TEM mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpec {
    pub out_channels: usize,
    pub stride: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub in_channels: usize,
    pub layers: Vec<LayerSpec>,
    pub class_count: usize,
    pub kernel_size: usize,
    pub spatial_hop: usize,
    pub temporal_hop: usize,
    /// `None` builds the stack without the inter-frame stage.
    pub tem: Option<TemMode>,
    /// Identity skip around a layer when its input and output shapes match.
    pub residual: bool,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            in_channels: 3,
            layers: vec![
                LayerSpec {
                    out_channels: 16,
                    stride: 1,
                },
                LayerSpec {
                    out_channels: 16,
                    stride: 1,
                },
            ],
            class_count: 4,
            kernel_size: DEFAULT_KERNEL_SIZE,
            spatial_hop: 1,
            temporal_hop: 1,
            tem: Some(TemMode::Residual),
            residual: false,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if self.kernel_size.is_multiple_of(2) {
            return Err(Error::EvenKernel(self.kernel_size));
        }
        if self.layers.is_empty() {
            return bad("at least one layer is required");
        }
        if self.in_channels == 0 || self.layers.iter().any(|l| l.out_channels == 0) {
            return bad("channel widths must be positive");
        }
        if self.layers.iter().any(|l| l.stride == 0) {
            return Err(Error::ZeroStride);
        }
        if self.class_count == 0 {
            return bad("class_count must be positive");
        }
        if self.spatial_hop == 0 || self.temporal_hop == 0 {
            return Err(Error::InvalidMaxHop);
        }
        Ok(())
    }

    pub fn final_channels(&self) -> usize {
        self.layers.last().map_or(self.in_channels, |l| l.out_channels)
    }
}

/// Weight pair for one subset: `W_k` projects channels, `M_k` rescales
/// individual graph edges.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsetWeights {
    pub weights: Matrix,
    pub edge_scale: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub spatial: Vec<SubsetWeights>,
    /// Inter-frame stage; `None` removes it from the layer.
    pub tem: Option<Vec<SubsetWeights>>,
    pub tem_mode: TemMode,
    pub kernel: TemporalKernel,
    pub bias: Vec<f64>,
    pub stride: usize,
    pub skip: bool,
}

impl LayerParams {
    pub fn in_channels(&self) -> usize {
        self.spatial[0].weights.rows()
    }

    pub fn out_channels(&self) -> usize {
        self.kernel.c_out()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierParams {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub layers: Vec<LayerParams>,
    pub head: ClassifierParams,
}

/// Name, dimensions and values of one learnable tensor.
#[derive(Debug, Clone, Copy)]
pub struct ParamView<'a> {
    pub name: &'a str,
    pub values: &'a [f64],
}

fn uniform_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, fan_in: usize, fan_out: usize) -> Matrix {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.random_range(-bound..=bound)).collect();
    Matrix::from_vec(rows, cols, data).expect("length matches")
}

fn init_subsets(rng: &mut ChaCha8Rng, joints: usize, c_in: usize, c_out: usize) -> Vec<SubsetWeights> {
    (0..SUBSET_COUNT)
        .map(|_| SubsetWeights {
            weights: uniform_matrix(rng, c_in, c_out, c_in, c_out),
            edge_scale: Matrix::ones(joints, joints),
        })
        .collect()
}

impl ModelParams {
    /// Seeded initialization: edge scales start at one, weights are drawn
    /// uniformly from `[-s, s]` with `s = sqrt(6 / (fan_in + fan_out))`,
    /// biases start at zero.
    pub fn init(config: &ModelConfig, joints: usize) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut c_in = config.in_channels;
        let mut layers = Vec::with_capacity(config.layers.len());
        for spec in &config.layers {
            let c_out = spec.out_channels;
            let spatial = init_subsets(&mut rng, joints, c_in, c_out);
            let tem = config
                .tem
                .map(|_| init_subsets(&mut rng, joints, c_out, c_out));
            let size = config.kernel_size;
            let kernel = uniform_matrix(&mut rng, size * c_out, c_out, size * c_out, size * c_out);
            layers.push(LayerParams {
                spatial,
                tem,
                tem_mode: config.tem.unwrap_or(TemMode::Residual),
                kernel: TemporalKernel::from_vec(size, c_out, c_out, kernel.into_vec())?,
                bias: vec![0.0; c_out],
                stride: spec.stride,
                skip: config.residual && spec.stride == 1 && c_in == c_out,
            });
            c_in = c_out;
        }
        let head = ClassifierParams {
            weights: uniform_matrix(&mut rng, c_in, config.class_count, c_in, config.class_count),
            bias: vec![0.0; config.class_count],
        };
        Ok(Self { layers, head })
    }

    pub fn class_count(&self) -> usize {
        self.head.bias.len()
    }

    /// Every learnable tensor in a fixed order: per layer the spatial
    /// subsets, the inter-frame subsets, the temporal kernel and bias; then
    /// the classifier.
    pub fn named_params(&self) -> Vec<(String, Value)> {
        let mut out = Vec::new();
        for (l, layer) in self.layers.iter().enumerate() {
            for (k, s) in layer.spatial.iter().enumerate() {
                out.push((format!("layers.{l}.spatial.{k}.w"), Value::Matrix(s.weights.clone())));
                out.push((format!("layers.{l}.spatial.{k}.m"), Value::Matrix(s.edge_scale.clone())));
            }
            if let Some(tem) = &layer.tem {
                for (k, s) in tem.iter().enumerate() {
                    out.push((format!("layers.{l}.tem.{k}.w"), Value::Matrix(s.weights.clone())));
                    out.push((format!("layers.{l}.tem.{k}.m"), Value::Matrix(s.edge_scale.clone())));
                }
            }
            out.push((format!("layers.{l}.temporal.kernel"), Value::Kernel(layer.kernel.clone())));
            out.push((format!("layers.{l}.temporal.bias"), Value::Vector(layer.bias.clone())));
        }
        out.push(("head.w".into(), Value::Matrix(self.head.weights.clone())));
        out.push(("head.b".into(), Value::Vector(self.head.bias.clone())));
        out
    }

    /// Mutable views in the same order as [`ModelParams::named_params`].
    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for layer in &mut self.layers {
            for s in &mut layer.spatial {
                out.push(s.weights.data_mut());
                out.push(s.edge_scale.data_mut());
            }
            if let Some(tem) = &mut layer.tem {
                for s in tem {
                    out.push(s.weights.data_mut());
                    out.push(s.edge_scale.data_mut());
                }
            }
            out.push(layer.kernel.data_mut());
            out.push(&mut layer.bias);
        }
        out.push(self.head.weights.data_mut());
        out.push(&mut self.head.bias);
        out
    }

    pub fn param_count(&self) -> usize {
        self.named_params().iter().map(|(_, v)| v.data().len()).sum()
    }

    /// Zeroes every inter-frame channel projection `W_k^T`.
    pub fn zero_tem_weights(&mut self) {
        for layer in &mut self.layers {
            if let Some(tem) = &mut layer.tem {
                tem.iter_mut().for_each(|s| s.weights.data_mut().fill(0.0));
            }
        }
    }

    /// Copy with the inter-frame stage removed from every layer.
    pub fn without_tem(&self) -> Self {
        let mut out = self.clone();
        out.layers.iter_mut().for_each(|l| l.tem = None);
        out
    }

    /// Relabels joint `i` as `perm[i]` in every edge-scale matrix.
    pub fn permute_joints(&self, perm: &[usize]) -> Self {
        let mut out = self.clone();
        for layer in &mut out.layers {
            for s in layer.spatial.iter_mut().chain(layer.tem.iter_mut().flatten()) {
                s.edge_scale = s.edge_scale.permute_symmetric(perm);
            }
        }
        out
    }
}

/// Intra-frame and inter-frame partitions for one skeleton.
#[derive(Debug, Clone, PartialEq)]
pub struct Partitions {
    pub spatial: PartitionedAdjacency,
    pub temporal: PartitionedAdjacency,
}

impl Partitions {
    pub fn build(topology: &SkeletonTopology, spatial_hop: usize, temporal_hop: usize) -> Result<Self> {
        let dist = path_distance(topology)?;
        Ok(Self {
            spatial: build_spatial_partition(topology, spatial_hop, &dist)?,
            temporal: build_temporal_partition(topology, temporal_hop, &dist)?,
        })
    }

    pub fn joint_count(&self) -> usize {
        self.spatial.joint_count()
    }

    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        Ok(Self {
            spatial: self.spatial.permuted(perm)?,
            temporal: self.temporal.permuted(perm)?,
        })
    }
}

// ---------------------------------------------------------------------------
// Tape recording

struct SubsetVars {
    weights: VarId,
    edge_scale: VarId,
}

struct LayerVars {
    spatial: Vec<SubsetVars>,
    tem: Option<Vec<SubsetVars>>,
    kernel: VarId,
    bias: VarId,
}

/// Parameter leaves of a model recorded on a tape, in `named_params` order.
pub struct ModelVars {
    layers: Vec<LayerVars>,
    head_weights: VarId,
    head_bias: VarId,
    order: Vec<VarId>,
}

fn record_leaf(tape: &mut Tape, value: Value, learnable: bool, order: &mut Vec<VarId>) -> VarId {
    let id = if learnable {
        tape.param(value)
    } else {
        tape.constant(value)
    };
    order.push(id);
    id
}

fn record_subsets(
    tape: &mut Tape,
    subsets: &[SubsetWeights],
    learnable: bool,
    order: &mut Vec<VarId>,
) -> Vec<SubsetVars> {
    subsets
        .iter()
        .map(|s| SubsetVars {
            weights: record_leaf(tape, Value::Matrix(s.weights.clone()), learnable, order),
            edge_scale: record_leaf(tape, Value::Matrix(s.edge_scale.clone()), learnable, order),
        })
        .collect()
}

impl ModelVars {
    pub fn record(tape: &mut Tape, params: &ModelParams, learnable: bool) -> Self {
        let mut order = Vec::new();
        let layers = params
            .layers
            .iter()
            .map(|layer| {
                let spatial = record_subsets(tape, &layer.spatial, learnable, &mut order);
                let tem = layer
                    .tem
                    .as_ref()
                    .map(|t| record_subsets(tape, t, learnable, &mut order));
                let kernel = record_leaf(tape, Value::Kernel(layer.kernel.clone()), learnable, &mut order);
                let bias = record_leaf(tape, Value::Vector(layer.bias.clone()), learnable, &mut order);
                LayerVars {
                    spatial,
                    tem,
                    kernel,
                    bias,
                }
            })
            .collect();
        let head_weights = record_leaf(tape, Value::Matrix(params.head.weights.clone()), learnable, &mut order);
        let head_bias = record_leaf(tape, Value::Vector(params.head.bias.clone()), learnable, &mut order);
        Self {
            layers,
            head_weights,
            head_bias,
            order,
        }
    }

    /// Gradients flattened in `named_params` order.
    pub fn collect(&self, grads: &Gradients) -> Vec<Vec<f64>> {
        self.order
            .iter()
            .map(|&id| grads.get(id).map(|g| g.data().to_vec()).unwrap_or_default())
            .collect()
    }
}

/// `sum_k ((A_k * M_k) x) W_k` for each frame of `input`.
fn record_graph_conv(
    tape: &mut Tape,
    input: VarId,
    adj: &PartitionedAdjacency,
    subsets: &[SubsetVars],
) -> Result<VarId> {
    let mut acc: Option<VarId> = None;
    for (normalized, s) in adj.normalized().iter().zip(subsets) {
        let a = tape.constant(Value::Matrix(normalized.clone()));
        let graph = tape.mul(a, s.edge_scale)?;
        let mixed = tape.node_mix(graph, input)?;
        let projected = tape.channel_mix(mixed, s.weights)?;
        acc = Some(match acc {
            Some(prev) => tape.add(prev, projected)?,
            None => projected,
        });
    }
    acc.ok_or_else(|| Error::InvalidConfig("partition has no subsets".into()))
}

fn check_subsets(
    op: &'static str,
    input: &FeatureTensor,
    adj: &PartitionedAdjacency,
    subsets: &[SubsetWeights],
) -> Result<()> {
    if adj.joint_count() != input.joints() {
        return Err(mismatch(
            op,
            format!("adjacency over {} joints", adj.joint_count()),
            format!("input over {} joints", input.joints()),
        ));
    }
    if subsets.len() != adj.subset_count() {
        return Err(mismatch(
            op,
            format!("{} subsets in adjacency", adj.subset_count()),
            format!("{} weight subsets", subsets.len()),
        ));
    }
    let c_out = subsets[0].weights.cols();
    for (k, s) in subsets.iter().enumerate() {
        if s.weights.rows() != input.channels() || s.weights.cols() != c_out {
            return Err(mismatch(
                op,
                format!("W_{k} of shape {}x{}", s.weights.rows(), s.weights.cols()),
                format!("input with {} channels", input.channels()),
            ));
        }
        if s.edge_scale.shape() != (input.joints(), input.joints()) {
            return Err(mismatch(
                op,
                format!("M_{k} of shape {}x{}", s.edge_scale.rows(), s.edge_scale.cols()),
                format!("{} joints", input.joints()),
            ));
        }
    }
    Ok(())
}

fn record_tem(
    tape: &mut Tape,
    input: VarId,
    adj: &PartitionedAdjacency,
    subsets: &[SubsetVars],
    mode: TemMode,
) -> Result<VarId> {
    let previous = tape.shift_frames(input)?;
    let inter = record_graph_conv(tape, previous, adj, subsets)?;
    match mode {
        TemMode::Replace => Ok(inter),
        TemMode::Residual => tape.add(input, inter),
    }
}

fn record_layer(
    tape: &mut Tape,
    input: VarId,
    partitions: &Partitions,
    layer: &LayerParams,
    vars: &LayerVars,
) -> Result<VarId> {
    let x = tape
        .value(input)
        .as_feature()
        .ok_or_else(|| mismatch("layer_forward", "feature tensor", "other value"))?;
    check_subsets("spatial_gcn", x, &partitions.spatial, &layer.spatial)?;
    let spatial = record_graph_conv(tape, input, &partitions.spatial, &vars.spatial)?;
    let mut h = tape.relu(spatial)?;
    if let (Some(tem), Some(tem_vars)) = (&layer.tem, &vars.tem) {
        check_subsets("tem_forward", tape.value(h).as_feature().unwrap(), &partitions.temporal, tem)?;
        h = record_tem(tape, h, &partitions.temporal, tem_vars, layer.tem_mode)?;
    }
    let mut out = tape.conv_time(h, vars.kernel, vars.bias, layer.stride)?;
    if layer.skip && tape.value(out).data().len() == tape.value(input).data().len() {
        out = tape.add(out, input)?;
    }
    tape.relu(out)
}

/// Records the full classifier and returns the logits node.
pub fn record_logits(
    tape: &mut Tape,
    input: VarId,
    partitions: &Partitions,
    params: &ModelParams,
    vars: &ModelVars,
) -> Result<VarId> {
    let mut h = input;
    for (layer, lv) in params.layers.iter().zip(&vars.layers) {
        h = record_layer(tape, h, partitions, layer, lv)?;
    }
    let pooled = tape.global_average_pool(h)?;
    tape.linear(pooled, vars.head_weights, vars.head_bias)
}

fn feature_result(tape: &Tape, id: VarId) -> FeatureTensor {
    tape.value(id).as_feature().expect("feature node").clone()
}

fn constant_subsets(tape: &mut Tape, subsets: &[SubsetWeights]) -> Vec<SubsetVars> {
    record_subsets(tape, subsets, false, &mut Vec::new())
}

// ---------------------------------------------------------------------------
// Plain forward API

/// Spatial graph convolution over every frame.
pub fn spatial_gcn(
    input: &FeatureTensor,
    adj: &PartitionedAdjacency,
    subsets: &[SubsetWeights],
) -> Result<FeatureTensor> {
    check_subsets("spatial_gcn", input, adj, subsets)?;
    let mut tape = Tape::new();
    let x = tape.constant(Value::Feature(input.clone()));
    let vars = constant_subsets(&mut tape, subsets);
    let out = record_graph_conv(&mut tape, x, adj, &vars)?;
    Ok(feature_result(&tape, out))
}

/// Inter-frame graph convolution: frame `t` gathers from frame `t - 1`
/// (zero before the first frame).
pub fn tem_forward(
    input: &FeatureTensor,
    adj: &PartitionedAdjacency,
    subsets: &[SubsetWeights],
    mode: TemMode,
) -> Result<FeatureTensor> {
    check_subsets("tem_forward", input, adj, subsets)?;
    if subsets[0].weights.cols() != input.channels() {
        return Err(mismatch(
            "tem_forward",
            format!("{} input channels", input.channels()),
            format!("{} output channels", subsets[0].weights.cols()),
        ));
    }
    let mut tape = Tape::new();
    let x = tape.constant(Value::Feature(input.clone()));
    let vars = constant_subsets(&mut tape, subsets);
    let out = record_tem(&mut tape, x, adj, &vars, mode)?;
    Ok(feature_result(&tape, out))
}

pub fn layer_forward(
    input: &FeatureTensor,
    partitions: &Partitions,
    layer: &LayerParams,
) -> Result<FeatureTensor> {
    let mut tape = Tape::new();
    let x = tape.constant(Value::Feature(input.clone()));
    let single = ModelParams {
        layers: vec![layer.clone()],
        head: ClassifierParams {
            weights: Matrix::zeros(0, 0),
            bias: vec![],
        },
    };
    let vars = ModelVars::record(&mut tape, &single, false);
    let out = record_layer(&mut tape, x, partitions, layer, &vars.layers[0])?;
    Ok(feature_result(&tape, out))
}

/// Class logits for one sequence.
pub fn model_logits(
    input: &FeatureTensor,
    partitions: &Partitions,
    params: &ModelParams,
) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let x = tape.constant(Value::Feature(input.clone()));
    let vars = ModelVars::record(&mut tape, params, false);
    let logits = record_logits(&mut tape, x, partitions, params, &vars)?;
    Ok(tape.value(logits).as_vector().expect("logits").to_vec())
}

/// Class probabilities for one sequence.
pub fn model_forward(
    input: &FeatureTensor,
    partitions: &Partitions,
    params: &ModelParams,
) -> Result<Vec<f64>> {
    model_logits(input, partitions, params).map(|l| softmax(&l))
}

/// Loss, probabilities and per-parameter gradients for one labelled sequence.
#[derive(Debug, Clone)]
pub struct SampleGradients {
    pub loss: f64,
    pub probabilities: Vec<f64>,
    /// Flattened gradients in [`ModelParams::named_params`] order.
    pub grads: Vec<Vec<f64>>,
}

pub fn loss_and_gradients(
    input: &FeatureTensor,
    label: usize,
    partitions: &Partitions,
    params: &ModelParams,
) -> Result<SampleGradients> {
    let mut tape = Tape::new();
    let x = tape.constant(Value::Feature(input.clone()));
    let vars = ModelVars::record(&mut tape, params, true);
    let logits = record_logits(&mut tape, x, partitions, params, &vars)?;
    let loss = tape.softmax_cross_entropy(logits, label)?;
    let grads = tape.backward(loss)?;
    Ok(SampleGradients {
        loss: tape.value(loss).as_scalar().expect("scalar loss"),
        probabilities: tape.probabilities(loss).expect("softmax node").to_vec(),
        grads: vars.collect(&grads),
    })
}

/// Cross-entropy loss only; used by finite-difference checks.
pub fn loss_only(
    input: &FeatureTensor,
    label: usize,
    partitions: &Partitions,
    params: &ModelParams,
) -> Result<f64> {
    let logits = model_logits(input, partitions, params)?;
    crate::tensor::softmax_cross_entropy(&logits, label).map(|(_, l)| l)
}

/// Everything needed to run a trained classifier on one skeleton.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub topology: SkeletonTopology,
    pub partitions: Partitions,
    pub params: ModelParams,
}

impl Model {
    pub fn new(config: ModelConfig, topology: SkeletonTopology) -> Result<Self> {
        let params = ModelParams::init(&config, topology.joint_count())?;
        Self::with_params(config, topology, params)
    }

    pub fn with_params(config: ModelConfig, topology: SkeletonTopology, params: ModelParams) -> Result<Self> {
        config.validate()?;
        let partitions = Partitions::build(&topology, config.spatial_hop, config.temporal_hop)?;
        Ok(Self {
            config,
            topology,
            partitions,
            params,
        })
    }

    pub fn check_input(&self, input: &FeatureTensor) -> Result<()> {
        if input.joints() != self.topology.joint_count() || input.channels() != self.config.in_channels {
            return Err(mismatch(
                "model input",
                format!(
                    "[{}, F, {}] expected",
                    self.topology.joint_count(),
                    self.config.in_channels
                ),
                format!("{:?}", input.shape()),
            ));
        }
        Ok(())
    }

    pub fn forward(&self, input: &FeatureTensor) -> Result<Vec<f64>> {
        self.check_input(input)?;
        model_forward(input, &self.partitions, &self.params)
    }

    pub fn loss_and_gradients(&self, input: &FeatureTensor, label: usize) -> Result<SampleGradients> {
        self.check_input(input)?;
        loss_and_gradients(input, label, &self.partitions, &self.params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::SkeletonTopology;

    fn tiny_config(tem: Option<TemMode>) -> ModelConfig {
        ModelConfig {
            in_channels: 2,
            layers: vec![
                LayerSpec {
                    out_channels: 3,
                    stride: 1,
                },
                LayerSpec {
                    out_channels: 3,
                    stride: 2,
                },
            ],
            class_count: 3,
            kernel_size: 3,
            tem,
            seed: 7,
            ..ModelConfig::default()
        }
    }

    fn signal(n: usize, f: usize, c: usize) -> FeatureTensor {
        FeatureTensor::from_fn(n, f, c, |a, b, d| ((a * 7 + b * 3 + d) as f64 * 0.61).sin())
    }

    #[test]
    fn zero_weights_give_zero_spatial_output() {
        let topo = SkeletonTopology::chain(3, 1).unwrap();
        let parts = Partitions::build(&topo, 1, 1).unwrap();
        let subsets: Vec<_> = (0..3)
            .map(|_| SubsetWeights {
                weights: Matrix::zeros(2, 4),
                edge_scale: Matrix::ones(3, 3),
            })
            .collect();
        let out = spatial_gcn(&signal(3, 4, 2), &parts.spatial, &subsets).unwrap();
        assert_eq!(out.shape(), (3, 4, 4));
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_joint_self_loop_is_near_identity() {
        let topo = SkeletonTopology::new(1, &[], 0).unwrap();
        let parts = Partitions::build(&topo, 1, 1).unwrap();
        let subsets: Vec<_> = (0..3)
            .map(|k| SubsetWeights {
                weights: if k == 0 { Matrix::identity(2) } else { Matrix::zeros(2, 2) },
                edge_scale: Matrix::ones(1, 1),
            })
            .collect();
        let x = signal(1, 3, 2);
        let out = spatial_gcn(&x, &parts.spatial, &subsets).unwrap();
        for (a, b) in out.data().iter().zip(x.data()) {
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn spatial_shape_errors_name_operands() {
        let topo = SkeletonTopology::chain(3, 1).unwrap();
        let parts = Partitions::build(&topo, 1, 1).unwrap();
        let subsets: Vec<_> = (0..3)
            .map(|_| SubsetWeights {
                weights: Matrix::zeros(5, 4),
                edge_scale: Matrix::ones(3, 3),
            })
            .collect();
        let err = spatial_gcn(&signal(3, 4, 2), &parts.spatial, &subsets).unwrap_err();
        assert!(err.to_string().contains("W_0"), "{err}");
        let err = spatial_gcn(&signal(4, 4, 5), &parts.spatial, &subsets).unwrap_err();
        assert!(err.to_string().contains("adjacency over 3 joints"), "{err}");
    }

    #[test]
    fn tem_residual_with_zero_weights_is_identity() {
        let topo = SkeletonTopology::chain(3, 1).unwrap();
        let parts = Partitions::build(&topo, 1, 1).unwrap();
        let subsets: Vec<_> = (0..3)
            .map(|_| SubsetWeights {
                weights: Matrix::zeros(2, 2),
                edge_scale: Matrix::ones(3, 3),
            })
            .collect();
        let x = signal(3, 4, 2);
        assert_eq!(tem_forward(&x, &parts.temporal, &subsets, TemMode::Residual).unwrap(), x);
    }

    #[test]
    fn tem_replace_single_frame_is_zero() {
        let topo = SkeletonTopology::chain(3, 1).unwrap();
        let parts = Partitions::build(&topo, 1, 1).unwrap();
        let subsets: Vec<_> = (0..3)
            .map(|_| SubsetWeights {
                weights: Matrix::ones(2, 2),
                edge_scale: Matrix::ones(3, 3),
            })
            .collect();
        let out = tem_forward(&signal(3, 1, 2), &parts.temporal, &subsets, TemMode::Replace).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn layer_stride_and_zero_input() {
        let topo = SkeletonTopology::chain(3, 1).unwrap();
        let config = tiny_config(Some(TemMode::Residual));
        let model = Model::new(config, topo).unwrap();
        let layer = &model.params.layers[1];
        let out = layer_forward(&FeatureTensor::zeros(3, 10, 3), &model.partitions, layer).unwrap();
        assert_eq!(out.frames(), 5);
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn probabilities_sum_to_one_and_are_deterministic() {
        let topo = SkeletonTopology::chain(3, 1).unwrap();
        let model = Model::new(tiny_config(Some(TemMode::Residual)), topo).unwrap();
        let x = signal(3, 6, 2);
        let p = model.forward(&x).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(p, model.forward(&x).unwrap());
        let g = model.loss_and_gradients(&x, 1).unwrap();
        assert_eq!(g.probabilities, p);
        assert_eq!(g.grads.len(), model.params.named_params().len());
    }

    #[test]
    fn input_shape_checked() {
        let topo = SkeletonTopology::chain(3, 1).unwrap();
        let model = Model::new(tiny_config(None), topo).unwrap();
        assert!(model.forward(&signal(4, 6, 2)).is_err());
        assert!(model.forward(&signal(3, 6, 3)).is_err());
    }

    #[test]
    fn config_validation() {
        let mut c = tiny_config(None);
        c.kernel_size = 4;
        assert_eq!(c.validate().unwrap_err(), Error::EvenKernel(4));
        let mut c = tiny_config(None);
        c.layers.clear();
        assert!(c.validate().is_err());
        let mut c = tiny_config(None);
        c.layers[0].out_channels = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let c = tiny_config(Some(TemMode::Residual));
        let a = ModelParams::init(&c, 3).unwrap();
        assert_eq!(a, ModelParams::init(&c, 3).unwrap());
        let mut c2 = c.clone();
        c2.seed = 8;
        assert_ne!(a, ModelParams::init(&c2, 3).unwrap());
        let w = &a.layers[0].spatial[0];
        let bound = (6.0f64 / 5.0).sqrt();
        assert!(w.weights.data().iter().all(|v| v.abs() <= bound));
        assert!(w.edge_scale.data().iter().all(|&v| v == 1.0));
    }
}

//! Slow, loop-level reference implementations.
//!
//! Nothing here calls the production kernels in `stgcn_core::tensor`,
//! `stgcn_core::layers` or `stgcn_core::tape`; only the plain data types
//! are shared. Each function spells out the per-vertex sums directly so it
//! can serve as an independent check on the matrix-form code.

use std::collections::VecDeque;
use std::fmt;

use stgcn_core::{
    FeatureTensor, HopDistanceTable, LayerParams, Matrix, ModelParams, PartitionedAdjacency,
    SkeletonTopology, SubsetWeights, TemMode, TemporalKernel,
};

#[derive(Debug, Clone, PartialEq)]
pub enum OracleError {
    Unreachable { joint: usize, from: usize },
    Shape(String),
    NonFiniteLoss { param: String, index: usize, offset: f64 },
}

impl fmt::Display for OracleError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OracleError::Unreachable { joint, from } => {
                write!(f, "joint {joint} is unreachable from joint {from}")
            }
            OracleError::Shape(msg) => write!(f, "shape mismatch: {msg}"),
            OracleError::NonFiniteLoss { param, index, offset } => write!(
                f,
                "non-finite loss after perturbing {param}[{index}] by {offset:+e}"
            ),
        }
    }
}

impl std::error::Error for OracleError {}

pub type Result<T> = std::result::Result<T, OracleError>;

fn shape_err(msg: impl Into<String>) -> OracleError {
    OracleError::Shape(msg.into())
}

/// Breadth-first search from every joint.
pub fn bfs_distances(topology: &SkeletonTopology) -> Result<HopDistanceTable> {
    let n = topology.joint_count();
    let mut adjacency = vec![Vec::new(); n];
    for &(a, b) in topology.bones() {
        adjacency[a].push(b);
        adjacency[b].push(a);
    }
    let mut dist = vec![usize::MAX; n * n];
    for source in 0..n {
        let row = &mut dist[source * n..(source + 1) * n];
        row[source] = 0;
        let mut queue = VecDeque::from([source]);
        while let Some(v) = queue.pop_front() {
            for &w in &adjacency[v] {
                if row[w] == usize::MAX {
                    row[w] = row[v] + 1;
                    queue.push_back(w);
                }
            }
        }
        if let Some(joint) = row.iter().position(|&d| d == usize::MAX) {
            return Err(OracleError::Unreachable {
                joint,
                from: source,
            });
        }
    }
    Ok(HopDistanceTable::from_vec(n, dist))
}

/// Subset label of `j` in `i`'s sampling area, or `None` outside it.
/// 0 = self, 1 = strictly closer to the center, 2 = otherwise.
pub fn subset_label(dist: &HopDistanceTable, cog: usize, max_hop: usize, i: usize, j: usize) -> Option<usize> {
    let d = dist.get(i, j);
    if i == j {
        Some(0)
    } else if d > max_hop {
        None
    } else if dist.get(j, cog) < dist.get(i, cog) {
        Some(1)
    } else {
        Some(2)
    }
}

/// Pair-by-pair labeling into three binary masks.
pub fn label_masks(topology: &SkeletonTopology, max_hop: usize) -> Result<Vec<Matrix>> {
    let dist = bfs_distances(topology)?;
    let n = topology.joint_count();
    let mut masks = vec![Matrix::zeros(n, n); 3];
    for i in 0..n {
        for j in 0..n {
            if let Some(k) = subset_label(&dist, topology.cog(), max_hop, i, j) {
                masks[k].set(i, j, 1.0);
            }
        }
    }
    Ok(masks)
}

/// Triple-loop matrix product.
pub fn matmul_naive(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols() != b.rows() {
        return Err(shape_err(format!("{:?} x {:?}", a.shape(), b.shape())));
    }
    let mut out = Matrix::zeros(a.rows(), b.cols());
    for i in 0..a.rows() {
        for j in 0..b.cols() {
            let mut sum = 0.0;
            for k in 0..a.cols() {
                sum += a.get(i, k) * b.get(k, j);
            }
            out.set(i, j, sum);
        }
    }
    Ok(out)
}

/// Per-vertex graph convolution reading from `source_frame(t)`; frames that
/// map to `None` contribute nothing.
fn graph_conv_loops(
    input: &FeatureTensor,
    topology: &SkeletonTopology,
    adj: &PartitionedAdjacency,
    subsets: &[SubsetWeights],
    source_frame: impl Fn(usize) -> Option<usize>,
) -> Result<FeatureTensor> {
    let n = topology.joint_count();
    if input.joints() != n || adj.joint_count() != n {
        return Err(shape_err(format!(
            "topology has {n} joints, input {}, adjacency {}",
            input.joints(),
            adj.joint_count()
        )));
    }
    if subsets.len() != 3 || adj.normalized().len() != 3 {
        return Err(shape_err("expected three subsets"));
    }
    let c_in = input.channels();
    let c_out = subsets[0].weights.cols();
    if subsets.iter().any(|s| s.weights.rows() != c_in || s.weights.cols() != c_out) {
        return Err(shape_err("subset weights disagree with input channels"));
    }
    let dist = bfs_distances(topology)?;
    let mut out = FeatureTensor::zeros(n, input.frames(), c_out);
    for t in 0..input.frames() {
        let Some(src) = source_frame(t) else {
            continue;
        };
        for i in 0..n {
            for j in 0..n {
                let Some(k) = subset_label(&dist, topology.cog(), adj.max_hop(), i, j) else {
                    continue;
                };
                let coef = adj.normalized()[k].get(i, j) * subsets[k].edge_scale.get(i, j);
                for co in 0..c_out {
                    let mut projected = 0.0;
                    for ci in 0..c_in {
                        projected += input.get(j, src, ci) * subsets[k].weights.get(ci, co);
                    }
                    let cur = out.get(i, t, co);
                    out.set(i, t, co, cur + coef * projected);
                }
            }
        }
    }
    Ok(out)
}

/// `out[t][i] = sum_{j in B(i)} A_{l(j)}[i][j] M_{l(j)}[i][j] (in[t][j] W_{l(j)})`.
pub fn spatial_gcn_naive(
    input: &FeatureTensor,
    topology: &SkeletonTopology,
    adj: &PartitionedAdjacency,
    subsets: &[SubsetWeights],
) -> Result<FeatureTensor> {
    graph_conv_loops(input, topology, adj, subsets, Some)
}

/// Same sum as [`spatial_gcn_naive`] but gathering from frame `t - 1`;
/// frame 0 reads the zero pad. Replace semantics only.
pub fn tem_naive(
    input: &FeatureTensor,
    topology: &SkeletonTopology,
    adj: &PartitionedAdjacency,
    subsets: &[SubsetWeights],
) -> Result<FeatureTensor> {
    graph_conv_loops(input, topology, adj, subsets, |t| t.checked_sub(1))
}

/// Zero-padded temporal convolution written as a direct sliding dot product.
pub fn conv_time_naive(input: &FeatureTensor, kernel: &TemporalKernel, bias: &[f64], stride: usize) -> FeatureTensor {
    let half = (kernel.size() / 2) as isize;
    let frames = input.frames().div_ceil(stride);
    FeatureTensor::from_fn(input.joints(), frames, kernel.c_out(), |n, f, co| {
        let center = (f * stride) as isize;
        let mut sum = bias[co];
        for offset in -half..=half {
            let src = center + offset;
            if src < 0 || src >= input.frames() as isize {
                continue;
            }
            let tap = (offset + half) as usize;
            for ci in 0..input.channels() {
                sum += input.get(n, src as usize, ci) * kernel.get(tap, ci, co);
            }
        }
        sum
    })
}

fn relu_naive(t: &FeatureTensor) -> FeatureTensor {
    FeatureTensor::from_fn(t.joints(), t.frames(), t.channels(), |n, f, c| {
        let v = t.get(n, f, c);
        if v > 0.0 {
            v
        } else {
            0.0
        }
    })
}

fn add_naive(a: &FeatureTensor, b: &FeatureTensor) -> FeatureTensor {
    FeatureTensor::from_fn(a.joints(), a.frames(), a.channels(), |n, f, c| {
        a.get(n, f, c) + b.get(n, f, c)
    })
}

pub fn global_average_pool_naive(t: &FeatureTensor) -> Vec<f64> {
    (0..t.channels())
        .map(|c| {
            let mut sum = 0.0;
            for n in 0..t.joints() {
                for f in 0..t.frames() {
                    sum += t.get(n, f, c);
                }
            }
            sum / (t.joints() * t.frames()) as f64
        })
        .collect()
}

pub fn linear_naive(x: &[f64], weights: &Matrix, bias: &[f64]) -> Vec<f64> {
    (0..weights.cols())
        .map(|j| bias[j] + (0..x.len()).map(|i| x[i] * weights.get(i, j)).sum::<f64>())
        .collect()
}

pub fn softmax_naive(logits: &[f64]) -> Vec<f64> {
    let exps: Vec<f64> = logits.iter().map(|l| l.exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.iter().map(|e| e / total).collect()
}

fn layer_naive(
    input: &FeatureTensor,
    topology: &SkeletonTopology,
    spatial: &PartitionedAdjacency,
    temporal: &PartitionedAdjacency,
    layer: &LayerParams,
) -> Result<FeatureTensor> {
    let mut h = relu_naive(&spatial_gcn_naive(input, topology, spatial, &layer.spatial)?);
    if let Some(tem) = &layer.tem {
        let inter = tem_naive(&h, topology, temporal, tem)?;
        h = match layer.tem_mode {
            TemMode::Replace => inter,
            TemMode::Residual => add_naive(&h, &inter),
        };
    }
    let mut out = conv_time_naive(&h, &layer.kernel, &layer.bias, layer.stride);
    if layer.skip && out.shape() == input.shape() {
        out = add_naive(&out, input);
    }
    Ok(relu_naive(&out))
}

/// Straight-line reimplementation of the classifier.
pub fn model_forward_naive(
    input: &FeatureTensor,
    topology: &SkeletonTopology,
    spatial: &PartitionedAdjacency,
    temporal: &PartitionedAdjacency,
    params: &ModelParams,
) -> Result<Vec<f64>> {
    let mut h = input.clone();
    for layer in &params.layers {
        h = layer_naive(&h, topology, spatial, temporal, layer)?;
    }
    let pooled = global_average_pool_naive(&h);
    Ok(softmax_naive(&linear_naive(&pooled, &params.head.weights, &params.head.bias)))
}

/// `|a - n| / max(|a|, |n|, 1e-12)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-12)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamCheck {
    pub name: String,
    pub max_relative_error: f64,
    pub worst_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub step: f64,
    pub tolerance: f64,
    pub params: Vec<ParamCheck>,
    /// First `(parameter, index)` whose relative error exceeds `tolerance`.
    pub failure: Option<(String, usize)>,
}

impl GradCheckReport {
    pub fn max_relative_error(&self) -> f64 {
        self.params
            .iter()
            .map(|p| p.max_relative_error)
            .fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.failure.is_none()
    }
}

/// Compares `analytic` gradients against central differences
/// `(L(p + h) - L(p - h)) / 2h`, one scalar at a time.
///
/// `loss` receives the full parameter set with one entry perturbed.
pub fn finite_diff_gradients(
    mut loss: impl FnMut(&[Vec<f64>]) -> f64,
    names: &[String],
    params: &[Vec<f64>],
    analytic: &[Vec<f64>],
    step: f64,
    tolerance: f64,
) -> Result<GradCheckReport> {
    assert!(step > 0.0, "finite-difference step must be positive");
    if params.len() != analytic.len() || params.len() != names.len() {
        return Err(shape_err("parameter, name and gradient lists differ in length"));
    }
    let mut work = params.to_vec();
    let mut report = GradCheckReport {
        step,
        tolerance,
        params: Vec::with_capacity(params.len()),
        failure: None,
    };
    for (p, name) in names.iter().enumerate() {
        if params[p].len() != analytic[p].len() {
            return Err(shape_err(format!("gradient of {name} has the wrong length")));
        }
        let mut check = ParamCheck {
            name: name.clone(),
            max_relative_error: 0.0,
            worst_index: 0,
        };
        for i in 0..params[p].len() {
            let original = work[p][i];
            let mut eval = |offset: f64, work: &mut Vec<Vec<f64>>| {
                work[p][i] = original + offset;
                let value = loss(work);
                work[p][i] = original;
                if value.is_finite() {
                    Ok(value)
                } else {
                    Err(OracleError::NonFiniteLoss {
                        param: name.clone(),
                        index: i,
                        offset,
                    })
                }
            };
            let plus = eval(step, &mut work)?;
            let minus = eval(-step, &mut work)?;
            let numeric = (plus - minus) / (2.0 * step);
            let err = relative_error(analytic[p][i], numeric);
            if err > check.max_relative_error {
                check.max_relative_error = err;
                check.worst_index = i;
            }
            if err > tolerance && report.failure.is_none() {
                report.failure = Some((name.clone(), i));
            }
        }
        report.params.push(check);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chain_and_star_tables() {
        let chain = SkeletonTopology::chain(3, 1).unwrap();
        let d = bfs_distances(&chain).unwrap();
        assert_eq!(d.as_slice(), &[0, 1, 2, 1, 0, 1, 2, 1, 0]);

        let star = SkeletonTopology::star(5).unwrap();
        let d = bfs_distances(&star).unwrap();
        for leaf in 1..5 {
            assert_eq!(d.get(0, leaf), 1);
            for other in 1..5 {
                if other != leaf {
                    assert_eq!(d.get(leaf, other), 2);
                }
            }
        }
    }

    #[test]
    fn quadratic_loss_gradient() {
        let theta = vec![vec![0.5, -1.25, 3.0]];
        let analytic = vec![theta[0].iter().map(|t| 2.0 * t).collect()];
        let report = finite_diff_gradients(
            |p| p[0].iter().map(|t| t * t).sum(),
            &["theta".into()],
            &theta,
            &analytic,
            1e-5,
            1e-8,
        )
        .unwrap();
        assert!(report.passed(), "{report:?}");
    }

    #[test]
    fn linear_loss_is_exact_to_roundoff() {
        let theta = vec![vec![1.0, 2.0]];
        let coef = [3.0, -0.5];
        let report = finite_diff_gradients(
            |p| p[0][0] * coef[0] + p[0][1] * coef[1],
            &["theta".into()],
            &theta,
            &[coef.to_vec()],
            1e-3,
            1e-10,
        )
        .unwrap();
        assert!(report.max_relative_error() < 1e-10);
    }

    #[test]
    fn wrong_gradient_is_flagged() {
        let report = finite_diff_gradients(
            |p| p[0][0] * p[0][0],
            &["x".into()],
            &[vec![1.0]],
            &[vec![3.0]],
            1e-5,
            1e-6,
        )
        .unwrap();
        assert_eq!(report.failure, Some(("x".into(), 0)));
    }

    #[test]
    fn non_finite_loss_reported() {
        let err = finite_diff_gradients(
            |p| (p[0][0]).ln(),
            &["x".into()],
            &[vec![0.0]],
            &[vec![1.0]],
            1e-5,
            1e-6,
        )
        .unwrap_err();
        assert!(matches!(err, OracleError::NonFiniteLoss { index: 0, .. }));
    }

    #[test]
    fn tem_naive_single_frame_and_constant_signal() {
        let topo = SkeletonTopology::chain(3, 1).unwrap();
        let dist = bfs_distances(&topo).unwrap();
        let adj = stgcn_core::build_temporal_partition(&topo, 1, &dist).unwrap();
        let subsets: Vec<_> = (0..3)
            .map(|k| SubsetWeights {
                weights: Matrix::filled(2, 2, 0.3 + k as f64),
                edge_scale: Matrix::ones(3, 3),
            })
            .collect();
        let single = FeatureTensor::from_fn(3, 1, 2, |n, _, c| (n + c) as f64 + 1.0);
        let out = tem_naive(&single, &topo, &adj, &subsets).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));

        let constant = FeatureTensor::from_fn(3, 3, 2, |n, _, c| (n * 2 + c) as f64 - 1.5);
        let out = tem_naive(&constant, &topo, &adj, &subsets).unwrap();
        for n in 0..3 {
            for c in 0..2 {
                assert_eq!(out.get(n, 1, c), out.get(n, 2, c));
            }
        }
    }
}

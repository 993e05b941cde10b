//! Recorded-operation reverse-mode differentiation over the fixed op set.
//!
//! Each method on [`Tape`] evaluates one primitive with the forward kernels
//! from [`crate::tensor`] and appends a node. Node ids are handed out in
//! evaluation order, so the node list is always topologically sorted and
//! [`Tape::backward`] is a single reverse sweep.

use crate::error::{mismatch, Error, Result};
use crate::tensor::{
    self, channel_mix, conv_time, gemm, global_average_pool, linear, node_mix, relu, shift_frames,
    softmax_cross_entropy, Elementwise, FeatureTensor, Matrix, TemporalKernel,
};

/// A value held by a tape node.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Scalar(f64),
    Vector(Vec<f64>),
    Matrix(Matrix),
    Feature(FeatureTensor),
    Kernel(TemporalKernel),
}

impl Value {
    pub fn data(&self) -> &[f64] {
        match self {
            Value::Scalar(v) => std::slice::from_ref(v),
            Value::Vector(v) => v,
            Value::Matrix(m) => m.data(),
            Value::Feature(t) => t.data(),
            Value::Kernel(k) => k.data(),
        }
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        match self {
            Value::Scalar(v) => std::slice::from_mut(v),
            Value::Vector(v) => v,
            Value::Matrix(m) => m.data_mut(),
            Value::Feature(t) => t.data_mut(),
            Value::Kernel(k) => k.data_mut(),
        }
    }

    pub fn dims(&self) -> Vec<usize> {
        match self {
            Value::Scalar(_) => vec![],
            Value::Vector(v) => vec![v.len()],
            Value::Matrix(m) => vec![m.rows(), m.cols()],
            Value::Feature(t) => vec![t.joints(), t.frames(), t.channels()],
            Value::Kernel(k) => vec![k.size(), k.c_in(), k.c_out()],
        }
    }

    pub fn zeros_like(&self) -> Value {
        let mut out = self.clone();
        out.data_mut().fill(0.0);
        out
    }

    fn same_shape(&self, other: &Value) -> bool {
        std::mem::discriminant(self) == std::mem::discriminant(other) && self.dims() == other.dims()
    }

    fn describe(&self) -> String {
        format!("{:?}", self.dims())
    }

    pub fn as_scalar(&self) -> Option<f64> {
        match self {
            Value::Scalar(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_vector(&self) -> Option<&[f64]> {
        match self {
            Value::Vector(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_matrix(&self) -> Option<&Matrix> {
        match self {
            Value::Matrix(m) => Some(m),
            _ => None,
        }
    }

    pub fn as_feature(&self) -> Option<&FeatureTensor> {
        match self {
            Value::Feature(t) => Some(t),
            _ => None,
        }
    }

    pub fn as_kernel(&self) -> Option<&TemporalKernel> {
        match self {
            Value::Kernel(k) => Some(k),
            _ => None,
        }
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(usize);

impl VarId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf { learnable: bool },
    MatMul(VarId, VarId),
    Elementwise(VarId, VarId, Elementwise),
    Scale(VarId, f64),
    Relu(VarId),
    NodeMix { graph: VarId, input: VarId },
    ChannelMix { input: VarId, weights: VarId },
    ShiftFrames(VarId),
    ConvTime { input: VarId, kernel: VarId, bias: VarId, stride: usize },
    GlobalAvgPool(VarId),
    Linear { input: VarId, weights: VarId, bias: VarId },
    SoftmaxCrossEntropy { logits: VarId, class: usize, probs: Vec<f64> },
    Sum(VarId),
}

#[derive(Debug, Clone)]
struct Node {
    value: Value,
    op: Op,
}

#[derive(Debug, Default, Clone)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn expect_feature<'a>(v: &'a Value, op: &'static str) -> Result<&'a FeatureTensor> {
    v.as_feature()
        .ok_or_else(|| mismatch(op, "feature tensor", v.describe()))
}

fn expect_matrix<'a>(v: &'a Value, op: &'static str) -> Result<&'a Matrix> {
    v.as_matrix().ok_or_else(|| mismatch(op, "matrix", v.describe()))
}

fn expect_vector<'a>(v: &'a Value, op: &'static str) -> Result<&'a [f64]> {
    v.as_vector().ok_or_else(|| mismatch(op, "vector", v.describe()))
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Value, op: Op) -> VarId {
        self.nodes.push(Node { value, op });
        VarId(self.nodes.len() - 1)
    }

    /// Records a constant input (no gradient reported).
    pub fn constant(&mut self, value: Value) -> VarId {
        self.push(value, Op::Leaf { learnable: false })
    }

    /// Records a learnable value.
    pub fn param(&mut self, value: Value) -> VarId {
        self.push(value, Op::Leaf { learnable: true })
    }

    pub fn value(&self, id: VarId) -> &Value {
        &self.nodes[id.0].value
    }

    pub fn matmul(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        let out = tensor::matmul(
            expect_matrix(self.value(a), "matmul")?,
            expect_matrix(self.value(b), "matmul")?,
        )?;
        Ok(self.push(Value::Matrix(out), Op::MatMul(a, b)))
    }

    pub fn elementwise(&mut self, a: VarId, b: VarId, mode: Elementwise) -> Result<VarId> {
        let (va, vb) = (self.value(a), self.value(b));
        if !va.same_shape(vb) {
            return Err(mismatch("elementwise", va.describe(), vb.describe()));
        }
        let mut out = va.clone();
        for (o, &y) in out.data_mut().iter_mut().zip(vb.data()) {
            *o = match mode {
                Elementwise::Add => *o + y,
                Elementwise::Mul => *o * y,
            };
        }
        Ok(self.push(out, Op::Elementwise(a, b, mode)))
    }

    pub fn add(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        self.elementwise(a, b, Elementwise::Add)
    }

    pub fn mul(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        self.elementwise(a, b, Elementwise::Mul)
    }

    pub fn scale(&mut self, a: VarId, factor: f64) -> VarId {
        let mut out = self.value(a).clone();
        out.data_mut().iter_mut().for_each(|v| *v *= factor);
        self.push(out, Op::Scale(a, factor))
    }

    pub fn relu(&mut self, a: VarId) -> Result<VarId> {
        let out = relu(expect_feature(self.value(a), "relu")?);
        Ok(self.push(Value::Feature(out), Op::Relu(a)))
    }

    pub fn node_mix(&mut self, graph: VarId, input: VarId) -> Result<VarId> {
        let out = node_mix(
            expect_matrix(self.value(graph), "node_mix")?,
            expect_feature(self.value(input), "node_mix")?,
        )?;
        Ok(self.push(Value::Feature(out), Op::NodeMix { graph, input }))
    }

    pub fn channel_mix(&mut self, input: VarId, weights: VarId) -> Result<VarId> {
        let out = channel_mix(
            expect_feature(self.value(input), "channel_mix")?,
            expect_matrix(self.value(weights), "channel_mix")?,
        )?;
        Ok(self.push(Value::Feature(out), Op::ChannelMix { input, weights }))
    }

    pub fn shift_frames(&mut self, input: VarId) -> Result<VarId> {
        let out = shift_frames(expect_feature(self.value(input), "shift_frames")?);
        Ok(self.push(Value::Feature(out), Op::ShiftFrames(input)))
    }

    pub fn conv_time(
        &mut self,
        input: VarId,
        kernel: VarId,
        bias: VarId,
        stride: usize,
    ) -> Result<VarId> {
        let k = self
            .value(kernel)
            .as_kernel()
            .ok_or_else(|| mismatch("conv_time", "kernel", self.value(kernel).describe()))?;
        let out = conv_time(
            expect_feature(self.value(input), "conv_time")?,
            k,
            expect_vector(self.value(bias), "conv_time")?,
            stride,
        )?;
        Ok(self.push(
            Value::Feature(out),
            Op::ConvTime {
                input,
                kernel,
                bias,
                stride,
            },
        ))
    }

    pub fn global_average_pool(&mut self, input: VarId) -> Result<VarId> {
        let out = global_average_pool(expect_feature(self.value(input), "global_average_pool")?);
        Ok(self.push(Value::Vector(out), Op::GlobalAvgPool(input)))
    }

    pub fn linear(&mut self, input: VarId, weights: VarId, bias: VarId) -> Result<VarId> {
        let out = linear(
            expect_vector(self.value(input), "linear")?,
            expect_matrix(self.value(weights), "linear")?,
            expect_vector(self.value(bias), "linear")?,
        )?;
        Ok(self.push(
            Value::Vector(out),
            Op::Linear {
                input,
                weights,
                bias,
            },
        ))
    }

    pub fn softmax_cross_entropy(&mut self, logits: VarId, class: usize) -> Result<VarId> {
        let (probs, loss) =
            softmax_cross_entropy(expect_vector(self.value(logits), "softmax_cross_entropy")?, class)?;
        Ok(self.push(
            Value::Scalar(loss),
            Op::SoftmaxCrossEntropy {
                logits,
                class,
                probs,
            },
        ))
    }

    /// Probabilities computed by a softmax cross-entropy node.
    pub fn probabilities(&self, loss: VarId) -> Option<&[f64]> {
        match &self.nodes[loss.0].op {
            Op::SoftmaxCrossEntropy { probs, .. } => Some(probs),
            _ => None,
        }
    }

    /// Sum of all entries.
    pub fn sum(&mut self, input: VarId) -> VarId {
        let total = self.value(input).data().iter().sum();
        self.push(Value::Scalar(total), Op::Sum(input))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: VarId) -> Result<Gradients> {
        if !matches!(self.value(loss), Value::Scalar(_)) {
            return Err(Error::NonScalarLoss(self.value(loss).describe()));
        }
        let mut adj: Vec<Option<Value>> = vec![None; loss.0 + 1];
        adj[loss.0] = Some(Value::Scalar(1.0));
        for idx in (0..=loss.0).rev() {
            let Some(upstream) = adj[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            if let Op::Leaf { .. } = node.op {
                adj[idx] = Some(upstream);
                continue;
            }
            for (target, grad) in self.local_grads(node, &upstream) {
                accumulate(&mut adj[target.0], grad, &self.nodes[target.0].value);
            }
        }
        let grads = self
            .nodes
            .iter()
            .enumerate()
            .take(loss.0 + 1)
            .filter_map(|(idx, node)| match node.op {
                Op::Leaf { learnable: true } => Some((
                    VarId(idx),
                    adj[idx].take().unwrap_or_else(|| node.value.zeros_like()),
                )),
                _ => None,
            })
            .collect();
        Ok(Gradients { grads })
    }

    fn local_grads(&self, node: &Node, up: &Value) -> Vec<(VarId, Value)> {
        let val = |id: VarId| &self.nodes[id.0].value;
        match &node.op {
            Op::Leaf { .. } => vec![],
            Op::MatMul(a, b) => {
                let (ma, mb) = (val(*a).as_matrix().unwrap(), val(*b).as_matrix().unwrap());
                let g = up.as_matrix().unwrap();
                let da = tensor::matmul(g, &mb.transpose()).unwrap();
                let db = tensor::matmul(&ma.transpose(), g).unwrap();
                vec![(*a, Value::Matrix(da)), (*b, Value::Matrix(db))]
            }
            Op::Elementwise(a, b, mode) => match mode {
                Elementwise::Add => vec![(*a, up.clone()), (*b, up.clone())],
                Elementwise::Mul => {
                    let mut da = up.clone();
                    for (d, &y) in da.data_mut().iter_mut().zip(val(*b).data()) {
                        *d *= y;
                    }
                    let mut db = up.clone();
                    for (d, &x) in db.data_mut().iter_mut().zip(val(*a).data()) {
                        *d *= x;
                    }
                    vec![(*a, da), (*b, db)]
                }
            },
            Op::Scale(a, factor) => {
                let mut da = up.clone();
                da.data_mut().iter_mut().for_each(|v| *v *= factor);
                vec![(*a, da)]
            }
            Op::Relu(a) => {
                let mut da = up.clone();
                for (d, &x) in da.data_mut().iter_mut().zip(val(*a).data()) {
                    if x <= 0.0 {
                        *d = 0.0;
                    }
                }
                vec![(*a, da)]
            }
            Op::NodeMix { graph, input } => {
                let g = val(*graph).as_matrix().unwrap();
                let x = val(*input).as_feature().unwrap();
                let dy = up.as_feature().unwrap();
                let (n, c) = (x.joints(), x.channels());
                let mut dg = Matrix::zeros(n, n);
                let mut frame_dg = vec![0.0; n * n];
                let gt = g.transpose();
                let mut dx = FeatureTensor::zeros(n, x.frames(), c);
                for f in 0..x.frames() {
                    // dG += dY_f * X_f^T
                    let xt = Matrix::from_vec(n, c, x.frame(f).to_vec()).unwrap().transpose();
                    gemm(dy.frame(f), n, c, xt.data(), n, &mut frame_dg);
                    for (a, b) in dg.data_mut().iter_mut().zip(&frame_dg) {
                        *a += b;
                    }
                    gemm(
                        gt.data(),
                        n,
                        n,
                        dy.frame(f),
                        c,
                        &mut dx.data_mut()[f * n * c..(f + 1) * n * c],
                    );
                }
                vec![(*graph, Value::Matrix(dg)), (*input, Value::Feature(dx))]
            }
            Op::ChannelMix { input, weights } => {
                let x = val(*input).as_feature().unwrap();
                let w = val(*weights).as_matrix().unwrap();
                let dy = up.as_feature().unwrap();
                let positions = x.joints() * x.frames();
                let dx = channel_mix(dy, &w.transpose()).unwrap();
                let xt = Matrix::from_vec(positions, x.channels(), x.data().to_vec())
                    .unwrap()
                    .transpose();
                let mut dw = Matrix::zeros(w.rows(), w.cols());
                gemm(xt.data(), x.channels(), positions, dy.data(), w.cols(), dw.data_mut());
                vec![(*input, Value::Feature(dx)), (*weights, Value::Matrix(dw))]
            }
            Op::ShiftFrames(a) => {
                let dy = up.as_feature().unwrap();
                let (n, frames, c) = dy.shape();
                let block = n * c;
                let mut dx = FeatureTensor::zeros(n, frames, c);
                if frames > 1 {
                    dx.data_mut()[..(frames - 1) * block].copy_from_slice(&dy.data()[block..]);
                }
                vec![(*a, Value::Feature(dx))]
            }
            Op::ConvTime {
                input,
                kernel,
                bias,
                stride,
            } => {
                let x = val(*input).as_feature().unwrap();
                let k = val(*kernel).as_kernel().unwrap();
                let dy = up.as_feature().unwrap();
                let pad = k.size() / 2;
                let mut dx = FeatureTensor::zeros(x.joints(), x.frames(), x.channels());
                let mut dk = TemporalKernel::zeros(k.size(), k.c_in(), k.c_out()).unwrap();
                let mut db = vec![0.0; k.c_out()];
                for f in 0..dy.frames() {
                    for n in 0..x.joints() {
                        for (co, d) in db.iter_mut().enumerate() {
                            *d += dy.get(n, f, co);
                        }
                        for g in 0..k.size() {
                            let Some(src) = (f * stride + g).checked_sub(pad) else {
                                continue;
                            };
                            if src >= x.frames() {
                                continue;
                            }
                            for ci in 0..x.channels() {
                                let xv = x.get(n, src, ci);
                                let mut acc = 0.0;
                                for co in 0..k.c_out() {
                                    let g_out = dy.get(n, f, co);
                                    acc += g_out * k.get(g, ci, co);
                                    let idx = (g * k.c_in() + ci) * k.c_out() + co;
                                    dk.data_mut()[idx] += g_out * xv;
                                }
                                let cur = dx.get(n, src, ci);
                                dx.set(n, src, ci, cur + acc);
                            }
                        }
                    }
                }
                vec![
                    (*input, Value::Feature(dx)),
                    (*kernel, Value::Kernel(dk)),
                    (*bias, Value::Vector(db)),
                ]
            }
            Op::GlobalAvgPool(a) => {
                let x = val(*a).as_feature().unwrap();
                let dy = up.as_vector().unwrap();
                let count = (x.joints() * x.frames()) as f64;
                let mut dx = FeatureTensor::zeros(x.joints(), x.frames(), x.channels());
                for pos in dx.data_mut().chunks_exact_mut(x.channels().max(1)) {
                    for (d, &g) in pos.iter_mut().zip(dy) {
                        *d = g / count;
                    }
                }
                vec![(*a, Value::Feature(dx))]
            }
            Op::Linear {
                input,
                weights,
                bias,
            } => {
                let x = val(*input).as_vector().unwrap();
                let w = val(*weights).as_matrix().unwrap();
                let dy = up.as_vector().unwrap();
                let dx: Vec<f64> = (0..w.rows())
                    .map(|i| w.row(i).iter().zip(dy).map(|(a, b)| a * b).sum())
                    .collect();
                let mut dw = Matrix::zeros(w.rows(), w.cols());
                for (i, &xi) in x.iter().enumerate() {
                    for (j, &g) in dy.iter().enumerate() {
                        dw.set(i, j, xi * g);
                    }
                }
                vec![
                    (*input, Value::Vector(dx)),
                    (*weights, Value::Matrix(dw)),
                    (*bias, Value::Vector(dy.to_vec())),
                ]
            }
            Op::SoftmaxCrossEntropy {
                logits,
                class,
                probs,
            } => {
                let g = up.as_scalar().unwrap();
                let dl = probs
                    .iter()
                    .enumerate()
                    .map(|(i, &p)| g * (p - if i == *class { 1.0 } else { 0.0 }))
                    .collect();
                vec![(*logits, Value::Vector(dl))]
            }
            Op::Sum(a) => {
                let g = up.as_scalar().unwrap();
                let mut da = val(*a).zeros_like();
                da.data_mut().fill(g);
                vec![(*a, da)]
            }
        }
    }
}

fn accumulate(slot: &mut Option<Value>, grad: Value, like: &Value) {
    debug_assert!(grad.same_shape(like), "gradient shape mismatch");
    match slot {
        Some(existing) => {
            for (a, b) in existing.data_mut().iter_mut().zip(grad.data()) {
                *a += b;
            }
        }
        None => *slot = Some(grad),
    }
}

/// Gradients of a scalar loss with respect to every learnable leaf.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<(VarId, Value)>,
}

impl Gradients {
    pub fn get(&self, id: VarId) -> Option<&Value> {
        self.grads
            .binary_search_by_key(&id, |(v, _)| *v)
            .ok()
            .map(|i| &self.grads[i].1)
    }

    pub fn iter(&self) -> impl Iterator<Item = (VarId, &Value)> {
        self.grads.iter().map(|(id, v)| (*id, v))
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }
}

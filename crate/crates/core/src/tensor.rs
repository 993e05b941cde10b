//! Dense value types and the forward kernels used by every layer.
//!
//! All storage is row-major `f64`. A [`FeatureTensor`] holds a skeleton
//! sequence of shape `(joints, frames, channels)` stored frame-major, so
//! each frame is a contiguous `joints x channels` block. That layout lets
//! the graph products reuse the plain matrix kernel frame by frame.
//!
//! Every reduction accumulates in a fixed order, so identical inputs
//! produce bit-identical outputs.

use std::fmt;

use crate::error::{mismatch, Error, Result};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 0.0)
    }

    pub fn ones(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 1.0)
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(mismatch(
                "Matrix::from_vec",
                format!("{rows}x{cols}"),
                format!("{} values", data.len()),
            ));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            if row.len() != cols {
                return Err(mismatch("Matrix::from_rows", cols, row.len()));
            }
            data.extend_from_slice(row);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.cols + col] = value;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.set(j, i, self.get(i, j));
            }
        }
        out
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    /// Relabels both axes: entry `(i, j)` moves to `(perm[i], perm[j])`.
    pub fn permute_symmetric(&self, perm: &[usize]) -> Matrix {
        debug_assert_eq!(self.rows, self.cols);
        debug_assert_eq!(perm.len(), self.rows);
        let mut out = Matrix::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.set(perm[i], perm[j], self.get(i, j));
            }
        }
        out
    }
}

impl fmt::Display for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.rows {
            let row: Vec<String> = self.row(i).iter().map(|v| format!("{v:.6}")).collect();
            writeln!(f, "{}", row.join(" "))?;
        }
        Ok(())
    }
}

/// Skeleton sequence features, shape `(joints, frames, channels)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor {
    joints: usize,
    frames: usize,
    channels: usize,
    data: Vec<f64>,
}

impl FeatureTensor {
    pub fn zeros(joints: usize, frames: usize, channels: usize) -> Self {
        Self {
            joints,
            frames,
            channels,
            data: vec![0.0; joints * frames * channels],
        }
    }

    /// `data` is frame-major: frame, then joint, then channel.
    pub fn from_vec(joints: usize, frames: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != joints * frames * channels {
            return Err(mismatch(
                "FeatureTensor::from_vec",
                format!("[{joints}, {frames}, {channels}]"),
                format!("{} values", data.len()),
            ));
        }
        Ok(Self {
            joints,
            frames,
            channels,
            data,
        })
    }

    pub fn from_fn(
        joints: usize,
        frames: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(joints * frames * channels);
        for t in 0..frames {
            for n in 0..joints {
                for c in 0..channels {
                    data.push(f(n, t, c));
                }
            }
        }
        Self {
            joints,
            frames,
            channels,
            data,
        }
    }

    #[inline]
    pub fn joints(&self) -> usize {
        self.joints
    }

    #[inline]
    pub fn frames(&self) -> usize {
        self.frames
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.joints, self.frames, self.channels)
    }

    #[inline]
    fn offset(&self, joint: usize, frame: usize, channel: usize) -> usize {
        (frame * self.joints + joint) * self.channels + channel
    }

    #[inline]
    pub fn get(&self, joint: usize, frame: usize, channel: usize) -> f64 {
        self.data[self.offset(joint, frame, channel)]
    }

    #[inline]
    pub fn set(&mut self, joint: usize, frame: usize, channel: usize, value: f64) {
        let idx = self.offset(joint, frame, channel);
        self.data[idx] = value;
    }

    /// Contiguous `joints x channels` block of one frame.
    pub fn frame(&self, frame: usize) -> &[f64] {
        let len = self.joints * self.channels;
        &self.data[frame * len..(frame + 1) * len]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Moves joint `n` to `perm[n]`.
    pub fn permute_joints(&self, perm: &[usize]) -> FeatureTensor {
        let mut out = FeatureTensor::zeros(self.joints, self.frames, self.channels);
        for t in 0..self.frames {
            for n in 0..self.joints {
                for c in 0..self.channels {
                    out.set(perm[n], t, c, self.get(n, t, c));
                }
            }
        }
        out
    }

    fn shape_string(&self) -> String {
        format!("[{}, {}, {}]", self.joints, self.frames, self.channels)
    }
}

/// Temporal convolution weights, shape `(size, c_in, c_out)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalKernel {
    size: usize,
    c_in: usize,
    c_out: usize,
    data: Vec<f64>,
}

impl TemporalKernel {
    pub fn zeros(size: usize, c_in: usize, c_out: usize) -> Result<Self> {
        Self::from_vec(size, c_in, c_out, vec![0.0; size * c_in * c_out])
    }

    /// Kernel of size `size` whose center tap is the channel identity.
    pub fn identity(size: usize, channels: usize) -> Result<Self> {
        let mut k = Self::zeros(size, channels, channels)?;
        for c in 0..channels {
            k.set(size / 2, c, c, 1.0);
        }
        Ok(k)
    }

    pub fn from_vec(size: usize, c_in: usize, c_out: usize, data: Vec<f64>) -> Result<Self> {
        if size.is_multiple_of(2) {
            return Err(Error::EvenKernel(size));
        }
        if data.len() != size * c_in * c_out {
            return Err(mismatch(
                "TemporalKernel::from_vec",
                format!("[{size}, {c_in}, {c_out}]"),
                format!("{} values", data.len()),
            ));
        }
        Ok(Self {
            size,
            c_in,
            c_out,
            data,
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn c_in(&self) -> usize {
        self.c_in
    }

    pub fn c_out(&self) -> usize {
        self.c_out
    }

    #[inline]
    pub fn get(&self, tap: usize, ci: usize, co: usize) -> f64 {
        self.data[(tap * self.c_in + ci) * self.c_out + co]
    }

    #[inline]
    pub fn set(&mut self, tap: usize, ci: usize, co: usize, value: f64) {
        self.data[(tap * self.c_in + ci) * self.c_out + co] = value;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

/// Binary entrywise combinations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Elementwise {
    Add,
    Mul,
}

impl Elementwise {
    #[inline]
    fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            Elementwise::Add => a + b,
            Elementwise::Mul => a * b,
        }
    }
}

/// `out = a * b` for row-major slices. Each output entry is accumulated
/// over the inner index left to right, starting from zero.
pub(crate) fn gemm(a: &[f64], rows: usize, inner: usize, b: &[f64], cols: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), rows * inner);
    debug_assert_eq!(b.len(), inner * cols);
    debug_assert_eq!(out.len(), rows * cols);
    out.fill(0.0);
    for i in 0..rows {
        let out_row = &mut out[i * cols..(i + 1) * cols];
        for k in 0..inner {
            let lhs = a[i * inner + k];
            let b_row = &b[k * cols..(k + 1) * cols];
            for (o, &r) in out_row.iter_mut().zip(b_row) {
                *o += lhs * r;
            }
        }
    }
}

pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(mismatch(
            "matmul",
            format!("{}x{}", a.rows, a.cols),
            format!("{}x{}", b.rows, b.cols),
        ));
    }
    let mut out = Matrix::zeros(a.rows, b.cols);
    gemm(&a.data, a.rows, a.cols, &b.data, b.cols, &mut out.data);
    Ok(out)
}

pub fn elementwise(a: &Matrix, b: &Matrix, mode: Elementwise) -> Result<Matrix> {
    if a.shape() != b.shape() {
        return Err(mismatch(
            "elementwise",
            format!("{}x{}", a.rows, a.cols),
            format!("{}x{}", b.rows, b.cols),
        ));
    }
    let data = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(&x, &y)| mode.apply(x, y))
        .collect();
    Ok(Matrix {
        rows: a.rows,
        cols: a.cols,
        data,
    })
}

pub fn elementwise_features(
    a: &FeatureTensor,
    b: &FeatureTensor,
    mode: Elementwise,
) -> Result<FeatureTensor> {
    if a.shape() != b.shape() {
        return Err(mismatch("elementwise", a.shape_string(), b.shape_string()));
    }
    let data = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(&x, &y)| mode.apply(x, y))
        .collect();
    Ok(FeatureTensor { data, ..*a })
}

pub fn scale(a: &Matrix, factor: f64) -> Matrix {
    Matrix {
        rows: a.rows,
        cols: a.cols,
        data: a.data.iter().map(|v| v * factor).collect(),
    }
}

pub fn relu(t: &FeatureTensor) -> FeatureTensor {
    FeatureTensor {
        data: t.data.iter().map(|&v| v.max(0.0)).collect(),
        ..*t
    }
}

/// Mixes joints within every frame: `out_t = graph * in_t`.
pub fn node_mix(graph: &Matrix, t: &FeatureTensor) -> Result<FeatureTensor> {
    if graph.rows != t.joints || graph.cols != t.joints {
        return Err(mismatch(
            "node_mix",
            format!("{}x{} graph", graph.rows, graph.cols),
            t.shape_string(),
        ));
    }
    let mut out = FeatureTensor::zeros(t.joints, t.frames, t.channels);
    let block = t.joints * t.channels;
    for f in 0..t.frames {
        gemm(
            &graph.data,
            t.joints,
            t.joints,
            t.frame(f),
            t.channels,
            &mut out.data[f * block..(f + 1) * block],
        );
    }
    Ok(out)
}

/// Per-position channel projection: `out[n, t, :] = in[n, t, :] * weights`.
pub fn channel_mix(t: &FeatureTensor, weights: &Matrix) -> Result<FeatureTensor> {
    if weights.rows != t.channels {
        return Err(mismatch(
            "channel_mix",
            t.shape_string(),
            format!("{}x{} weights", weights.rows, weights.cols),
        ));
    }
    let mut out = FeatureTensor::zeros(t.joints, t.frames, weights.cols);
    gemm(
        &t.data,
        t.joints * t.frames,
        t.channels,
        &weights.data,
        weights.cols,
        &mut out.data,
    );
    Ok(out)
}

/// Delays the sequence by one frame; frame 0 becomes zero.
pub fn shift_frames(t: &FeatureTensor) -> FeatureTensor {
    let mut out = FeatureTensor::zeros(t.joints, t.frames, t.channels);
    let block = t.joints * t.channels;
    if t.frames > 1 {
        out.data[block..].copy_from_slice(&t.data[..(t.frames - 1) * block]);
    }
    out
}

/// Number of output frames of a strided, centered temporal convolution.
pub fn strided_frames(frames: usize, stride: usize) -> usize {
    frames.div_ceil(stride)
}

/// Temporal `size x 1` convolution with zero padding of `size / 2` frames
/// on both ends. Joints are never mixed.
pub fn conv_time(
    t: &FeatureTensor,
    kernel: &TemporalKernel,
    bias: &[f64],
    stride: usize,
) -> Result<FeatureTensor> {
    if stride == 0 {
        return Err(Error::ZeroStride);
    }
    if kernel.size.is_multiple_of(2) {
        return Err(Error::EvenKernel(kernel.size));
    }
    if kernel.c_in != t.channels {
        return Err(mismatch(
            "conv_time",
            t.shape_string(),
            format!("[{}, {}, {}] kernel", kernel.size, kernel.c_in, kernel.c_out),
        ));
    }
    if bias.len() != kernel.c_out {
        return Err(mismatch(
            "conv_time bias",
            kernel.c_out,
            format!("{} bias values", bias.len()),
        ));
    }
    let pad = kernel.size / 2;
    let out_frames = strided_frames(t.frames, stride);
    let mut out = FeatureTensor::zeros(t.joints, out_frames, kernel.c_out);
    for f in 0..out_frames {
        for n in 0..t.joints {
            let base = out.offset(n, f, 0);
            let acc = &mut out.data[base..base + kernel.c_out];
            acc.copy_from_slice(bias);
            for g in 0..kernel.size {
                let Some(src) = (f * stride + g).checked_sub(pad) else {
                    continue;
                };
                if src >= t.frames {
                    continue;
                }
                for ci in 0..t.channels {
                    let x = t.get(n, src, ci);
                    let taps = &kernel.data[(g * kernel.c_in + ci) * kernel.c_out..][..kernel.c_out];
                    for (a, &w) in acc.iter_mut().zip(taps) {
                        *a += x * w;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Mean over all joint/frame positions, per channel.
pub fn global_average_pool(t: &FeatureTensor) -> Vec<f64> {
    let mut out = vec![0.0; t.channels];
    for position in t.data.chunks_exact(t.channels.max(1)) {
        for (o, v) in out.iter_mut().zip(position) {
            *o += v;
        }
    }
    let count = (t.joints * t.frames) as f64;
    if count > 0.0 {
        out.iter_mut().for_each(|v| *v /= count);
    }
    out
}

/// `x * weights + bias` for a row vector `x`.
pub fn linear(x: &[f64], weights: &Matrix, bias: &[f64]) -> Result<Vec<f64>> {
    if x.len() != weights.rows {
        return Err(mismatch(
            "linear",
            format!("{}-vector", x.len()),
            format!("{}x{} weights", weights.rows, weights.cols),
        ));
    }
    if bias.len() != weights.cols {
        return Err(mismatch(
            "linear bias",
            weights.cols,
            format!("{} bias values", bias.len()),
        ));
    }
    let mut out = bias.to_vec();
    for (i, &xi) in x.iter().enumerate() {
        for (o, &w) in out.iter_mut().zip(weights.row(i)) {
            *o += xi * w;
        }
    }
    Ok(out)
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Returns `(probabilities, -ln p[class])`, stabilized by max subtraction.
pub fn softmax_cross_entropy(logits: &[f64], class: usize) -> Result<(Vec<f64>, f64)> {
    if class >= logits.len() {
        return Err(Error::ClassOutOfRange {
            class,
            classes: logits.len(),
        });
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|&l| (l - max).exp()).sum();
    let log_sum = sum.ln();
    let probs = softmax(logits);
    let loss = -(logits[class] - max - log_sum);
    Ok((probs, loss))
}

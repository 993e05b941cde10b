//! Wall-clock timing of the three per-layer kernels.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stgcn_core::{
    spatial_gcn, tem_forward, tensor, FeatureTensor, Matrix, Partitions, SkeletonTopology,
    SubsetWeights, TemMode, TemporalKernel,
};

use crate::error::Result;

#[derive(Debug, Clone)]
pub struct BenchResult {
    pub kernel: &'static str,
    pub iterations: usize,
    pub mean: Duration,
}

fn time<F: FnMut() -> stgcn_core::Result<FeatureTensor>>(iterations: usize, mut f: F) -> Result<Duration> {
    f()?;
    let start = Instant::now();
    for _ in 0..iterations {
        std::hint::black_box(f()?);
    }
    Ok(start.elapsed() / iterations.max(1) as u32)
}

/// Times spatial graph convolution, the inter-frame stage and the temporal
/// convolution on random input of `frames x channels` per joint.
pub fn run(topology: &SkeletonTopology, frames: usize, channels: usize, kernel_size: usize, iterations: usize) -> Result<Vec<BenchResult>> {
    let n = topology.joint_count();
    let parts = Partitions::build(topology, 1, 1)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let x = FeatureTensor::from_fn(n, frames, channels, |_, _, _| rng.random_range(-1.0..1.0));
    let subsets: Vec<SubsetWeights> = (0..parts.spatial.subset_count())
        .map(|_| SubsetWeights {
            weights: Matrix::from_vec(
                channels,
                channels,
                (0..channels * channels).map(|_| rng.random_range(-0.5..0.5)).collect(),
            )
            .expect("square weights"),
            edge_scale: Matrix::ones(n, n),
        })
        .collect();
    let kernel = TemporalKernel::from_vec(
        kernel_size,
        channels,
        channels,
        (0..kernel_size * channels * channels).map(|_| rng.random_range(-0.5..0.5)).collect(),
    )?;
    let bias = vec![0.0; channels];
    Ok(vec![
        BenchResult {
            kernel: "spatial",
            iterations,
            mean: time(iterations, || spatial_gcn(&x, &parts.spatial, &subsets))?,
        },
        BenchResult {
            kernel: "tem",
            iterations,
            mean: time(iterations, || tem_forward(&x, &parts.temporal, &subsets, TemMode::Residual))?,
        },
        BenchResult {
            kernel: "temporal",
            iterations,
            mean: time(iterations, || tensor::conv_time(&x, &kernel, &bias, 1))?,
        },
    ])
}

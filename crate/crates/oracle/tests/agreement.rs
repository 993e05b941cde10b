use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stgcn_core::tensor::{self, Elementwise};
use stgcn_core::{
    build_spatial_partition, build_temporal_partition, model_forward, path_distance, spatial_gcn,
    tem_forward, FeatureTensor, LayerSpec, Matrix, Model, ModelConfig, SkeletonTopology,
    SubsetWeights, TemMode,
};
use stgcn_oracle::{
    bfs_distances, conv_time_naive, global_average_pool_naive, label_masks, linear_naive,
    matmul_naive, model_forward_naive, softmax_naive, spatial_gcn_naive, tem_naive,
};

const TOL: f64 = 1e-10;

fn random_tree(rng: &mut ChaCha8Rng, n: usize) -> SkeletonTopology {
    let bones: Vec<_> = (1..n).map(|j| (rng.random_range(0..j), j)).collect();
    SkeletonTopology::new(n, &bones, rng.random_range(0..n)).unwrap()
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
}

fn random_features(rng: &mut ChaCha8Rng, n: usize, f: usize, c: usize) -> FeatureTensor {
    FeatureTensor::from_fn(n, f, c, |_, _, _| rng.random_range(-1.0..1.0))
}

fn random_subsets(rng: &mut ChaCha8Rng, n: usize, c_in: usize, c_out: usize) -> Vec<SubsetWeights> {
    (0..3)
        .map(|_| SubsetWeights {
            weights: random_matrix(rng, c_in, c_out, 1.0),
            edge_scale: random_matrix(rng, n, n, 2.0),
        })
        .collect()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn spatial_and_tem_match_per_vertex_loops() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..120 {
        let n = rng.random_range(1..=6);
        let f = rng.random_range(1..=5);
        let c_in = rng.random_range(1..=4);
        let c_out = rng.random_range(1..=4);
        let topo = random_tree(&mut rng, n);
        let dist = path_distance(&topo).unwrap();
        let hop = rng.random_range(1..=2);
        let spatial = build_spatial_partition(&topo, hop, &dist).unwrap();
        let temporal = build_temporal_partition(&topo, hop, &dist).unwrap();

        let x = random_features(&mut rng, n, f, c_in);
        let s = random_subsets(&mut rng, n, c_in, c_out);
        let fast = spatial_gcn(&x, &spatial, &s).unwrap();
        let slow = spatial_gcn_naive(&x, &topo, &spatial, &s).unwrap();
        assert!(max_abs_diff(fast.data(), slow.data()) <= TOL);

        let y = random_features(&mut rng, n, f, c_out);
        let t = random_subsets(&mut rng, n, c_out, c_out);
        let fast = tem_forward(&y, &temporal, &t, TemMode::Replace).unwrap();
        let slow = tem_naive(&y, &topo, &temporal, &t).unwrap();
        assert!(max_abs_diff(fast.data(), slow.data()) <= TOL);
        for j in 0..n {
            for c in 0..c_out {
                assert_eq!(fast.get(j, 0, c), 0.0);
            }
        }
    }
}

#[test]
fn zero_input_gives_zero_output() {
    let topo = SkeletonTopology::chain(4, 1).unwrap();
    let dist = path_distance(&topo).unwrap();
    let spatial = build_spatial_partition(&topo, 1, &dist).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let s = random_subsets(&mut rng, 4, 2, 3);
    let out = spatial_gcn_naive(&FeatureTensor::zeros(4, 3, 2), &topo, &spatial, &s).unwrap();
    assert!(out.data().iter().all(|&v| v == 0.0));
}

#[test]
fn bfs_matches_floyd_on_builtins() {
    for topo in [
        SkeletonTopology::ntu25(),
        SkeletonTopology::openpose18(),
        SkeletonTopology::chain(3, 1).unwrap(),
        SkeletonTopology::star(5).unwrap(),
    ] {
        assert_eq!(bfs_distances(&topo).unwrap(), path_distance(&topo).unwrap());
    }
    let ntu = SkeletonTopology::ntu25();
    let wrist = ntu.joint_index("wrist_left").unwrap();
    let head = ntu.joint_index("head").unwrap();
    // wrist_left - elbow_left - shoulder_left - spine_shoulder - neck - head
    assert_eq!(path_distance(&ntu).unwrap().get(wrist, head), 5);
    assert_eq!(bfs_distances(&ntu).unwrap().get(wrist, head), 5);
}

#[test]
fn partition_matches_pairwise_labeling() {
    for topo in [SkeletonTopology::ntu25(), SkeletonTopology::openpose18()] {
        let dist = path_distance(&topo).unwrap();
        let built = build_spatial_partition(&topo, 1, &dist).unwrap();
        let oracle = label_masks(&topo, 1).unwrap();
        assert_eq!(built.masks(), oracle.as_slice());
        for i in 0..topo.joint_count() {
            let row_total: f64 = built.masks().iter().map(|m| m.row(i).iter().sum::<f64>()).sum();
            assert_eq!(row_total as usize, 1 + topo.degree(i));
        }
        let temporal = build_temporal_partition(&topo, 1, &dist).unwrap();
        assert_eq!(temporal.masks(), oracle.as_slice());
    }
}

#[test]
fn dense_primitives_match_loop_forms() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let a = random_matrix(&mut rng, 5, 4, 10.0);
    let b = random_matrix(&mut rng, 4, 3, 10.0);
    assert_eq!(tensor::matmul(&a, &b).unwrap(), matmul_naive(&a, &b).unwrap());

    // mask (.) normalized adjacency on chain-3
    let topo = SkeletonTopology::chain(3, 1).unwrap();
    let dist = path_distance(&topo).unwrap();
    let p = build_spatial_partition(&topo, 1, &dist).unwrap();
    for k in 0..3 {
        let prod = tensor::elementwise(&p.masks()[k], &p.normalized()[k], Elementwise::Mul).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(prod.get(i, j), p.masks()[k].get(i, j) * p.normalized()[k].get(i, j));
            }
        }
    }

    let x = random_features(&mut rng, 3, 4, 2);
    let r = tensor::relu(&x);
    for (o, v) in r.data().iter().zip(x.data()) {
        assert_eq!(*o, if *v > 0.0 { *v } else { 0.0 });
    }

    let t = random_features(&mut rng, 3, 7, 2);
    let k = stgcn_core::TemporalKernel::from_vec(5, 2, 3, (0..30).map(|_| rng.random_range(-1.0..1.0)).collect())
        .unwrap();
    let bias = [0.1, -0.2, 0.3];
    for stride in 1..=3 {
        let fast = tensor::conv_time(&t, &k, &bias, stride).unwrap();
        let slow = conv_time_naive(&t, &k, &bias, stride);
        assert!(max_abs_diff(fast.data(), slow.data()) <= TOL);
    }

    let pooled = tensor::global_average_pool(&t);
    assert!(max_abs_diff(&pooled, &global_average_pool_naive(&t)) <= 1e-14);

    let w = random_matrix(&mut rng, 2, 4, 1.0);
    let lb = [0.5, 0.25, -1.0, 0.0];
    let lin = tensor::linear(&pooled, &w, &lb).unwrap();
    assert!(max_abs_diff(&lin, &linear_naive(&pooled, &w, &lb)) <= 1e-14);

    let logits = [3.0, 1.0, -2.0];
    let (probs, loss) = tensor::softmax_cross_entropy(&logits, 0).unwrap();
    let expected = softmax_naive(&logits);
    assert!(max_abs_diff(&probs, &expected) <= 1e-15);
    assert!((loss + expected[0].ln()).abs() <= 1e-14);
}

#[test]
fn model_forward_matches_straight_line_reimplementation() {
    let topo = SkeletonTopology::chain(5, 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for (tem, residual) in [
        (Some(TemMode::Residual), false),
        (Some(TemMode::Replace), false),
        (None, true),
    ] {
        let config = ModelConfig {
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
            residual,
            seed: 99,
            ..ModelConfig::default()
        };
        let model = Model::new(config, topo.clone()).unwrap();
        let x = random_features(&mut rng, 5, 6, 2);
        let fast = model_forward(&x, &model.partitions, &model.params).unwrap();
        let slow = model_forward_naive(
            &x,
            &topo,
            &model.partitions.spatial,
            &model.partitions.temporal,
            &model.params,
        )
        .unwrap();
        assert!(max_abs_diff(&fast, &slow) <= TOL, "{fast:?} vs {slow:?}");
    }
}

/// The oracle must not route through the production kernels it checks.
#[test]
fn oracle_source_avoids_production_kernels() {
    let src = include_str!("../src/lib.rs");
    let body = src.split("#[cfg(test)]").next().unwrap();
    for forbidden in [
        "tensor::",
        "layers::",
        "Tape",
        "spatial_gcn(",
        "tem_forward(",
        "model_forward(",
        "path_distance",
        "normalize_partition",
        "build_spatial_partition",
    ] {
        assert!(!body.contains(forbidden), "oracle references `{forbidden}`");
    }
}

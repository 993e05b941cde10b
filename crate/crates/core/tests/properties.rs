use proptest::prelude::*;
use stgcn_core::tensor::{self, Elementwise};
use stgcn_core::{
    build_spatial_partition, layer_forward, path_distance, tem_forward, FeatureTensor, LayerSpec,
    Matrix, Model, ModelConfig, Partitions, SkeletonTopology, SubsetWeights, TemMode,
    TemporalKernel,
};

/// Random tree: joint `j` hangs off some earlier joint.
fn tree() -> impl Strategy<Value = SkeletonTopology> {
    (1usize..=10)
        .prop_flat_map(|n| {
            let parents: Vec<_> = (1..n).map(|j| 0..j).collect();
            (Just(n), parents, 0..n)
        })
        .prop_map(|(n, parents, cog)| {
            let bones: Vec<_> = parents.iter().enumerate().map(|(i, &p)| (p, i + 1)).collect();
            SkeletonTopology::new(n, &bones, cog).unwrap()
        })
}

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(-10.0f64..10.0, rows * cols)
        .prop_map(move |d| Matrix::from_vec(rows, cols, d).unwrap())
}

fn features(n: usize, f: usize, c: usize) -> impl Strategy<Value = FeatureTensor> {
    prop::collection::vec(-1.0f64..1.0, n * f * c)
        .prop_map(move |d| FeatureTensor::from_vec(n, f, c, d).unwrap())
}

fn perm(n: usize) -> impl Strategy<Value = Vec<usize>> {
    Just((0..n).collect::<Vec<_>>()).prop_shuffle()
}

proptest! {
    #[test]
    fn partition_is_exhaustive_pure_and_paired(topo in tree(), hop in 1usize..=3) {
        let dist = path_distance(&topo).unwrap();
        let p = build_spatial_partition(&topo, hop, &dist).unwrap();
        let n = topo.joint_count();
        prop_assert_eq!(&p.masks()[0], &Matrix::identity(n));
        for i in 0..n {
            for j in 0..n {
                let members = p.masks().iter().filter(|m| m.get(i, j) == 1.0).count();
                let expected = usize::from(dist.get(i, j) <= hop);
                prop_assert_eq!(members, expected);
                prop_assert!(p.masks().iter().all(|m| m.get(i, j) == 0.0 || m.get(i, j) == 1.0));
            }
        }
        for &(i, j) in topo.bones() {
            if dist.get(i, topo.cog()) != dist.get(j, topo.cog()) {
                prop_assert_eq!(p.masks()[1].get(i, j), p.masks()[2].get(j, i));
            }
        }
    }

    #[test]
    fn normalized_entries_are_bounded(topo in tree(), hop in 1usize..=2) {
        let dist = path_distance(&topo).unwrap();
        let p = build_spatial_partition(&topo, hop, &dist).unwrap();
        for (mask, norm) in p.masks().iter().zip(p.normalized()) {
            for (&m, &v) in mask.data().iter().zip(norm.data()) {
                prop_assert!(v.is_finite() && v >= 0.0);
                if m == 1.0 {
                    prop_assert!(v > 0.0 && v <= 1.0 + 1e-3);
                } else {
                    prop_assert_eq!(v, 0.0);
                }
            }
        }
    }

    #[test]
    fn partition_is_permutation_equivariant(
        (topo, p) in tree().prop_flat_map(|t| { let n = t.joint_count(); (Just(t), perm(n)) })
    ) {
        let parts = Partitions::build(&topo, 1, 1).unwrap();
        let relabeled = Partitions::build(&topo.permuted(&p).unwrap(), 1, 1).unwrap();
        prop_assert_eq!(relabeled, parts.permuted(&p).unwrap());
    }

    #[test]
    fn matmul_is_linear(a in matrix(3, 4), b in matrix(4, 2), c in matrix(4, 2)) {
        let lhs = tensor::matmul(&a, &tensor::elementwise(&b, &c, Elementwise::Add).unwrap()).unwrap();
        let rhs = tensor::elementwise(
            &tensor::matmul(&a, &b).unwrap(),
            &tensor::matmul(&a, &c).unwrap(),
            Elementwise::Add,
        ).unwrap();
        for (x, y) in lhs.data().iter().zip(rhs.data()) {
            prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0) * 100.0);
        }
    }

    #[test]
    fn unit_stride_preserves_frames(t in features(2, 7, 3), size in prop::sample::select(vec![1usize, 3, 5, 9])) {
        let k = TemporalKernel::identity(size, 3).unwrap();
        let out = tensor::conv_time(&t, &k, &[0.0; 3], 1).unwrap();
        prop_assert_eq!(out.frames(), 7);
        prop_assert_eq!(out, t);
    }

    #[test]
    fn softmax_is_a_distribution(logits in prop::collection::vec(-10.0f64..10.0, 2..8)) {
        let (p, loss) = tensor::softmax_cross_entropy(&logits, 0).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(p.iter().all(|&v| v > 0.0 && v < 1.0));
        prop_assert!(loss >= 0.0);
    }

    #[test]
    fn tem_is_causal(x in features(4, 5, 2), frame in 0usize..5, bump in 0.1f64..1.0) {
        let topo = SkeletonTopology::chain(4, 1).unwrap();
        let parts = Partitions::build(&topo, 1, 1).unwrap();
        let subsets: Vec<_> = (0..3).map(|k| SubsetWeights {
            weights: Matrix::filled(2, 2, 0.5 - 0.3 * k as f64),
            edge_scale: Matrix::ones(4, 4),
        }).collect();
        let mut y = x.clone();
        for n in 0..4 {
            y.set(n, frame, 0, x.get(n, frame, 0) + bump);
        }
        for mode in [TemMode::Replace, TemMode::Residual] {
            let a = tem_forward(&x, &parts.temporal, &subsets, mode).unwrap();
            let b = tem_forward(&y, &parts.temporal, &subsets, mode).unwrap();
            for t in 0..5 {
                let changed = (0..4).any(|n| (0..2).any(|c| a.get(n, t, c) != b.get(n, t, c)));
                let allowed = t == frame + 1 || (mode == TemMode::Residual && t == frame);
                if !allowed {
                    prop_assert!(!changed, "mode {:?} changed frame {} after bumping {}", mode, t, frame);
                }
            }
        }
    }

    #[test]
    fn zero_tem_weights_reduce_to_plain_layer(x in features(5, 6, 2), seed in 0u64..1000) {
        let config = ModelConfig {
            in_channels: 2,
            layers: vec![LayerSpec { out_channels: 3, stride: 1 }],
            class_count: 2,
            kernel_size: 3,
            seed,
            ..ModelConfig::default()
        };
        let mut model = Model::new(config, SkeletonTopology::chain(5, 2).unwrap()).unwrap();
        model.params.zero_tem_weights();
        let with_tem = layer_forward(&x, &model.partitions, &model.params.layers[0]).unwrap();
        let plain = layer_forward(&x, &model.partitions, &model.params.without_tem().layers[0]).unwrap();
        prop_assert_eq!(with_tem, plain);
    }
}

#[test]
fn identity_like_layer_is_normalized_self_pass() {
    // W_0 = I, other W = 0, identity temporal kernel, zero TEM: the layer
    // reduces to relu(A_0 x) with A_0 the normalized self-loop mask.
    let topo = SkeletonTopology::chain(3, 1).unwrap();
    let config = ModelConfig {
        in_channels: 2,
        layers: vec![LayerSpec {
            out_channels: 2,
            stride: 1,
        }],
        class_count: 2,
        kernel_size: 1,
        ..ModelConfig::default()
    };
    let mut model = Model::new(config, topo).unwrap();
    let layer = &mut model.params.layers[0];
    for (k, s) in layer.spatial.iter_mut().enumerate() {
        s.weights = if k == 0 { Matrix::identity(2) } else { Matrix::zeros(2, 2) };
    }
    model.params.zero_tem_weights();
    let layer = &mut model.params.layers[0];
    layer.kernel = TemporalKernel::identity(1, 2).unwrap();
    let x = FeatureTensor::from_fn(3, 4, 2, |n, f, c| (n + 2 * f + c) as f64 * 0.25);
    let out = layer_forward(&x, &model.partitions, layer).unwrap();
    let a0 = &model.partitions.spatial.normalized()[0];
    for n in 0..3 {
        for f in 0..4 {
            for c in 0..2 {
                let expected = a0.get(n, n) * x.get(n, f, c);
                assert!((out.get(n, f, c) - expected).abs() < 1e-15);
            }
        }
    }
}

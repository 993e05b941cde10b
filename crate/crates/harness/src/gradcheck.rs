//! Finite-difference checks of every tape primitive and of a two-layer
//! model with the inter-frame stage enabled.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stgcn_core::tensor::FeatureTensor;
use stgcn_core::{
    loss_only, LayerSpec, Matrix, Model, ModelConfig, SkeletonTopology, Tape, TemMode,
    TemporalKernel, Value, VarId,
};
use stgcn_oracle::{finite_diff_gradients, GradCheckReport};

use crate::error::Result;

pub const DEFAULT_STEP: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct CaseResult {
    pub name: String,
    pub report: GradCheckReport,
}

type Build = fn(&mut Tape, &[VarId]) -> stgcn_core::Result<VarId>;

fn random_values(rng: &mut ChaCha8Rng, len: usize, scale: f64) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(-scale..scale)).collect()
}

fn matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Value {
    Value::Matrix(Matrix::from_vec(rows, cols, random_values(rng, rows * cols, scale)).unwrap())
}

fn features(rng: &mut ChaCha8Rng, n: usize, f: usize, c: usize, scale: f64) -> Value {
    Value::Feature(FeatureTensor::from_vec(n, f, c, random_values(rng, n * f * c, scale)).unwrap())
}

fn with_data(template: &Value, data: &[f64]) -> Value {
    let mut v = template.clone();
    v.data_mut().copy_from_slice(data);
    v
}

/// `loss = sum(out * probe)` with a fixed random probe, so every output
/// entry carries a distinct weight.
fn record_probe_loss(
    tape: &mut Tape,
    inputs: &[Value],
    probe: Option<&Value>,
    build: Build,
) -> stgcn_core::Result<(VarId, VarId, Vec<VarId>)> {
    let ids: Vec<VarId> = inputs.iter().map(|v| tape.param(v.clone())).collect();
    let out = build(tape, &ids)?;
    let loss = match probe {
        Some(p) => {
            let p = tape.constant(p.clone());
            let weighted = tape.mul(out, p)?;
            tape.sum(weighted)
        }
        None => tape.sum(out),
    };
    Ok((loss, out, ids))
}

fn check_primitive(
    name: &str,
    rng: &mut ChaCha8Rng,
    inputs: Vec<Value>,
    build: Build,
    step: f64,
    tolerance: f64,
) -> Result<CaseResult> {
    let mut tape = Tape::new();
    let (_, out, _) = record_probe_loss(&mut tape, &inputs, None, build)?;
    let mut probe = tape.value(out).zeros_like();
    for v in probe.data_mut() {
        *v = rng.random_range(-1.0..1.0);
    }

    let mut tape = Tape::new();
    let (loss, _, ids) = record_probe_loss(&mut tape, &inputs, Some(&probe), build)?;
    let grads = tape.backward(loss)?;
    let analytic: Vec<Vec<f64>> = ids
        .iter()
        .map(|&id| grads.get(id).expect("learnable input").data().to_vec())
        .collect();
    let flat: Vec<Vec<f64>> = inputs.iter().map(|v| v.data().to_vec()).collect();
    let names: Vec<String> = (0..inputs.len()).map(|i| format!("{name}.input{i}")).collect();
    let report = finite_diff_gradients(
        |params| {
            let values: Vec<Value> = inputs.iter().zip(params).map(|(t, d)| with_data(t, d)).collect();
            let mut tape = Tape::new();
            match record_probe_loss(&mut tape, &values, Some(&probe), build) {
                Ok((loss, _, _)) => tape.value(loss).as_scalar().unwrap_or(f64::NAN),
                Err(_) => f64::NAN,
            }
        },
        &names,
        &flat,
        &analytic,
        step,
        tolerance,
    )?;
    Ok(CaseResult {
        name: name.to_string(),
        report,
    })
}

/// Every primitive on random inputs of magnitude at most 10.
pub fn primitive_suite(seed: u64, step: f64, tolerance: f64) -> Result<Vec<CaseResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = &mut rng;
    let cases: Vec<(&str, Vec<Value>, Build)> = vec![
        ("matmul", vec![matrix(r, 3, 4, 10.0), matrix(r, 4, 2, 10.0)], |t, i| t.matmul(i[0], i[1])),
        ("add", vec![matrix(r, 3, 3, 10.0), matrix(r, 3, 3, 10.0)], |t, i| t.add(i[0], i[1])),
        ("mul", vec![matrix(r, 3, 3, 10.0), matrix(r, 3, 3, 10.0)], |t, i| t.mul(i[0], i[1])),
        ("scale", vec![matrix(r, 2, 3, 10.0)], |t, i| Ok(t.scale(i[0], -2.5))),
        ("relu", vec![features(r, 3, 4, 2, 10.0)], |t, i| t.relu(i[0])),
        ("node_mix", vec![matrix(r, 4, 4, 10.0), features(r, 4, 3, 2, 10.0)], |t, i| t.node_mix(i[0], i[1])),
        ("channel_mix", vec![features(r, 3, 3, 2, 10.0), matrix(r, 2, 4, 10.0)], |t, i| t.channel_mix(i[0], i[1])),
        ("shift_frames", vec![features(r, 3, 4, 2, 10.0)], |t, i| t.shift_frames(i[0])),
        (
            "conv_time",
            vec![
                features(r, 2, 6, 2, 10.0),
                Value::Kernel(TemporalKernel::from_vec(3, 2, 3, random_values(r, 18, 10.0)).unwrap()),
                Value::Vector(random_values(r, 3, 10.0)),
            ],
            |t, i| t.conv_time(i[0], i[1], i[2], 1),
        ),
        (
            "conv_time_stride2",
            vec![
                features(r, 2, 7, 2, 10.0),
                Value::Kernel(TemporalKernel::from_vec(5, 2, 2, random_values(r, 20, 10.0)).unwrap()),
                Value::Vector(random_values(r, 2, 10.0)),
            ],
            |t, i| t.conv_time(i[0], i[1], i[2], 2),
        ),
        ("global_average_pool", vec![features(r, 3, 4, 3, 10.0)], |t, i| t.global_average_pool(i[0])),
        (
            "linear",
            vec![
                Value::Vector(random_values(r, 4, 10.0)),
                matrix(r, 4, 3, 10.0),
                Value::Vector(random_values(r, 3, 10.0)),
            ],
            |t, i| t.linear(i[0], i[1], i[2]),
        ),
        (
            "softmax_cross_entropy",
            vec![Value::Vector(random_values(r, 5, 10.0))],
            |t, i| t.softmax_cross_entropy(i[0], 2),
        ),
        ("sum", vec![matrix(r, 2, 2, 10.0)], |t, i| Ok(t.sum(i[0]))),
    ];
    cases
        .into_iter()
        .map(|(name, inputs, build)| check_primitive(name, &mut rng, inputs, build, step, tolerance))
        .collect()
}

/// The micro model used by the model-level check: chain of 5 joints, two
/// layers (second one strided), residual inter-frame stage, kernel size 3.
pub fn micro_model(seed: u64) -> Result<(Model, FeatureTensor, usize)> {
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
        tem: Some(TemMode::Residual),
        seed,
        ..ModelConfig::default()
    };
    let mut model = Model::new(config, SkeletonTopology::chain(5, 2)?)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    // Move edge scales and biases off their initial constants so their
    // gradients are generic.
    let names: Vec<String> = model.params.named_params().into_iter().map(|(n, _)| n).collect();
    for (name, slice) in names.iter().zip(model.params.param_slices_mut()) {
        if name.ends_with(".m") {
            slice.iter_mut().for_each(|v| *v += rng.random_range(-0.3..0.3));
        } else if name.ends_with("bias") || name == "head.b" {
            slice.iter_mut().for_each(|v| *v = rng.random_range(-0.2..0.2));
        }
    }
    let input = FeatureTensor::from_vec(5, 5, 2, random_values(&mut rng, 50, 1.0))?;
    Ok((model, input, 1))
}

pub fn model_check(seed: u64, step: f64, tolerance: f64) -> Result<CaseResult> {
    let (model, input, label) = micro_model(seed)?;
    let analytic = model.loss_and_gradients(&input, label)?.grads;
    let named = model.params.named_params();
    let names: Vec<String> = named.iter().map(|(n, _)| n.clone()).collect();
    let flat: Vec<Vec<f64>> = named.iter().map(|(_, v)| v.data().to_vec()).collect();
    let report = finite_diff_gradients(
        |params| {
            let mut p = model.params.clone();
            for (dst, src) in p.param_slices_mut().into_iter().zip(params) {
                dst.copy_from_slice(src);
            }
            loss_only(&input, label, &model.partitions, &p).unwrap_or(f64::NAN)
        },
        &names,
        &flat,
        &analytic,
        step,
        tolerance,
    )?;
    Ok(CaseResult {
        name: "model_2layer_tem".into(),
        report,
    })
}

/// Primitives plus the model check.
pub fn full_suite(seed: u64, step: f64, tolerance: f64) -> Result<Vec<CaseResult>> {
    let mut out = primitive_suite(seed, step, tolerance)?;
    out.push(model_check(seed, step, tolerance)?);
    Ok(out)
}

use stgcn_harness::gradcheck::{model_check, primitive_suite, DEFAULT_STEP};

fn failures(cases: &[stgcn_harness::gradcheck::CaseResult]) -> Vec<String> {
    cases
        .iter()
        .filter(|c| !c.report.passed())
        .map(|c| format!("{}: {:.3e}", c.name, c.report.max_relative_error()))
        .collect()
}

/// Every primitive on inputs of magnitude up to 10, relative error 1e-6.
#[test]
fn primitives_match_central_differences() {
    let cases = primitive_suite(0, DEFAULT_STEP, 1e-6).unwrap();
    assert_eq!(cases.len(), 14);
    let failed = failures(&cases);
    assert!(failed.is_empty(), "{failed:?}");
}

#[test]
fn two_layer_model_matches_central_differences() {
    for seed in 0..3 {
        let case = model_check(seed, DEFAULT_STEP, 1e-5).unwrap();
        assert!(case.report.passed(), "seed {seed}: {:.3e}", case.report.max_relative_error());
        assert!(case.report.params.len() >= 20);
    }
}

/// Exact reference for the one primitive whose smallest gradient entries sit
/// below the resolution of a central difference at this step size.
#[test]
fn cross_entropy_gradient_matches_closed_form() {
    use rand::{Rng, SeedableRng};
    use stgcn_core::{tensor, Tape, Value};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
    for _ in 0..200 {
        let z: Vec<f64> = (0..5).map(|_| rng.random_range(-10.0..10.0)).collect();
        let class = rng.random_range(0..5);
        let mut tape = Tape::new();
        let x = tape.param(Value::Vector(z.clone()));
        let loss = tape.softmax_cross_entropy(x, class).unwrap();
        let grads = tape.backward(loss).unwrap();
        let p = tensor::softmax(&z);
        for (i, &g) in grads.get(x).unwrap().data().iter().enumerate() {
            let expected = p[i] - if i == class { 1.0 } else { 0.0 };
            assert!((g - expected).abs() <= 1e-15 * expected.abs().max(1e-300), "{g} vs {expected}");
        }
    }
}

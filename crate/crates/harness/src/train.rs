//! Mini-batch training with Nesterov-momentum SGD.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use stgcn_core::{Model, SampleGradients};

use crate::dataset::Dataset;
use crate::error::{HarnessError, Result};
use crate::eval::top_class;

/// Separates the shuffling stream from the initialization stream when both
/// derive from one user seed.
const SHUFFLE_STREAM: u64 = 0x5348_5546_464c_4521;

#[derive(Debug, Clone, PartialEq)]
pub enum LrSchedule {
    Fixed,
    /// Multiply by `factor` once each milestone (a fraction of the total
    /// epoch count) is reached.
    Step { milestones: Vec<f64>, factor: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub schedule: LrSchedule,
    /// Zero the inter-frame channel projections and keep the whole
    /// inter-frame stage fixed.
    pub freeze_tem: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            momentum: 0.9,
            weight_decay: 1e-4,
            batch_size: 8,
            epochs: 80,
            seed: 0,
            schedule: LrSchedule::Step {
                milestones: vec![0.5, 0.75],
                factor: 0.1,
            },
            freeze_tem: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(HarnessError::Dataset(format!("train config: {m}")));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be finite and non-negative");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must be in [0, 1)");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight_decay must be finite and non-negative");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        Ok(())
    }

    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        match &self.schedule {
            LrSchedule::Fixed => self.learning_rate,
            LrSchedule::Step { milestones, factor } => {
                let passed = milestones
                    .iter()
                    .filter(|&&m| epoch >= (m * self.epochs as f64).round() as usize)
                    .count();
                self.learning_rate * factor.powi(passed as i32)
            }
        }
    }
}

/// Nesterov momentum with L2 weight decay:
///
/// ```text
/// d = g + wd * p
/// v = mu * v - lr * d
/// p = p + mu * v - lr * d
/// ```
#[derive(Debug, Clone)]
pub struct NesterovSgd {
    pub momentum: f64,
    pub weight_decay: f64,
    velocity: Vec<Vec<f64>>,
}

impl NesterovSgd {
    pub fn new(momentum: f64, weight_decay: f64) -> Self {
        Self {
            momentum,
            weight_decay,
            velocity: Vec::new(),
        }
    }

    /// `frozen[i]` skips tensor `i` entirely.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[Vec<f64>], lr: f64, frozen: &[bool]) {
        if self.velocity.is_empty() {
            self.velocity = params.iter().map(|p| vec![0.0; p.len()]).collect();
        }
        for (i, (param, grad)) in params.iter_mut().zip(grads).enumerate() {
            if frozen.get(i).copied().unwrap_or(false) {
                continue;
            }
            for ((p, &g), v) in param.iter_mut().zip(grad).zip(&mut self.velocity[i]) {
                let d = g + self.weight_decay * *p;
                *v = self.momentum * *v - lr * d;
                *p += self.momentum * *v - lr * d;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub learning_rate: f64,
    pub mean_loss: f64,
    pub train_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct History {
    pub epochs: Vec<EpochStats>,
}

impl History {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,learning_rate,mean_loss,train_accuracy\n");
        for e in &self.epochs {
            let _ = writeln!(
                out,
                "{},{:e},{:e},{:e}",
                e.epoch, e.learning_rate, e.mean_loss, e.train_accuracy
            );
        }
        out
    }

    pub fn final_accuracy(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.train_accuracy)
    }

    pub fn best_accuracy(&self) -> f64 {
        self.epochs.iter().map(|e| e.train_accuracy).fold(0.0, f64::max)
    }
}

/// Which tensors in `named_params` order stay fixed.
pub fn frozen_mask(model: &Model, freeze_tem: bool) -> Vec<bool> {
    model
        .params
        .named_params()
        .iter()
        .map(|(name, _)| freeze_tem && name.contains(".tem."))
        .collect()
}

/// Trains `model` in place. The loss per batch is the mean cross-entropy;
/// per-sample gradients are summed in sample order so the result does not
/// depend on thread scheduling.
pub fn train(model: &mut Model, data: &Dataset, cfg: &TrainConfig) -> Result<History> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(HarnessError::Dataset("cannot train on an empty dataset".into()));
    }
    data.validate()?;
    if data.class_count != model.config.class_count {
        return Err(HarnessError::Dataset(format!(
            "dataset has {} classes, model {}",
            data.class_count, model.config.class_count
        )));
    }
    if cfg.freeze_tem {
        model.params.zero_tem_weights();
    }
    let frozen = frozen_mask(model, cfg.freeze_tem);
    let mut optimizer = NesterovSgd::new(cfg.momentum, cfg.weight_decay);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ SHUFFLE_STREAM);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = History::default();

    for epoch in 0..cfg.epochs {
        let lr = cfg.learning_rate_at(epoch);
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for (batch_idx, batch) in order.chunks(cfg.batch_size).enumerate() {
            let results: Vec<SampleGradients> = batch
                .par_iter()
                .map(|&i| {
                    let s = &data.samples[i];
                    model.loss_and_gradients(&s.features, s.label)
                })
                .collect::<std::result::Result<_, _>>()?;
            let mut total = results[0].grads.clone();
            for r in &results[1..] {
                for (acc, g) in total.iter_mut().zip(&r.grads) {
                    for (a, b) in acc.iter_mut().zip(g) {
                        *a += b;
                    }
                }
            }
            let scale = 1.0 / batch.len() as f64;
            total.iter_mut().flatten().for_each(|g| *g *= scale);
            for (r, &i) in results.iter().zip(batch) {
                if !r.loss.is_finite() {
                    return Err(HarnessError::NonFiniteLoss {
                        epoch,
                        batch: batch_idx,
                    });
                }
                loss_sum += r.loss;
                if top_class(&r.probabilities) == data.samples[i].label {
                    correct += 1;
                }
            }
            let mut slices = model.params.param_slices_mut();
            optimizer.step(&mut slices, &total, lr, &frozen);
        }
        history.epochs.push(EpochStats {
            epoch,
            learning_rate: lr,
            mean_loss: loss_sum / data.len() as f64,
            train_accuracy: correct as f64 / data.len() as f64,
        });
    }
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plain_sgd_on_quadratic_matches_closed_form() {
        let lr = 0.15;
        let mut theta = vec![2.0];
        let mut opt = NesterovSgd::new(0.0, 0.0);
        let mut expected = 2.0;
        for _ in 0..10 {
            let grad = vec![vec![2.0 * theta[0]]];
            opt.step(&mut [theta.as_mut_slice()], &grad, lr, &[]);
            expected *= 1.0 - 2.0 * lr;
            assert!((theta[0] - expected).abs() <= 1e-15 * expected.abs().max(1.0));
        }
    }

    #[test]
    fn weight_decay_alone_is_geometric() {
        let (lr, wd) = (0.1, 0.01);
        let mut theta = vec![1.0, -3.0];
        let mut opt = NesterovSgd::new(0.0, wd);
        for step in 1..=5 {
            opt.step(&mut [theta.as_mut_slice()], &[vec![0.0, 0.0]], lr, &[]);
            let factor = (1.0 - lr * wd).powi(step);
            assert!((theta[0] - factor).abs() < 1e-15);
            assert!((theta[1] + 3.0 * factor).abs() < 1e-14);
        }
    }

    #[test]
    fn nesterov_matches_hand_iteration() {
        // mu = 0.9, lr = 0.1, wd = 0, constant gradient 1.
        let mut p = vec![0.0];
        let mut opt = NesterovSgd::new(0.9, 0.0);
        opt.step(&mut [p.as_mut_slice()], &[vec![1.0]], 0.1, &[]);
        // v = -0.1, p = 0 + 0.9 * -0.1 - 0.1 = -0.19
        assert!((p[0] + 0.19).abs() < 1e-15);
        opt.step(&mut [p.as_mut_slice()], &[vec![1.0]], 0.1, &[]);
        // v = 0.9 * -0.1 - 0.1 = -0.19, p = -0.19 + 0.9 * -0.19 - 0.1 = -0.461
        assert!((p[0] + 0.461).abs() < 1e-15);
    }

    #[test]
    fn frozen_tensors_do_not_move() {
        let mut a = vec![1.0];
        let mut b = vec![1.0];
        let mut opt = NesterovSgd::new(0.9, 0.1);
        opt.step(&mut [a.as_mut_slice(), b.as_mut_slice()], &[vec![1.0], vec![1.0]], 0.1, &[true, false]);
        assert_eq!(a[0], 1.0);
        assert_ne!(b[0], 1.0);
    }

    #[test]
    fn step_schedule() {
        let cfg = TrainConfig {
            epochs: 100,
            ..TrainConfig::default()
        };
        assert_eq!(cfg.learning_rate_at(0), 0.1);
        assert_eq!(cfg.learning_rate_at(49), 0.1);
        assert!((cfg.learning_rate_at(50) - 0.01).abs() < 1e-15);
        assert!((cfg.learning_rate_at(75) - 0.001).abs() < 1e-15);
        let fixed = TrainConfig {
            schedule: LrSchedule::Fixed,
            ..cfg
        };
        assert_eq!(fixed.learning_rate_at(99), 0.1);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig {
            momentum: 1.0,
            ..TrainConfig::default()
        }
        .validate()
        .is_err());
        assert!(TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        }
        .validate()
        .is_err());
    }
}

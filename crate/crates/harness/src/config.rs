//! `key = value` run configuration for the `train` command.

use std::path::PathBuf;

use stgcn_core::{LayerSpec, SkeletonTopology, TemMode};

use crate::error::{HarnessError, Result};
use crate::train::{LrSchedule, TrainConfig};

/// Model shape settings; input channels and class count come from the data.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSettings {
    pub channels: Vec<usize>,
    pub strides: Vec<usize>,
    pub kernel_size: usize,
    pub spatial_hop: usize,
    pub temporal_hop: usize,
    pub tem: Option<TemMode>,
    pub residual: bool,
}

impl Default for ModelSettings {
    fn default() -> Self {
        Self {
            channels: vec![16, 16],
            strides: vec![1, 1],
            kernel_size: stgcn_core::layers::DEFAULT_KERNEL_SIZE,
            spatial_hop: 1,
            temporal_hop: 1,
            tem: Some(TemMode::Residual),
            residual: false,
        }
    }
}

impl ModelSettings {
    pub fn model_config(&self, in_channels: usize, class_count: usize, seed: u64) -> stgcn_core::ModelConfig {
        stgcn_core::ModelConfig {
            in_channels,
            layers: self
                .channels
                .iter()
                .zip(&self.strides)
                .map(|(&out_channels, &stride)| LayerSpec {
                    out_channels,
                    stride,
                })
                .collect(),
            class_count,
            kernel_size: self.kernel_size,
            spatial_hop: self.spatial_hop,
            temporal_hop: self.temporal_hop,
            tem: self.tem,
            residual: self.residual,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub topology: String,
    pub data: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub history: Option<PathBuf>,
    pub model: ModelSettings,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            topology: "openpose18".into(),
            data: None,
            checkpoint: None,
            history: None,
            model: ModelSettings::default(),
            train: TrainConfig::default(),
        }
    }
}

fn list<T: std::str::FromStr>(value: &str) -> Option<Vec<T>> {
    value.split(',').map(|v| v.trim().parse().ok()).collect()
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut decay_at: Option<Vec<f64>> = None;
        let mut decay_factor = 0.1;
        let mut step_schedule = true;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| HarnessError::Config {
                line: line_no,
                message,
            };
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
            let invalid = || err(format!("invalid value `{value}` for `{key}`"));
            macro_rules! num {
                () => {
                    value.parse().map_err(|_| invalid())?
                };
            }
            match key {
                "topology" => cfg.topology = value.to_string(),
                "data" => cfg.data = Some(value.into()),
                "checkpoint" => cfg.checkpoint = Some(value.into()),
                "history" => cfg.history = Some(value.into()),
                "channels" => cfg.model.channels = list(value).ok_or_else(invalid)?,
                "strides" => cfg.model.strides = list(value).ok_or_else(invalid)?,
                "kernel_size" => cfg.model.kernel_size = num!(),
                "spatial_hop" => cfg.model.spatial_hop = num!(),
                "temporal_hop" => cfg.model.temporal_hop = num!(),
                "tem" => {
                    cfg.model.tem = match value {
                        "off" | "none" => None,
                        other => Some(other.parse().map_err(|_| invalid())?),
                    }
                }
                "residual" => cfg.model.residual = num!(),
                "learning_rate" => cfg.train.learning_rate = num!(),
                "momentum" => cfg.train.momentum = num!(),
                "weight_decay" => cfg.train.weight_decay = num!(),
                "batch_size" => cfg.train.batch_size = num!(),
                "epochs" => cfg.train.epochs = num!(),
                "seed" => cfg.train.seed = num!(),
                "freeze_tem" => cfg.train.freeze_tem = num!(),
                "lr_schedule" => {
                    step_schedule = match value {
                        "fixed" => false,
                        "step" => true,
                        _ => return Err(invalid()),
                    }
                }
                "lr_decay_at" => decay_at = Some(list(value).ok_or_else(invalid)?),
                "lr_decay_factor" => decay_factor = num!(),
                _ => return Err(err(format!("unknown key `{key}`"))),
            }
        }
        if cfg.model.channels.len() != cfg.model.strides.len() {
            return Err(HarnessError::Config {
                line: 0,
                message: format!(
                    "`channels` lists {} layers but `strides` lists {}",
                    cfg.model.channels.len(),
                    cfg.model.strides.len()
                ),
            });
        }
        cfg.train.schedule = if step_schedule {
            LrSchedule::Step {
                milestones: decay_at.unwrap_or_else(|| vec![0.5, 0.75]),
                factor: decay_factor,
            }
        } else {
            LrSchedule::Fixed
        };
        cfg.train.validate()?;
        Ok(cfg)
    }
}

/// Built-in topology name or path to a topology file.
pub fn resolve_topology(spec: &str) -> Result<SkeletonTopology> {
    if let Some(t) = SkeletonTopology::builtin(spec) {
        return Ok(t);
    }
    match std::fs::read_to_string(spec) {
        Ok(text) => Ok(SkeletonTopology::parse(&text)?),
        Err(_) => Err(HarnessError::UnknownTopology(spec.to_string())),
    }
}

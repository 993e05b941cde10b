//! Seeded synthetic action classes on an arbitrary skeleton.
//!
//! Every class is a fixed motion template on top of a rest pose derived
//! from the skeleton's hop structure:
//!
//! * class 0: a limb chain translates along +x,
//! * class 1: the same chain translates along -x,
//! * class `2 + 2m`: the chain oscillates along y at `1 + m` cycles,
//! * class `3 + 2m`: the ends of two limbs swing together in antiphase at
//!   `1 + m` cycles.
//!
//! Samples of one class differ only by i.i.d. Gaussian noise.

use std::f64::consts::TAU;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use stgcn_core::{path_distance, FeatureTensor, SkeletonTopology};

use crate::dataset::{Dataset, Sample};
use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub class_count: usize,
    pub samples_per_class: usize,
    pub frames: usize,
    /// 2 for planar coordinates, 3 for spatial ones.
    pub channels: usize,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            class_count: 4,
            samples_per_class: 10,
            frames: 20,
            channels: 2,
            noise_sigma: 0.05,
            seed: 0,
        }
    }
}

/// Rest pose and the joints each template moves.
struct Rig {
    rest: Vec<[f64; 3]>,
    limb: Vec<usize>,
    other_end: usize,
}

impl Rig {
    fn new(topology: &SkeletonTopology) -> Result<Self> {
        let dist = path_distance(topology)?;
        let n = topology.joint_count();
        let cog = topology.cog();
        let depth: Vec<usize> = (0..n).map(|j| dist.get(j, cog)).collect();
        let max_depth = depth.iter().copied().max().unwrap_or(0).max(1);

        let mut rest = vec![[0.0; 3]; n];
        for d in 1..=max_depth {
            let ring: Vec<usize> = (0..n).filter(|&j| depth[j] == d).collect();
            for (rank, &j) in ring.iter().enumerate() {
                let angle = TAU * rank as f64 / ring.len() as f64 + 0.3 * d as f64;
                let radius = 0.6 * d as f64 / max_depth as f64;
                rest[j] = [radius * angle.cos(), radius * angle.sin(), 0.1 * (j as f64).sin()];
            }
        }

        // Limb: the deepest joint (lowest index on ties) and up to two of its
        // ancestors toward the center.
        let end = (0..n).max_by_key(|&j| (depth[j], std::cmp::Reverse(j))).unwrap_or(0);
        let mut limb = vec![end];
        while limb.len() < 3 {
            let last = *limb.last().unwrap();
            match topology
                .neighbors(last)
                .into_iter()
                .find(|&p| depth[p] + 1 == depth[last])
            {
                Some(parent) => limb.push(parent),
                None => break,
            }
        }
        let other_end = (0..n)
            .filter(|&j| j != end)
            .max_by_key(|&j| (dist.get(j, end), std::cmp::Reverse(j)))
            .unwrap_or(end);
        Ok(Self {
            rest,
            limb,
            other_end,
        })
    }

    fn template(&self, class: usize, frames: usize, channels: usize) -> FeatureTensor {
        let n = self.rest.len();
        FeatureTensor::from_fn(n, frames, channels, |j, t, c| {
            let tau = if frames > 1 { t as f64 / (frames - 1) as f64 } else { 0.0 };
            let mut pos = self.rest[j];
            let in_limb = self.limb.contains(&j);
            match class {
                0 if in_limb => pos[0] += 0.4 * tau,
                1 if in_limb => pos[0] -= 0.4 * tau,
                c if c >= 2 => {
                    let cycles = (1 + (c - 2) / 2) as f64;
                    let wave = 0.3 * (TAU * cycles * tau).sin();
                    if c % 2 == 0 {
                        if in_limb {
                            pos[1] += wave;
                        }
                    } else if j == self.limb[0] {
                        pos[1] += wave;
                    } else if j == self.other_end {
                        pos[1] -= wave;
                    }
                }
                _ => {}
            }
            pos[c]
        })
    }
}

/// Noise-free motion template of every class.
pub fn class_templates(topology: &SkeletonTopology, spec: &SyntheticSpec) -> Result<Vec<FeatureTensor>> {
    check_spec(spec)?;
    let rig = Rig::new(topology)?;
    Ok((0..spec.class_count)
        .map(|c| rig.template(c, spec.frames, spec.channels))
        .collect())
}

fn check_spec(spec: &SyntheticSpec) -> Result<()> {
    if spec.class_count < 2 {
        return Err(HarnessError::Dataset("at least two classes are required".into()));
    }
    if !(2..=3).contains(&spec.channels) {
        return Err(HarnessError::Dataset("channels must be 2 or 3".into()));
    }
    if spec.frames == 0 {
        return Err(HarnessError::Dataset("frames must be positive".into()));
    }
    if !(spec.noise_sigma >= 0.0 && spec.noise_sigma.is_finite()) {
        return Err(HarnessError::Dataset("noise sigma must be finite and non-negative".into()));
    }
    Ok(())
}

pub fn generate_synthetic(topology: &SkeletonTopology, spec: &SyntheticSpec) -> Result<Dataset> {
    let templates = class_templates(topology, spec)?;
    let noise = Normal::new(0.0, spec.noise_sigma)
        .map_err(|e| HarnessError::Dataset(format!("noise distribution: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut dataset = Dataset::empty(topology.joint_count(), spec.frames, spec.channels, spec.class_count);
    for (class, template) in templates.iter().enumerate() {
        for i in 0..spec.samples_per_class {
            let mut features = template.clone();
            for v in features.data_mut() {
                *v += noise.sample(&mut rng);
            }
            dataset.samples.push(Sample {
                features,
                label: class,
                sample_id: format!("c{class}_s{i}"),
            });
        }
    }
    Ok(dataset)
}

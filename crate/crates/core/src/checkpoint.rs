//! Binary checkpoint container.
//!
//! ```text
//! "SKPT" | 0x01 | u32 entry_count
//! entry: u16 name_len | name (UTF-8) | u8 rank | rank x u32 dims | f64 values
//! ```
//!
//! All integers and floats are little-endian; values are row-major.
//! A [`Model`] is stored as its configuration, its topology and its
//! parameters, so a checkpoint alone is enough to run inference.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::layers::{
    ClassifierParams, LayerParams, LayerSpec, Model, ModelConfig, ModelParams, SubsetWeights, TemMode,
};
use crate::tensor::{Matrix, TemporalKernel};
use crate::topology::{SkeletonTopology, SUBSET_COUNT};

pub const MAGIC: &[u8; 4] = b"SKPT";
pub const VERSION: u8 = 0x01;

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub name: String,
    pub dims: Vec<u32>,
    pub values: Vec<f64>,
}

impl Entry {
    pub fn new(name: impl Into<String>, dims: Vec<u32>, values: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            dims,
            values,
        }
    }

    fn scalar(name: &str, value: f64) -> Self {
        Self::new(name, vec![], vec![value])
    }

    fn vector(name: &str, values: Vec<f64>) -> Self {
        Self::new(name, vec![values.len() as u32], values)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub entries: Vec<Entry>,
}

fn err(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

fn read_exact<const N: usize>(r: &mut impl Read, what: &str) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)
        .map_err(|_| err(format!("truncated while reading {what}")))?;
    Ok(buf)
}

impl Checkpoint {
    pub fn get(&self, name: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.name == name)
    }

    fn require(&self, name: &str) -> Result<&Entry> {
        self.get(name).ok_or_else(|| err(format!("missing entry `{name}`")))
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&[VERSION])?;
        w.write_all(&(self.entries.len() as u32).to_le_bytes())?;
        for entry in &self.entries {
            let name = entry.name.as_bytes();
            let name_len = u16::try_from(name.len()).map_err(|_| err("entry name too long"))?;
            let rank = u8::try_from(entry.dims.len()).map_err(|_| err("entry rank too large"))?;
            let expected: u64 = entry.dims.iter().map(|&d| d as u64).product();
            if expected != entry.values.len() as u64 {
                return Err(err(format!(
                    "entry `{}` has {} values for dims {:?}",
                    entry.name,
                    entry.values.len(),
                    entry.dims
                )));
            }
            w.write_all(&name_len.to_le_bytes())?;
            w.write_all(name)?;
            w.write_all(&[rank])?;
            for d in &entry.dims {
                w.write_all(&d.to_le_bytes())?;
            }
            for v in &entry.values {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        self.write_to(&mut out)?;
        Ok(out)
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let magic: [u8; 4] = read_exact(r, "magic")?;
        if &magic != MAGIC {
            return Err(err(format!("bad magic {magic:?}")));
        }
        let [version] = read_exact::<1>(r, "version")?;
        if version != VERSION {
            return Err(err(format!("unsupported version {version}")));
        }
        let count = u32::from_le_bytes(read_exact(r, "entry count")?);
        let mut entries = Vec::new();
        for _ in 0..count {
            let name_len = u16::from_le_bytes(read_exact(r, "name length")?) as usize;
            let mut name = vec![0u8; name_len];
            r.read_exact(&mut name)
                .map_err(|_| err("truncated while reading entry name"))?;
            let name = String::from_utf8(name).map_err(|_| err("entry name is not UTF-8"))?;
            let [rank] = read_exact::<1>(r, "rank")?;
            let dims = (0..rank)
                .map(|_| read_exact(r, "dimension").map(u32::from_le_bytes))
                .collect::<Result<Vec<u32>>>()?;
            let len = dims
                .iter()
                .try_fold(1u64, |acc, &d| acc.checked_mul(d as u64))
                .filter(|&n| n <= (usize::MAX / 8) as u64)
                .ok_or_else(|| err(format!("entry `{name}` size overflows")))?;
            let mut values = Vec::with_capacity((len as usize).min(1 << 20));
            for _ in 0..len {
                values.push(f64::from_le_bytes(read_exact(r, "values")?));
            }
            entries.push(Entry { name, dims, values });
        }
        let mut trailing = [0u8; 1];
        if r.read(&mut trailing)? != 0 {
            return Err(err("trailing bytes after last entry"));
        }
        Ok(Self { entries })
    }

    pub fn from_bytes(mut bytes: &[u8]) -> Result<Self> {
        Self::read_from(&mut bytes)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

fn as_count(entry: &Entry) -> Result<usize> {
    let v = *entry
        .values
        .first()
        .ok_or_else(|| err(format!("entry `{}` is empty", entry.name)))?;
    if v < 0.0 || v.fract() != 0.0 || v > u32::MAX as f64 {
        return Err(err(format!("entry `{}` is not a count: {v}", entry.name)));
    }
    Ok(v as usize)
}

fn as_matrix(entry: &Entry) -> Result<Matrix> {
    match entry.dims.as_slice() {
        &[r, c] => Matrix::from_vec(r as usize, c as usize, entry.values.clone()),
        _ => Err(err(format!("entry `{}` is not rank 2", entry.name))),
    }
}

impl Model {
    pub fn to_checkpoint(&self) -> Checkpoint {
        let c = &self.config;
        let mut entries = vec![
            Entry::scalar("config.in_channels", c.in_channels as f64),
            Entry::vector(
                "config.layer_channels",
                c.layers.iter().map(|l| l.out_channels as f64).collect(),
            ),
            Entry::vector(
                "config.layer_strides",
                c.layers.iter().map(|l| l.stride as f64).collect(),
            ),
            Entry::scalar("config.class_count", c.class_count as f64),
            Entry::scalar("config.kernel_size", c.kernel_size as f64),
            Entry::scalar("config.spatial_hop", c.spatial_hop as f64),
            Entry::scalar("config.temporal_hop", c.temporal_hop as f64),
            Entry::scalar(
                "config.tem",
                match c.tem {
                    None => 0.0,
                    Some(TemMode::Residual) => 1.0,
                    Some(TemMode::Replace) => 2.0,
                },
            ),
            Entry::scalar("config.residual", if c.residual { 1.0 } else { 0.0 }),
            Entry::scalar("topology.joints", self.topology.joint_count() as f64),
            Entry::scalar("topology.cog", self.topology.cog() as f64),
            Entry::new(
                "topology.bones",
                vec![self.topology.bones().len() as u32, 2],
                self.topology
                    .bones()
                    .iter()
                    .flat_map(|&(a, b)| [a as f64, b as f64])
                    .collect(),
            ),
        ];
        for (name, value) in self.params.named_params() {
            let dims = value.dims().into_iter().map(|d| d as u32).collect();
            entries.push(Entry::new(name, dims, value.data().to_vec()));
        }
        Checkpoint { entries }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let count = |name: &str| ckpt.require(name).and_then(as_count);
        let counts = |name: &str| -> Result<Vec<usize>> {
            let e = ckpt.require(name)?;
            e.values
                .iter()
                .map(|&v| as_count(&Entry::scalar(&e.name, v)))
                .collect()
        };
        let channels = counts("config.layer_channels")?;
        let strides = counts("config.layer_strides")?;
        if channels.len() != strides.len() {
            return Err(err("layer channel and stride lists differ in length"));
        }
        let config = ModelConfig {
            in_channels: count("config.in_channels")?,
            layers: channels
                .iter()
                .zip(&strides)
                .map(|(&out_channels, &stride)| LayerSpec {
                    out_channels,
                    stride,
                })
                .collect(),
            class_count: count("config.class_count")?,
            kernel_size: count("config.kernel_size")?,
            spatial_hop: count("config.spatial_hop")?,
            temporal_hop: count("config.temporal_hop")?,
            tem: match count("config.tem")? {
                0 => None,
                1 => Some(TemMode::Residual),
                2 => Some(TemMode::Replace),
                other => return Err(err(format!("unknown TEM code {other}"))),
            },
            residual: count("config.residual")? != 0,
            seed: 0,
        };
        config.validate()?;

        let bones_entry = ckpt.require("topology.bones")?;
        let bones = bones_entry
            .values
            .chunks_exact(2)
            .map(|p| Ok((as_count(&Entry::scalar("bone", p[0]))?, as_count(&Entry::scalar("bone", p[1]))?)))
            .collect::<Result<Vec<_>>>()?;
        let topology = SkeletonTopology::new(count("topology.joints")?, &bones, count("topology.cog")?)?;

        let matrix = |name: String| ckpt.require(&name).and_then(as_matrix);
        let subsets = |prefix: String| -> Result<Vec<SubsetWeights>> {
            (0..SUBSET_COUNT)
                .map(|k| {
                    Ok(SubsetWeights {
                        weights: matrix(format!("{prefix}.{k}.w"))?,
                        edge_scale: matrix(format!("{prefix}.{k}.m"))?,
                    })
                })
                .collect()
        };
        let mut layers = Vec::new();
        let mut c_in = config.in_channels;
        for (l, spec) in config.layers.iter().enumerate() {
            let kernel_entry = ckpt.require(&format!("layers.{l}.temporal.kernel"))?;
            let kernel = match kernel_entry.dims.as_slice() {
                &[s, ci, co] => {
                    TemporalKernel::from_vec(s as usize, ci as usize, co as usize, kernel_entry.values.clone())?
                }
                _ => return Err(err(format!("entry `{}` is not rank 3", kernel_entry.name))),
            };
            layers.push(LayerParams {
                spatial: subsets(format!("layers.{l}.spatial"))?,
                tem: match config.tem {
                    Some(_) => Some(subsets(format!("layers.{l}.tem"))?),
                    None => None,
                },
                tem_mode: config.tem.unwrap_or(TemMode::Residual),
                kernel,
                bias: ckpt.require(&format!("layers.{l}.temporal.bias"))?.values.clone(),
                stride: spec.stride,
                skip: config.residual && spec.stride == 1 && c_in == spec.out_channels,
            });
            c_in = spec.out_channels;
        }
        let params = ModelParams {
            layers,
            head: ClassifierParams {
                weights: matrix("head.w".into())?,
                bias: ckpt.require("head.b")?.values.clone(),
            },
        };
        let model = Model::with_params(config, topology, params)?;
        // Shapes must agree with what the config would initialize.
        let reference = ModelParams::init(&model.config, model.topology.joint_count())?;
        for ((name, a), (_, b)) in model.params.named_params().iter().zip(reference.named_params()) {
            if a.dims() != b.dims() {
                return Err(err(format!(
                    "entry `{name}` has dims {:?}, config implies {:?}",
                    a.dims(),
                    b.dims()
                )));
            }
        }
        Ok(model)
    }
}

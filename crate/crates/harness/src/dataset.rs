//! In-memory skeleton sequence datasets and the `SKSQ` file format.
//!
//! ```text
//! "SKSQ" | 0x01 | u32 sample_count | u32 N | u32 F | u32 C | u32 class_count
//! sample: u32 label | u16 id_len | id (UTF-8) | N*F*C f64 (frame-major)
//! ```
//!
//! Integers and floats are little-endian.

use std::io::{Read, Write};
use std::path::Path;

use stgcn_core::FeatureTensor;

use crate::error::{HarnessError, Result};

pub const MAGIC: &[u8; 4] = b"SKSQ";
pub const VERSION: u8 = 0x01;

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: FeatureTensor,
    pub label: usize,
    pub sample_id: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub joints: usize,
    pub frames: usize,
    pub channels: usize,
    pub class_count: usize,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn empty(joints: usize, frames: usize, channels: usize, class_count: usize) -> Self {
        Self {
            joints,
            frames,
            channels,
            class_count,
            samples: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        for s in &self.samples {
            if s.label >= self.class_count {
                return Err(HarnessError::Dataset(format!(
                    "sample `{}` has label {} but only {} classes",
                    s.sample_id, s.label, self.class_count
                )));
            }
            if s.features.shape() != (self.joints, self.frames, self.channels) {
                return Err(HarnessError::Dataset(format!(
                    "sample `{}` has shape {:?}, header says {:?}",
                    s.sample_id,
                    s.features.shape(),
                    (self.joints, self.frames, self.channels)
                )));
            }
        }
        Ok(())
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.label).collect()
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        self.validate()?;
        let to_u32 = |v: usize, what: &str| {
            u32::try_from(v).map_err(|_| HarnessError::ShapeOverflow(format!("{what} = {v}")))
        };
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.push(VERSION);
        for (v, what) in [
            (self.samples.len(), "sample_count"),
            (self.joints, "N"),
            (self.frames, "F"),
            (self.channels, "C"),
            (self.class_count, "class_count"),
        ] {
            buf.extend_from_slice(&to_u32(v, what)?.to_le_bytes());
        }
        for s in &self.samples {
            buf.extend_from_slice(&to_u32(s.label, "label")?.to_le_bytes());
            let id = s.sample_id.as_bytes();
            let id_len = u16::try_from(id.len())
                .map_err(|_| HarnessError::ShapeOverflow(format!("id length {}", id.len())))?;
            buf.extend_from_slice(&id_len.to_le_bytes());
            buf.extend_from_slice(id);
            for v in s.features.data() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        w.write_all(&buf)
            .map_err(|e| HarnessError::io("<writer>", e))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        self.write_to(&mut out)?;
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        let magic: [u8; 4] = cur.take("magic")?;
        if &magic != MAGIC {
            return Err(HarnessError::BadMagic(magic));
        }
        let [version] = cur.take::<1>("version")?;
        if version != VERSION {
            return Err(HarnessError::BadVersion(version));
        }
        let count = cur.u32("sample_count")? as usize;
        let joints = cur.u32("N")? as usize;
        let frames = cur.u32("F")? as usize;
        let channels = cur.u32("C")? as usize;
        let class_count = cur.u32("class_count")? as usize;
        let values = joints
            .checked_mul(frames)
            .and_then(|v| v.checked_mul(channels))
            .filter(|v| v.checked_mul(8).is_some())
            .ok_or_else(|| HarnessError::ShapeOverflow(format!("{joints} x {frames} x {channels}")))?;
        // Every sample needs at least its label, id length and values.
        let min_sample = 6usize.saturating_add(values.saturating_mul(8));
        if count.saturating_mul(min_sample) > bytes.len() - cur.pos {
            return Err(HarnessError::Truncated("samples"));
        }
        let mut samples = Vec::with_capacity(count);
        for _ in 0..count {
            let label = cur.u32("label")? as usize;
            let id_len = u16::from_le_bytes(cur.take("id length")?) as usize;
            let id = cur.slice(id_len, "sample id")?;
            let sample_id = String::from_utf8(id.to_vec())
                .map_err(|_| HarnessError::Malformed("sample id is not UTF-8".into()))?;
            let raw = cur.slice(values * 8, "feature values")?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            samples.push(Sample {
                features: FeatureTensor::from_vec(joints, frames, channels, data)?,
                label,
                sample_id,
            });
        }
        if cur.pos != bytes.len() {
            return Err(HarnessError::Malformed(format!(
                "{} trailing bytes",
                bytes.len() - cur.pos
            )));
        }
        let dataset = Self {
            joints,
            frames,
            channels,
            class_count,
            samples,
        };
        dataset.validate()?;
        Ok(dataset)
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)
            .map_err(|e| HarnessError::io("<reader>", e))?;
        Self::from_bytes(&bytes)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn slice(&mut self, len: usize, what: &'static str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(len)
            .filter(|&e| e <= self.bytes.len())
            .ok_or(HarnessError::Truncated(what))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn take<const N: usize>(&mut self, what: &'static str) -> Result<[u8; N]> {
        Ok(self.slice(N, what)?.try_into().expect("exact length"))
    }

    fn u32(&mut self, what: &'static str) -> Result<u32> {
        self.take(what).map(u32::from_le_bytes)
    }
}

pub fn write_sequence_file(path: impl AsRef<Path>, dataset: &Dataset) -> Result<()> {
    let path = path.as_ref();
    let bytes = dataset.to_bytes()?;
    std::fs::write(path, bytes).map_err(|e| HarnessError::io(path, e))
}

pub fn read_sequence_file(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| HarnessError::io(path, e))?;
    Dataset::from_bytes(&bytes)
}

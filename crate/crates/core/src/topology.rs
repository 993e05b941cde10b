//! Skeleton graphs and their partitioned adjacency matrices.
//!
//! A skeleton is an undirected, connected bone graph with one joint marked
//! as the center of gravity. Every joint's sampling area (joints within a
//! maximum hop distance) is split into three subsets that receive separate
//! weights:
//!
//! * subset 0: the joint itself,
//! * subset 1: neighbors strictly closer to the center of gravity,
//! * subset 2: all remaining neighbors.
//!
//! The same labeling is used for the intra-frame (spatial) graph and for
//! the inter-frame graph linking frame `t - 1` to frame `t`.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Number of subsets in every partition.
pub const SUBSET_COUNT: usize = 3;

/// Degree regularization added to every diagonal degree entry.
pub const DEFAULT_EPSILON: f64 = 1e-6;

pub const SUBSET_SELF: usize = 0;
pub const SUBSET_CENTRIPETAL: usize = 1;
pub const SUBSET_CENTRIFUGAL: usize = 2;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkeletonTopology {
    joint_count: usize,
    bones: Vec<(usize, usize)>,
    cog: usize,
    joint_names: Option<Vec<String>>,
}

impl SkeletonTopology {
    /// Validates and builds a topology. Bones are stored as `(min, max)`
    /// pairs in ascending order.
    pub fn new(joint_count: usize, bones: &[(usize, usize)], cog: usize) -> Result<Self> {
        if joint_count == 0 {
            return Err(Error::EmptySkeleton);
        }
        if cog >= joint_count {
            return Err(Error::CogOutOfRange {
                cog,
                joints: joint_count,
            });
        }
        let mut seen = BTreeSet::new();
        for &(a, b) in bones {
            if a >= joint_count || b >= joint_count {
                return Err(Error::BoneOutOfRange(a, b, joint_count));
            }
            if a == b {
                return Err(Error::SelfLoop(a));
            }
            if !seen.insert((a.min(b), a.max(b))) {
                return Err(Error::DuplicateBone(a, b));
            }
        }
        let topology = Self {
            joint_count,
            bones: seen.into_iter().collect(),
            cog,
            joint_names: None,
        };
        path_distance(&topology)?;
        Ok(topology)
    }

    pub fn with_names<S: Into<String>>(mut self, names: impl IntoIterator<Item = S>) -> Result<Self> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.len() != self.joint_count {
            return Err(Error::JointNameCount {
                expected: self.joint_count,
                actual: names.len(),
            });
        }
        self.joint_names = Some(names);
        Ok(self)
    }

    /// Path `0 - 1 - ... - (n-1)`.
    pub fn chain(joint_count: usize, cog: usize) -> Result<Self> {
        let bones: Vec<_> = (1..joint_count).map(|j| (j - 1, j)).collect();
        Self::new(joint_count, &bones, cog)
    }

    /// Joint 0 connected to every other joint; joint 0 is the center.
    pub fn star(joint_count: usize) -> Result<Self> {
        let bones: Vec<_> = (1..joint_count).map(|j| (0, j)).collect();
        Self::new(joint_count, &bones, 0)
    }

    /// 25-joint Kinect v2 skeleton, centered on the mid-spine joint.
    pub fn ntu25() -> Self {
        const BONES_1_BASED: [(usize, usize); 24] = [
            (1, 2),
            (2, 21),
            (3, 21),
            (4, 3),
            (5, 21),
            (6, 5),
            (7, 6),
            (8, 7),
            (9, 21),
            (10, 9),
            (11, 10),
            (12, 11),
            (13, 1),
            (14, 13),
            (15, 14),
            (16, 15),
            (17, 1),
            (18, 17),
            (19, 18),
            (20, 19),
            (22, 23),
            (23, 8),
            (24, 25),
            (25, 12),
        ];
        const NAMES: [&str; 25] = [
            "spine_base",
            "spine_mid",
            "neck",
            "head",
            "shoulder_left",
            "elbow_left",
            "wrist_left",
            "hand_left",
            "shoulder_right",
            "elbow_right",
            "wrist_right",
            "hand_right",
            "hip_left",
            "knee_left",
            "ankle_left",
            "foot_left",
            "hip_right",
            "knee_right",
            "ankle_right",
            "foot_right",
            "spine_shoulder",
            "hand_tip_left",
            "thumb_left",
            "hand_tip_right",
            "thumb_right",
        ];
        let bones: Vec<_> = BONES_1_BASED.iter().map(|&(a, b)| (a - 1, b - 1)).collect();
        Self::new(25, &bones, 1)
            .and_then(|t| t.with_names(NAMES))
            .expect("built-in NTU-25 skeleton is valid")
    }

    /// 18-joint OpenPose skeleton, centered on the neck.
    pub fn openpose18() -> Self {
        const BONES: [(usize, usize); 17] = [
            (4, 3),
            (3, 2),
            (7, 6),
            (6, 5),
            (13, 12),
            (12, 11),
            (10, 9),
            (9, 8),
            (11, 5),
            (8, 2),
            (5, 1),
            (2, 1),
            (0, 1),
            (15, 0),
            (14, 0),
            (17, 15),
            (16, 14),
        ];
        const NAMES: [&str; 18] = [
            "nose",
            "neck",
            "right_shoulder",
            "right_elbow",
            "right_wrist",
            "left_shoulder",
            "left_elbow",
            "left_wrist",
            "right_hip",
            "right_knee",
            "right_ankle",
            "left_hip",
            "left_knee",
            "left_ankle",
            "right_eye",
            "left_eye",
            "right_ear",
            "left_ear",
        ];
        Self::new(18, &BONES, 1)
            .and_then(|t| t.with_names(NAMES))
            .expect("built-in OpenPose-18 skeleton is valid")
    }

    /// Resolves a built-in name: `ntu25`, `openpose18`, `chain<N>`, `star<N>`.
    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "ntu25" | "ntu-25" => Some(Self::ntu25()),
            "openpose18" | "openpose-18" => Some(Self::openpose18()),
            _ => {
                if let Some(n) = name.strip_prefix("chain") {
                    let n: usize = n.parse().ok()?;
                    Self::chain(n, n / 2).ok()
                } else if let Some(n) = name.strip_prefix("star") {
                    Self::star(n.parse().ok()?).ok()
                } else {
                    None
                }
            }
        }
    }

    /// Parses the line-oriented topology format:
    ///
    /// ```text
    /// joints <N>
    /// cog <index>
    /// bone <i> <j>
    /// ```
    ///
    /// Lines starting with `#` and blank lines are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut joints = None;
        let mut cog = None;
        let mut bones = Vec::new();
        let parse_err = |line: usize, message: String| Error::TopologyParse { line, message };
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if !line.is_ascii() {
                return Err(parse_err(line_no, "non-ASCII content".into()));
            }
            let mut fields = line.split_whitespace();
            let keyword = fields.next().unwrap_or_default();
            let values: Vec<usize> = fields
                .map(|f| {
                    f.parse()
                        .map_err(|_| parse_err(line_no, format!("invalid integer `{f}`")))
                })
                .collect::<Result<_>>()?;
            match (keyword, values.as_slice()) {
                ("joints", &[n]) if joints.is_none() => joints = Some(n),
                ("cog", &[c]) if cog.is_none() => {
                    if joints.is_none() {
                        return Err(parse_err(line_no, "`cog` before `joints`".into()));
                    }
                    cog = Some(c);
                }
                ("bone", &[a, b]) => {
                    if cog.is_none() {
                        return Err(parse_err(line_no, "`bone` before `joints`/`cog` header".into()));
                    }
                    bones.push((a, b));
                }
                ("joints" | "cog", _) if values.len() == 1 => {
                    return Err(parse_err(line_no, format!("duplicate `{keyword}`")));
                }
                _ => return Err(parse_err(line_no, format!("unrecognized line `{line}`"))),
            }
        }
        let joints = joints.ok_or_else(|| parse_err(0, "missing `joints` line".into()))?;
        let cog = cog.ok_or_else(|| parse_err(0, "missing `cog` line".into()))?;
        Self::new(joints, &bones, cog)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("joints {}\ncog {}\n", self.joint_count, self.cog);
        for &(a, b) in &self.bones {
            let _ = writeln!(out, "bone {a} {b}");
        }
        out
    }

    pub fn joint_count(&self) -> usize {
        self.joint_count
    }

    pub fn bones(&self) -> &[(usize, usize)] {
        &self.bones
    }

    pub fn cog(&self) -> usize {
        self.cog
    }

    pub fn joint_names(&self) -> Option<&[String]> {
        self.joint_names.as_deref()
    }

    pub fn joint_index(&self, name: &str) -> Option<usize> {
        self.joint_names.as_ref()?.iter().position(|n| n == name)
    }

    pub fn degree(&self, joint: usize) -> usize {
        self.bones
            .iter()
            .filter(|&&(a, b)| a == joint || b == joint)
            .count()
    }

    pub fn neighbors(&self, joint: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .bones
            .iter()
            .filter_map(|&(a, b)| match (a == joint, b == joint) {
                (true, _) => Some(b),
                (_, true) => Some(a),
                _ => None,
            })
            .collect();
        out.sort_unstable();
        out
    }

    /// Relabels joint `i` as `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        check_permutation(perm, self.joint_count)?;
        let bones: Vec<_> = self.bones.iter().map(|&(a, b)| (perm[a], perm[b])).collect();
        let mut out = Self::new(self.joint_count, &bones, perm[self.cog])?;
        if let Some(names) = &self.joint_names {
            let mut relabeled = vec![String::new(); names.len()];
            for (i, name) in names.iter().enumerate() {
                relabeled[perm[i]] = name.clone();
            }
            out.joint_names = Some(relabeled);
        }
        Ok(out)
    }
}

pub(crate) fn check_permutation(perm: &[usize], n: usize) -> Result<()> {
    let invalid = Error::InvalidPermutation {
        expected: n,
        actual: perm.len(),
    };
    if perm.len() != n {
        return Err(invalid);
    }
    let mut seen = vec![false; n];
    for &p in perm {
        if p >= n || std::mem::replace(&mut seen[p], true) {
            return Err(invalid);
        }
    }
    Ok(())
}

/// All-pairs hop distances of a skeleton graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HopDistanceTable {
    joint_count: usize,
    dist: Vec<usize>,
}

impl HopDistanceTable {
    pub fn from_vec(joint_count: usize, dist: Vec<usize>) -> Self {
        assert_eq!(dist.len(), joint_count * joint_count);
        Self { joint_count, dist }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> usize {
        self.dist[i * self.joint_count + j]
    }

    pub fn joint_count(&self) -> usize {
        self.joint_count
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.dist
    }
}

/// Shortest bone-path hop counts between every pair of joints
/// (Floyd-Warshall relaxation over the bone list).
pub fn path_distance(topology: &SkeletonTopology) -> Result<HopDistanceTable> {
    let n = topology.joint_count;
    const UNREACHED: usize = usize::MAX / 4;
    let mut dist = vec![UNREACHED; n * n];
    for i in 0..n {
        dist[i * n + i] = 0;
    }
    for &(a, b) in &topology.bones {
        dist[a * n + b] = 1;
        dist[b * n + a] = 1;
    }
    for k in 0..n {
        for i in 0..n {
            let dik = dist[i * n + k];
            if dik == UNREACHED {
                continue;
            }
            for j in 0..n {
                let through = dik + dist[k * n + j];
                if through < dist[i * n + j] {
                    dist[i * n + j] = through;
                }
            }
        }
    }
    if let Some(joint) = (0..n).find(|&j| dist[topology.cog * n + j] == UNREACHED) {
        return Err(Error::Disconnected {
            joint,
            from: topology.cog,
        });
    }
    Ok(HopDistanceTable { joint_count: n, dist })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartitionKind {
    /// Intra-frame graph.
    Spatial,
    /// Graph from frame `t - 1` to frame `t`.
    Temporal,
}

/// Three binary subset masks and their degree-normalized forms.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionedAdjacency {
    kind: PartitionKind,
    max_hop: usize,
    epsilon: f64,
    masks: Vec<Matrix>,
    normalized: Vec<Matrix>,
}

impl PartitionedAdjacency {
    pub fn from_masks(
        kind: PartitionKind,
        max_hop: usize,
        masks: Vec<Matrix>,
        epsilon: f64,
    ) -> Result<Self> {
        let normalized = normalize_partition(&masks, epsilon)?;
        Ok(Self {
            kind,
            max_hop,
            epsilon,
            masks,
            normalized,
        })
    }

    pub fn kind(&self) -> PartitionKind {
        self.kind
    }

    pub fn max_hop(&self) -> usize {
        self.max_hop
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn joint_count(&self) -> usize {
        self.masks.first().map_or(0, Matrix::rows)
    }

    pub fn subset_count(&self) -> usize {
        self.masks.len()
    }

    pub fn masks(&self) -> &[Matrix] {
        &self.masks
    }

    pub fn normalized(&self) -> &[Matrix] {
        &self.normalized
    }

    /// Which subset contains `(i, j)`, if any.
    pub fn label(&self, i: usize, j: usize) -> Option<usize> {
        self.masks.iter().position(|m| m.get(i, j) != 0.0)
    }

    /// Relabels joint `i` as `perm[i]` in every mask and normalized matrix.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        check_permutation(perm, self.joint_count())?;
        Ok(Self {
            masks: self.masks.iter().map(|m| m.permute_symmetric(perm)).collect(),
            normalized: self
                .normalized
                .iter()
                .map(|m| m.permute_symmetric(perm))
                .collect(),
            ..*self
        })
    }
}

fn build_partition(
    kind: PartitionKind,
    topology: &SkeletonTopology,
    max_hop: usize,
    dist: &HopDistanceTable,
    epsilon: f64,
) -> Result<PartitionedAdjacency> {
    if max_hop == 0 {
        return Err(Error::InvalidMaxHop);
    }
    let n = topology.joint_count;
    if dist.joint_count != n {
        return Err(crate::error::mismatch(
            "partition distance table",
            n,
            dist.joint_count,
        ));
    }
    let cog = topology.cog;
    let mut masks = vec![Matrix::zeros(n, n); SUBSET_COUNT];
    for i in 0..n {
        for j in 0..n {
            let d = dist.get(i, j);
            let subset = if d == 0 {
                SUBSET_SELF
            } else if d > max_hop {
                continue;
            } else if dist.get(j, cog) < dist.get(i, cog) {
                SUBSET_CENTRIPETAL
            } else {
                SUBSET_CENTRIFUGAL
            };
            masks[subset].set(i, j, 1.0);
        }
    }
    PartitionedAdjacency::from_masks(kind, max_hop, masks, epsilon)
}

/// Intra-frame partition with the default degree regularization.
pub fn build_spatial_partition(
    topology: &SkeletonTopology,
    max_hop: usize,
    dist: &HopDistanceTable,
) -> Result<PartitionedAdjacency> {
    build_partition(PartitionKind::Spatial, topology, max_hop, dist, DEFAULT_EPSILON)
}

/// Inter-frame partition: row `i` lists the joints at frame `t - 1` that
/// feed joint `i` at frame `t`. Subset 0 is the same joint across frames.
pub fn build_temporal_partition(
    topology: &SkeletonTopology,
    max_hop: usize,
    dist: &HopDistanceTable,
) -> Result<PartitionedAdjacency> {
    build_partition(PartitionKind::Temporal, topology, max_hop, dist, DEFAULT_EPSILON)
}

/// Degree-normalizes each subset mask independently:
/// `out[i][j] = mask[i][j] / sqrt((r_i + eps) * (c_j + eps))` where `r_i` is
/// the row sum of row `i` and `c_j` the column sum of column `j`.
///
/// For symmetric masks `r == c`, so this is `L^-1/2 * A * L^-1/2` with `L`
/// the diagonal degree matrix. The centripetal and centrifugal masks are
/// transposes of each other rather than symmetric; using the column sum on
/// the right keeps every populated entry in `(0, 1]`.
pub fn normalize_partition(masks: &[Matrix], epsilon: f64) -> Result<Vec<Matrix>> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidEpsilon(epsilon));
    }
    masks
        .iter()
        .map(|mask| {
            let (rows, cols) = mask.shape();
            let row_scale: Vec<f64> = (0..rows)
                .map(|i| 1.0 / (mask.row(i).iter().sum::<f64>() + epsilon).sqrt())
                .collect();
            let col_scale: Vec<f64> = (0..cols)
                .map(|j| 1.0 / ((0..rows).map(|i| mask.get(i, j)).sum::<f64>() + epsilon).sqrt())
                .collect();
            let mut out = Matrix::zeros(rows, cols);
            for i in 0..rows {
                for j in 0..cols {
                    out.set(i, j, row_scale[i] * mask.get(i, j) * col_scale[j]);
                }
            }
            Ok(out)
        })
        .collect()
}

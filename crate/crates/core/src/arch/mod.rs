//! Architecture descriptors, the three search spaces, cost accounting and the
//! network builder.
//!
//! - `S0`: CIFAR ResNet with three residual stages (16/32/64 channels) whose
//!   depths are each drawn from {1, 3, 5, 7}; 64 candidates in total.
//! - `NB201`: a 4-node cell with six edges, five candidate operations per
//!   edge, stacked in a three-stage macro skeleton.
//! - `S2`: ResNet-like staged networks where every stage picks its block type,
//!   kernel, width and depth; six stages on CIFAR, four on ImageNet.

mod cost;
mod json;
pub mod nb201;
mod network;
mod sample;

pub use cost::{
    conv_flops, count_flops, count_params, flops_breakdown, layer_depth, FlopBreakdown, InputShape,
};
pub use json::ArchJson;
pub use nb201::{parse_nb201, serialize_nb201, Nb201Cell, Nb201Op};
pub use network::{build_network, ActivationBundle, ActivationObserver, ForwardPass, NetworkInstance};
pub use sample::{enumerate_s0, mutate, sample_random, MAX_MUTATION_RETRIES, MAX_SAMPLE_ATTEMPTS};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const S0_DEPTHS: [usize; 4] = [1, 3, 5, 7];
pub const S0_STAGE_CHANNELS: [usize; 3] = [16, 32, 64];
pub const S0_STAGE_STRIDES: [usize; 3] = [1, 2, 2];
pub const S0_STEM_CHANNELS: usize = 16;

pub const NB201_STAGE_CHANNELS: [usize; 3] = [16, 32, 64];

pub const S2_KERNELS: [usize; 3] = [3, 5, 7];
pub const S2_WIDTH_FACTORS: [f64; 4] = [0.67, 0.8, 1.25, 1.5];
pub const S2_MIN_CHANNELS: usize = 8;
pub const S2_MAX_CHANNELS: usize = 2048;

/// Initial-width multipliers used when sampling S2 stages from scratch.
const S2_SAMPLE_WIDTH_FACTORS: [f64; 5] = [0.5, 0.75, 1.0, 1.25, 1.5];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SpaceKind {
    #[serde(rename = "s0")]
    S0,
    #[serde(rename = "nb201")]
    Nb201,
    #[serde(rename = "s2_cifar")]
    S2Cifar,
    #[serde(rename = "s2_imagenet")]
    S2Imagenet,
}

impl SpaceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SpaceKind::S0 => "s0",
            SpaceKind::Nb201 => "nb201",
            SpaceKind::S2Cifar => "s2_cifar",
            SpaceKind::S2Imagenet => "s2_imagenet",
        }
    }
}

impl fmt::Display for SpaceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SpaceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "s0" => Ok(SpaceKind::S0),
            "nb201" | "s1" => Ok(SpaceKind::Nb201),
            "s2_cifar" => Ok(SpaceKind::S2Cifar),
            "s2_imagenet" => Ok(SpaceKind::S2Imagenet),
            other => Err(Error::parse(other, "unknown search space")),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Constraints {
    pub max_params: Option<u64>,
    pub max_flops: Option<u64>,
    pub max_depth: Option<usize>,
}

impl Constraints {
    pub fn is_unconstrained(&self) -> bool {
        self.max_params.is_none() && self.max_flops.is_none() && self.max_depth.is_none()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlockKind {
    Basic,
    Bottleneck,
}

impl BlockKind {
    fn as_str(self) -> &'static str {
        match self {
            BlockKind::Basic => "basic",
            BlockKind::Bottleneck => "bottleneck",
        }
    }

    /// Convolutions on the main path of one block.
    pub fn convs_per_block(self) -> usize {
        match self {
            BlockKind::Basic => 2,
            BlockKind::Bottleneck => 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct S2Stage {
    pub block: BlockKind,
    pub kernel: usize,
    pub channels: usize,
    pub depth: usize,
    pub stride: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct S2Config {
    pub stem_channels: usize,
    pub stages: Vec<S2Stage>,
}

/// Stage layout an S2 space fixes for every candidate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct S2Template {
    pub stem_kernel: usize,
    pub stem_stride: usize,
    pub stem_channels: usize,
    pub strides: Vec<usize>,
    pub base_channels: Vec<usize>,
    /// Depths drawn when sampling from scratch: `1..=sample_max_depth`.
    pub sample_max_depth: usize,
    /// Upper bound a mutation may grow a stage to.
    pub max_stage_depth: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum ArchDescriptor {
    S0 { depths: [usize; 3] },
    Nb201(Nb201Cell),
    S2(S2Config),
}

impl ArchDescriptor {
    pub fn s0(d1: usize, d2: usize, d3: usize) -> Self {
        ArchDescriptor::S0 { depths: [d1, d2, d3] }
    }

    /// Compact identifier used as the join key in CSV artifacts.
    ///
    /// S0: `7-1-3`; NB201: the cell string; S2:
    /// `s16|basic-k3-c16-d1-s1|...` (stem width, then one token per stage).
    pub fn arch_id(&self) -> String {
        match self {
            ArchDescriptor::S0 { depths } => format!("{}-{}-{}", depths[0], depths[1], depths[2]),
            ArchDescriptor::Nb201(cell) => serialize_nb201(cell),
            ArchDescriptor::S2(cfg) => {
                let mut s = format!("s{}", cfg.stem_channels);
                for st in &cfg.stages {
                    s.push_str(&format!(
                        "|{}-k{}-c{}-d{}-s{}",
                        st.block.as_str(),
                        st.kernel,
                        st.channels,
                        st.depth,
                        st.stride
                    ));
                }
                s
            }
        }
    }

    /// Inverse of [`ArchDescriptor::arch_id`]. Only the syntax is checked;
    /// use [`SearchSpace::validate`] for membership.
    pub fn from_arch_id(kind: SpaceKind, id: &str) -> Result<Self> {
        match kind {
            SpaceKind::S0 => {
                let parts: Vec<&str> = id.split('-').collect();
                if parts.len() != 3 {
                    return Err(Error::parse(id, "S0 id must be three depths joined by '-'"));
                }
                let mut depths = [0usize; 3];
                for (d, p) in depths.iter_mut().zip(&parts) {
                    *d = parse_positive(p)?;
                }
                Ok(ArchDescriptor::S0 { depths })
            }
            SpaceKind::Nb201 => Ok(ArchDescriptor::Nb201(parse_nb201(id)?)),
            SpaceKind::S2Cifar | SpaceKind::S2Imagenet => {
                let mut tokens = id.split('|');
                let stem = tokens.next().unwrap_or_default();
                let stem_channels = stem
                    .strip_prefix('s')
                    .ok_or_else(|| Error::parse(stem, "S2 id must start with s<stem channels>"))
                    .and_then(parse_positive)?;
                let stages = tokens.map(parse_s2_stage).collect::<Result<Vec<_>>>()?;
                if stages.is_empty() {
                    return Err(Error::parse(id, "S2 id has no stages"));
                }
                Ok(ArchDescriptor::S2(S2Config { stem_channels, stages }))
            }
        }
    }
}

impl fmt::Display for ArchDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.arch_id())
    }
}

fn parse_positive(s: &str) -> Result<usize> {
    match s.parse::<usize>() {
        Ok(v) if v > 0 => Ok(v),
        _ => Err(Error::parse(s, "expected a positive integer")),
    }
}

fn parse_s2_stage(token: &str) -> Result<S2Stage> {
    let parts: Vec<&str> = token.split('-').collect();
    if parts.len() != 5 {
        return Err(Error::parse(token, "S2 stage must be <block>-k<K>-c<C>-d<D>-s<S>"));
    }
    let block = match parts[0] {
        "basic" => BlockKind::Basic,
        "bottleneck" => BlockKind::Bottleneck,
        other => return Err(Error::parse(other, "unknown block kind")),
    };
    let field = |part: &str, prefix: char| -> Result<usize> {
        part.strip_prefix(prefix)
            .ok_or_else(|| Error::parse(part, format!("expected prefix '{prefix}'")))
            .and_then(parse_positive)
    };
    Ok(S2Stage {
        block,
        kernel: field(parts[1], 'k')?,
        channels: field(parts[2], 'c')?,
        depth: field(parts[3], 'd')?,
        stride: field(parts[4], 's')?,
    })
}

/// One of the three search spaces together with its constraint set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub kind: SpaceKind,
    pub num_classes: usize,
    pub input_channels: usize,
    pub input_size: usize,
    /// NB201 cells stacked per stage (the full benchmark uses 5).
    pub cells_per_stage: usize,
    pub s2: Option<S2Template>,
    pub constraints: Constraints,
}

impl SearchSpace {
    pub fn s0() -> Self {
        SearchSpace {
            kind: SpaceKind::S0,
            num_classes: 100,
            input_channels: 3,
            input_size: 32,
            cells_per_stage: 0,
            s2: None,
            constraints: Constraints::default(),
        }
    }

    pub fn nb201() -> Self {
        SearchSpace {
            kind: SpaceKind::Nb201,
            num_classes: 10,
            input_channels: 3,
            input_size: 32,
            cells_per_stage: 2,
            s2: None,
            constraints: Constraints::default(),
        }
    }

    pub fn s2_cifar() -> Self {
        SearchSpace {
            kind: SpaceKind::S2Cifar,
            num_classes: 10,
            input_channels: 3,
            input_size: 32,
            cells_per_stage: 0,
            s2: Some(S2Template {
                stem_kernel: 3,
                stem_stride: 1,
                stem_channels: 16,
                strides: vec![1, 2, 1, 2, 2, 1],
                base_channels: vec![16, 32, 32, 64, 64, 128],
                sample_max_depth: 3,
                max_stage_depth: 8,
            }),
            constraints: Constraints::default(),
        }
    }

    pub fn s2_imagenet() -> Self {
        SearchSpace {
            kind: SpaceKind::S2Imagenet,
            num_classes: 1000,
            input_channels: 3,
            input_size: 224,
            cells_per_stage: 0,
            s2: Some(S2Template {
                stem_kernel: 7,
                stem_stride: 2,
                stem_channels: 64,
                strides: vec![2, 2, 2, 2],
                base_channels: vec![64, 128, 256, 512],
                sample_max_depth: 3,
                max_stage_depth: 8,
            }),
            constraints: Constraints::default(),
        }
    }

    pub fn from_kind(kind: SpaceKind) -> Self {
        match kind {
            SpaceKind::S0 => Self::s0(),
            SpaceKind::Nb201 => Self::nb201(),
            SpaceKind::S2Cifar => Self::s2_cifar(),
            SpaceKind::S2Imagenet => Self::s2_imagenet(),
        }
    }

    pub fn with_constraints(mut self, constraints: Constraints) -> Self {
        self.constraints = constraints;
        self
    }

    pub fn with_num_classes(mut self, n: usize) -> Self {
        self.num_classes = n;
        self
    }

    pub fn with_cells_per_stage(mut self, n: usize) -> Self {
        self.cells_per_stage = n;
        self
    }

    pub fn default_input(&self, batch: usize) -> InputShape {
        InputShape {
            batch,
            channels: self.input_channels,
            height: self.input_size,
            width: self.input_size,
        }
    }

    fn template(&self) -> Result<&S2Template> {
        self.s2
            .as_ref()
            .ok_or_else(|| Error::InvalidArch(format!("space {} has no S2 template", self.kind)))
    }

    /// Checks that `desc` is a member of this space (ignores constraints).
    pub fn validate(&self, desc: &ArchDescriptor) -> Result<()> {
        self.check(desc, false)
    }

    /// Like [`SearchSpace::validate`] but allows depths outside the searched
    /// set, so deeper teachers of the same family (e.g. ResNet110 as S0
    /// `[18,18,18]`) can be built.
    pub fn validate_teacher(&self, desc: &ArchDescriptor) -> Result<()> {
        self.check(desc, true)
    }

    fn check(&self, desc: &ArchDescriptor, relaxed_depth: bool) -> Result<()> {
        match (self.kind, desc) {
            (SpaceKind::S0, ArchDescriptor::S0 { depths }) => {
                for &d in depths {
                    let ok = if relaxed_depth { d >= 1 } else { S0_DEPTHS.contains(&d) };
                    if !ok {
                        return Err(Error::InvalidArch(format!("S0 depth {d} not in {{1,3,5,7}}")));
                    }
                }
                Ok(())
            }
            (SpaceKind::Nb201, ArchDescriptor::Nb201(_)) => {
                if self.cells_per_stage == 0 {
                    return Err(Error::InvalidArch("cells_per_stage must be positive".into()));
                }
                Ok(())
            }
            (SpaceKind::S2Cifar | SpaceKind::S2Imagenet, ArchDescriptor::S2(cfg)) => {
                let t = self.template()?;
                check_channels("stem", cfg.stem_channels)?;
                if cfg.stages.len() != t.strides.len() {
                    return Err(Error::InvalidArch(format!(
                        "{} expects {} stages, got {}",
                        self.kind,
                        t.strides.len(),
                        cfg.stages.len()
                    )));
                }
                for (i, (st, &stride)) in cfg.stages.iter().zip(&t.strides).enumerate() {
                    if !S2_KERNELS.contains(&st.kernel) {
                        return Err(Error::InvalidArch(format!("stage {i}: kernel {} not in {{3,5,7}}", st.kernel)));
                    }
                    check_channels(&format!("stage {i}"), st.channels)?;
                    if st.block == BlockKind::Bottleneck && st.channels % 4 != 0 {
                        return Err(Error::InvalidArch(format!("stage {i}: bottleneck width must divide by 4")));
                    }
                    let max_depth = if relaxed_depth { usize::MAX } else { t.max_stage_depth };
                    if st.depth == 0 || st.depth > max_depth {
                        return Err(Error::InvalidArch(format!(
                            "stage {i}: depth {} outside 1..={}",
                            st.depth, t.max_stage_depth
                        )));
                    }
                    if st.stride != stride {
                        return Err(Error::InvalidArch(format!(
                            "stage {i}: stride {} but the space fixes {stride}",
                            st.stride
                        )));
                    }
                }
                Ok(())
            }
            (kind, desc) => Err(Error::InvalidArch(format!("descriptor {desc} does not belong to space {kind}"))),
        }
    }

    /// Valid member that also meets every constraint.
    pub fn satisfies(&self, desc: &ArchDescriptor) -> Result<bool> {
        self.validate(desc)?;
        self.meets_constraints(desc)
    }

    pub fn meets_constraints(&self, desc: &ArchDescriptor) -> Result<bool> {
        let c = &self.constraints;
        if let Some(max) = c.max_params {
            if count_params(desc, self)? > max {
                return Ok(false);
            }
        }
        if let Some(max) = c.max_flops {
            if count_flops(desc, self, self.default_input(1))? > max {
                return Ok(false);
            }
        }
        if let Some(max) = c.max_depth {
            if layer_depth(desc, self)? > max {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// The largest configuration of the space, used as the default teacher.
    pub fn largest(&self) -> Result<ArchDescriptor> {
        Ok(match self.kind {
            SpaceKind::S0 => ArchDescriptor::s0(7, 7, 7),
            SpaceKind::Nb201 => ArchDescriptor::Nb201(Nb201Cell::new([Nb201Op::NorConv3x3; 6])),
            SpaceKind::S2Cifar | SpaceKind::S2Imagenet => {
                let t = self.template()?;
                ArchDescriptor::S2(S2Config {
                    stem_channels: t.stem_channels,
                    stages: t
                        .strides
                        .iter()
                        .zip(&t.base_channels)
                        .map(|(&stride, &base)| S2Stage {
                            block: BlockKind::Basic,
                            kernel: 7,
                            channels: round_channels(base as f64 * 1.5),
                            depth: t.sample_max_depth,
                            stride,
                        })
                        .collect(),
                })
            }
        })
    }
}

fn check_channels(what: &str, c: usize) -> Result<()> {
    if c % 8 != 0 || !(S2_MIN_CHANNELS..=S2_MAX_CHANNELS).contains(&c) {
        return Err(Error::InvalidArch(format!(
            "{what}: {c} channels must be a multiple of 8 in [8, 2048]"
        )));
    }
    Ok(())
}

/// Nearest multiple of 8, clamped to [8, 2048].
pub fn round_channels(c: f64) -> usize {
    let rounded = ((c / 8.0).round() as usize) * 8;
    rounded.clamp(S2_MIN_CHANNELS, S2_MAX_CHANNELS)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arch_ids_round_trip() {
        let space = SearchSpace::s2_cifar();
        let largest = space.largest().unwrap();
        for (kind, d) in [
            (SpaceKind::S0, ArchDescriptor::s0(7, 1, 3)),
            (SpaceKind::Nb201, ArchDescriptor::Nb201(Nb201Cell::new([Nb201Op::SkipConnect; 6]))),
            (SpaceKind::S2Cifar, largest),
        ] {
            assert_eq!(ArchDescriptor::from_arch_id(kind, &d.arch_id()).unwrap(), d);
        }
        assert_eq!(ArchDescriptor::s0(7, 1, 3).arch_id(), "7-1-3");
    }

    #[test]
    fn malformed_ids_rejected() {
        assert!(ArchDescriptor::from_arch_id(SpaceKind::S0, "7-1").is_err());
        assert!(ArchDescriptor::from_arch_id(SpaceKind::S0, "7-0-3").is_err());
        assert!(ArchDescriptor::from_arch_id(SpaceKind::S2Cifar, "s16").is_err());
        assert!(ArchDescriptor::from_arch_id(SpaceKind::S2Cifar, "x16|basic-k3-c16-d1-s1").is_err());
        assert!(ArchDescriptor::from_arch_id(SpaceKind::S2Cifar, "s16|wide-k3-c16-d1-s1").is_err());
    }

    #[test]
    fn s0_membership() {
        let s = SearchSpace::s0();
        assert!(s.validate(&ArchDescriptor::s0(1, 3, 7)).is_ok());
        assert!(s.validate(&ArchDescriptor::s0(2, 3, 7)).is_err());
        assert!(s.validate_teacher(&ArchDescriptor::s0(18, 18, 18)).is_ok());
        assert!(s.validate(&ArchDescriptor::Nb201(Nb201Cell::new([Nb201Op::None; 6]))).is_err());
    }

    #[test]
    fn s2_channel_rules() {
        let s = SearchSpace::s2_cifar();
        let ArchDescriptor::S2(mut cfg) = s.largest().unwrap() else { unreachable!() };
        cfg.stages[0].channels = 20;
        assert!(s.validate(&ArchDescriptor::S2(cfg.clone())).is_err());
        cfg.stages[0].channels = 24;
        assert!(s.validate(&ArchDescriptor::S2(cfg.clone())).is_ok());
        cfg.stages[0].stride = 2;
        assert!(s.validate(&ArchDescriptor::S2(cfg)).is_err());
    }

    #[test]
    fn rounding_rule() {
        assert_eq!(round_channels(96.0 * 1.25), 120);
        assert_eq!(round_channels(8.0 * 0.67), 8);
        assert_eq!(round_channels(2048.0 * 1.5), 2048);
        assert_eq!(round_channels(99.0), 96);
        assert_eq!(round_channels(101.0), 104);
    }
}

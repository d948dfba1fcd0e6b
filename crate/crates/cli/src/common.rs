use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, ValueEnum};
use serde::Serialize;

use diswot_core::arch::{build_network, ArchDescriptor, ArchJson, Constraints, NetworkInstance, SearchSpace, SpaceKind};
use diswot_core::data::{load_cifar_batch, synth_batch, Batch, CifarVariant};
use diswot_core::proxy::{DiswotConfig, Normalization, ProxyKind, WeightSource};
use diswot_core::rng::{derive_seed, stream_rng};
use diswot_core::tensor::InitSpec;

use crate::usage;

pub fn parse_space(s: &str) -> Result<SpaceKind, String> {
    s.parse().map_err(|e: diswot_core::Error| e.to_string())
}

pub fn parse_proxy(s: &str) -> Result<ProxyKind, String> {
    s.parse().map_err(|_| {
        let names: Vec<&str> = ProxyKind::ALL.iter().map(|k| k.name()).collect();
        format!("unknown proxy `{s}` (expected one of {})", names.join(", "))
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InitArg {
    Kaiming,
    Gaussian,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightSourceArg {
    /// Classifier weights.
    Fc,
    /// Classifier weight gradients.
    FcGrad,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NormArg {
    Row,
    Matrix,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetArg {
    Cifar10,
    Cifar100,
}

/// Space, data, teacher and scoring flags shared by `score` and `search`.
#[derive(Debug, Args, Serialize)]
pub struct ScoringArgs {
    /// Search space: s0, nb201 (alias s1), s2_cifar or s2_imagenet.
    #[arg(long, value_parser = parse_space, default_value = "s0")]
    #[serde(serialize_with = "ser_display")]
    pub space: SpaceKind,

    /// Teacher: `max`, an S0 depth triple `d1,d2,d3` (optionally suffixed
    /// `-template`), or an arch_id of the space.
    #[arg(long, default_value = "max")]
    pub teacher: String,

    /// Images per scoring batch.
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,

    /// CIFAR binary file to draw the batch from.
    #[arg(long, conflicts_with = "synthetic")]
    pub data: Option<PathBuf>,

    /// CIFAR flavour of `--data`; defaults to cifar100 for s0, cifar10 otherwise.
    #[arg(long, value_enum, requires = "data")]
    pub dataset: Option<DatasetArg>,

    /// Use a standard-normal synthetic batch (the default without `--data`).
    #[arg(long)]
    pub synthetic: bool,

    /// Spatial size of synthetic images; defaults to the space's input size.
    #[arg(long, conflicts_with = "data")]
    pub input_size: Option<usize>,

    /// NB201 cells per stage.
    #[arg(long)]
    pub cells_per_stage: Option<usize>,

    #[arg(long, value_enum, default_value = "kaiming")]
    pub init: InitArg,

    /// Standard deviation for `--init gaussian`.
    #[arg(long, default_value_t = 0.01)]
    pub gaussian_std: f64,

    /// Grad-CAM weights for the semantic metric.
    #[arg(long, value_enum, default_value = "fc")]
    pub weight_source: WeightSourceArg,

    /// Gram normalization for both DisWOT metrics.
    #[arg(long, value_enum, default_value = "row")]
    pub normalization: NormArg,

    /// Softmax temperature for the KD proxy.
    #[arg(long, default_value_t = 4.0)]
    pub temperature: f64,

    #[arg(long)]
    pub max_params: Option<u64>,

    #[arg(long)]
    pub max_flops: Option<u64>,

    #[arg(long)]
    pub max_depth: Option<usize>,

    /// Worker threads for candidate scoring; output does not depend on it.
    #[arg(long, default_value_t = 1)]
    #[serde(skip)]
    pub jobs: usize,
}

fn ser_display<T: std::fmt::Display, S: serde::Serializer>(v: &T, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(v)
}

impl ScoringArgs {
    pub fn space(&self) -> Result<SearchSpace> {
        let mut space = SearchSpace::from_kind(self.space).with_constraints(Constraints {
            max_params: self.max_params,
            max_flops: self.max_flops,
            max_depth: self.max_depth,
        });
        if let Some(n) = self.cells_per_stage {
            if n == 0 {
                return Err(usage("--cells-per-stage must be at least 1"));
            }
            space = space.with_cells_per_stage(n);
        }
        if let Some(s) = self.input_size {
            if s < 8 {
                return Err(usage("--input-size must be at least 8"));
            }
            space.input_size = s;
        }
        Ok(space)
    }

    pub fn check(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(usage("--batch-size must be at least 2"));
        }
        if self.jobs == 0 {
            return Err(usage("--jobs must be at least 1"));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(usage("--temperature must be positive"));
        }
        if !(self.gaussian_std > 0.0 && self.gaussian_std.is_finite()) {
            return Err(usage("--gaussian-std must be positive"));
        }
        Ok(())
    }

    pub fn init(&self, seed: u64) -> InitSpec {
        match self.init {
            InitArg::Kaiming => InitSpec::kaiming(seed),
            InitArg::Gaussian => InitSpec::gaussian(self.gaussian_std, seed).expect("checked std"),
        }
    }

    pub fn diswot(&self) -> DiswotConfig {
        DiswotConfig {
            weight_source: match self.weight_source {
                WeightSourceArg::Fc => WeightSource::FcWeights,
                WeightSourceArg::FcGrad => WeightSource::FcWeightGrads,
            },
            normalization: match self.normalization {
                NormArg::Row => Normalization::RowL2,
                NormArg::Matrix => Normalization::MatrixL2,
            },
            ..DiswotConfig::default()
        }
    }

    /// The scoring batch for `seed`.
    pub fn batch(&self, space: &SearchSpace, seed: u64) -> Result<Batch> {
        let batch_seed = derive_seed(seed, "batch");
        match &self.data {
            Some(path) => {
                if space.kind == SpaceKind::S2Imagenet {
                    return Err(usage("s2_imagenet scores on synthetic batches only"));
                }
                let variant = match self.dataset {
                    Some(DatasetArg::Cifar10) => CifarVariant::Cifar10,
                    Some(DatasetArg::Cifar100) => CifarVariant::Cifar100,
                    None if space.kind == SpaceKind::S0 => CifarVariant::Cifar100,
                    None => CifarVariant::Cifar10,
                };
                if variant.num_classes() != space.num_classes {
                    return Err(usage(format!(
                        "{} has {} classes but space {} expects {}",
                        variant.as_str(),
                        variant.num_classes(),
                        space.kind,
                        space.num_classes
                    )));
                }
                load_cifar_batch(path, variant, self.batch_size, &mut stream_rng(batch_seed, 0))
                    .with_context(|| format!("loading {}", path.display()))
            }
            None => {
                let shape = space.default_input(self.batch_size);
                Ok(synth_batch(
                    shape.batch,
                    shape.channels,
                    shape.height,
                    shape.width,
                    space.num_classes,
                    batch_seed,
                )?)
            }
        }
    }

    pub fn teacher_desc(&self, space: &SearchSpace) -> Result<ArchDescriptor> {
        parse_teacher(&self.teacher, space)
    }

    pub fn teacher(&self, space: &SearchSpace, seed: u64) -> Result<NetworkInstance> {
        let desc = self.teacher_desc(space)?;
        Ok(build_network(&desc, space, &self.init(derive_seed(seed, "teacher")))?)
    }
}

pub fn parse_teacher(spec: &str, space: &SearchSpace) -> Result<ArchDescriptor> {
    let spec = spec.trim();
    let desc = if spec == "max" {
        space.largest()?
    } else if space.kind == SpaceKind::S0 {
        let triple = spec.strip_suffix("-template").unwrap_or(spec);
        ArchDescriptor::from_arch_id(SpaceKind::S0, &triple.replace(',', "-"))
            .map_err(|e| usage(format!("invalid --teacher `{spec}`: {e}")))?
    } else {
        ArchDescriptor::from_arch_id(space.kind, spec).map_err(|e| usage(format!("invalid --teacher `{spec}`: {e}")))?
    };
    space
        .validate_teacher(&desc)
        .map_err(|e| usage(format!("invalid --teacher `{spec}`: {e}")))?;
    Ok(desc)
}

/// Parses one architecture per non-empty line: an arch_id, or an
/// architecture JSON object.
pub fn parse_arch_lines(text: &str, space: &SearchSpace) -> Result<Vec<ArchDescriptor>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        out.push(parse_arch(line, space).with_context(|| format!("line {}", i + 1))?);
    }
    Ok(out)
}

pub fn parse_arch(s: &str, space: &SearchSpace) -> Result<ArchDescriptor> {
    let desc = if s.starts_with('{') {
        let (kind, d) = ArchJson::parse(s)?;
        if kind != space.kind {
            return Err(usage(format!("architecture is for space {kind}, not {}", space.kind)));
        }
        d
    } else {
        ArchDescriptor::from_arch_id(space.kind, s)?
    };
    space.validate(&desc)?;
    Ok(desc)
}

pub fn thread_pool(jobs: usize) -> Result<rayon::ThreadPool> {
    Ok(rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?)
}

use rand::seq::IndexedRandom;
use rand::Rng;

use super::{
    round_channels, ArchDescriptor, BlockKind, Nb201Cell, Nb201Op, S2Config, S2Stage, SearchSpace, SpaceKind,
    S0_DEPTHS, S2_KERNELS, S2_SAMPLE_WIDTH_FACTORS, S2_WIDTH_FACTORS,
};
use crate::{Error, Result};

pub const MAX_SAMPLE_ATTEMPTS: usize = 10_000;
pub const MAX_MUTATION_RETRIES: usize = 100;

/// All 64 S0 depth triples in lexicographic order.
pub fn enumerate_s0() -> Vec<ArchDescriptor> {
    let mut out = Vec::with_capacity(64);
    for &a in &S0_DEPTHS {
        for &b in &S0_DEPTHS {
            for &c in &S0_DEPTHS {
                out.push(ArchDescriptor::s0(a, b, c));
            }
        }
    }
    out
}

fn draw_unconstrained<R: Rng + ?Sized>(space: &SearchSpace, rng: &mut R) -> Result<ArchDescriptor> {
    Ok(match space.kind {
        SpaceKind::S0 => {
            let mut d = [0; 3];
            for x in &mut d {
                *x = *S0_DEPTHS.choose(rng).expect("non-empty");
            }
            ArchDescriptor::S0 { depths: d }
        }
        SpaceKind::Nb201 => {
            let mut ops = [Nb201Op::None; 6];
            for op in &mut ops {
                *op = *Nb201Op::ALL.choose(rng).expect("non-empty");
            }
            ArchDescriptor::Nb201(Nb201Cell::new(ops))
        }
        SpaceKind::S2Cifar | SpaceKind::S2Imagenet => {
            let t = space
                .s2
                .as_ref()
                .ok_or_else(|| Error::InvalidArch(format!("{} has no S2 template", space.kind)))?;
            let stages = t
                .strides
                .iter()
                .zip(&t.base_channels)
                .map(|(&stride, &base)| {
                    let factor = *S2_SAMPLE_WIDTH_FACTORS.choose(rng).expect("non-empty");
                    S2Stage {
                        block: if rng.random_bool(0.5) {
                            BlockKind::Basic
                        } else {
                            BlockKind::Bottleneck
                        },
                        kernel: *S2_KERNELS.choose(rng).expect("non-empty"),
                        channels: round_channels(base as f64 * factor),
                        depth: rng.random_range(1..=t.sample_max_depth),
                        stride,
                    }
                })
                .collect();
            ArchDescriptor::S2(S2Config {
                stem_channels: t.stem_channels,
                stages,
            })
        }
    })
}

/// Uniform draw over the space's discrete choices, rejecting candidates that
/// break the space's constraints.
pub fn sample_random<R: Rng + ?Sized>(space: &SearchSpace, rng: &mut R) -> Result<ArchDescriptor> {
    for _ in 0..MAX_SAMPLE_ATTEMPTS {
        let d = draw_unconstrained(space, rng)?;
        if space.satisfies(&d)? {
            return Ok(d);
        }
    }
    Err(Error::Unsatisfiable {
        attempts: MAX_SAMPLE_ATTEMPTS,
    })
}

/// Mutates exactly one locus of `desc`.
///
/// S0 resamples one stage depth; NB201 resamples one edge operation; S2 picks
/// one stage and changes its kernel, its width (by a factor from
/// {0.67, 0.8, 1.25, 1.5}, rounded to a multiple of 8 in [8, 2048]) or its
/// depth (±1). A draw that leaves the space is retried. Constraints are not
/// checked here.
pub fn mutate<R: Rng + ?Sized>(desc: &ArchDescriptor, space: &SearchSpace, rng: &mut R) -> Result<ArchDescriptor> {
    space.validate(desc)?;
    for _ in 0..MAX_MUTATION_RETRIES {
        let child = match desc {
            ArchDescriptor::S0 { depths } => {
                let mut d = *depths;
                let i = rng.random_range(0..3);
                d[i] = *S0_DEPTHS.choose(rng).expect("non-empty");
                ArchDescriptor::S0 { depths: d }
            }
            ArchDescriptor::Nb201(cell) => {
                let mut ops = cell.ops;
                let i = rng.random_range(0..6);
                ops[i] = *Nb201Op::ALL.choose(rng).expect("non-empty");
                ArchDescriptor::Nb201(Nb201Cell::new(ops))
            }
            ArchDescriptor::S2(cfg) => {
                let mut cfg = cfg.clone();
                let i = rng.random_range(0..cfg.stages.len());
                let stage = &mut cfg.stages[i];
                match rng.random_range(0..3) {
                    0 => stage.kernel = *S2_KERNELS.choose(rng).expect("non-empty"),
                    1 => {
                        let f = *S2_WIDTH_FACTORS.choose(rng).expect("non-empty");
                        stage.channels = round_channels(stage.channels as f64 * f);
                    }
                    _ => {
                        if rng.random_bool(0.5) {
                            stage.depth += 1;
                        } else {
                            stage.depth = stage.depth.saturating_sub(1);
                        }
                    }
                }
                ArchDescriptor::S2(cfg)
            }
        };
        if space.validate(&child).is_ok() {
            return Ok(child);
        }
    }
    Err(Error::Unsatisfiable {
        attempts: MAX_MUTATION_RETRIES,
    })
}

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use rayon::prelude::*;
use serde::Serialize;

use diswot_core::arch::{enumerate_s0, sample_random, ArchDescriptor, SpaceKind};
use diswot_core::data::{render_scores_csv, ScoreRow};
use diswot_core::proxy::{ProxyKind, ScoringContext};
use diswot_core::rng::{derive_seed, stream_rng};

use crate::common::{parse_arch, parse_arch_lines, parse_proxy, thread_pool, ScoringArgs};
use crate::usage;

#[derive(Debug, Args, Serialize)]
pub struct ScoreArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: ScoringArgs,

    /// Proxies to compute, comma separated.
    #[arg(long, value_parser = parse_proxy, value_delimiter = ',', default_value = "diswot")]
    #[serde(serialize_with = "ser_proxies")]
    pub proxy: Vec<ProxyKind>,

    /// Master seeds, comma separated; one block of rows per seed.
    #[arg(long, env = "DISWOT_SEED", value_delimiter = ',', default_value = "0")]
    pub seed: Vec<u64>,

    /// Score all 64 S0 candidates.
    #[arg(long)]
    pub all_s0: bool,

    /// Architecture to score (arch_id or architecture JSON); repeatable.
    #[arg(long)]
    pub arch: Vec<String>,

    /// File with one architecture per line.
    #[arg(long)]
    pub arch_file: Option<PathBuf>,

    /// Score this many random architectures of the space (drawn from the first seed).
    #[arg(long)]
    pub random: Option<usize>,

    /// Output CSV; standard output when absent. A `<out>.meta.json` file
    /// records the full invocation.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn ser_proxies<S: serde::Serializer>(v: &[ProxyKind], s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(v.iter().map(|k| k.name()))
}

fn candidates(args: &ScoreArgs, space: &diswot_core::arch::SearchSpace) -> Result<Vec<ArchDescriptor>> {
    let mut out = Vec::new();
    if args.all_s0 {
        if space.kind != SpaceKind::S0 {
            return Err(usage("--all-s0 requires --space s0"));
        }
        out.extend(enumerate_s0().into_iter().filter(|d| space.meets_constraints(d).unwrap_or(false)));
    }
    for a in &args.arch {
        out.push(parse_arch(a, space).map_err(|e| usage(format!("--arch `{a}`: {e:#}")))?);
    }
    if let Some(p) = &args.arch_file {
        let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        out.extend(parse_arch_lines(&text, space).with_context(|| p.display().to_string())?);
    }
    if let Some(n) = args.random {
        let mut rng = stream_rng(derive_seed(args.seed[0], "archs"), 0);
        for _ in 0..n {
            out.push(sample_random(space, &mut rng)?);
        }
    }
    if out.is_empty() {
        return Err(usage("no architectures given (use --all-s0, --arch, --arch-file or --random)"));
    }
    Ok(out)
}

pub fn run(args: ScoreArgs) -> Result<()> {
    args.common.check()?;
    if args.seed.is_empty() {
        return Err(usage("--seed needs at least one value"));
    }
    let space = args.common.space()?;
    let archs = candidates(&args, &space)?;
    let needs_teacher = args.proxy.iter().any(|k| k.needs_teacher());
    let pool = thread_pool(args.common.jobs)?;

    let mut rows = Vec::new();
    for &seed in &args.seed {
        let batch = args.common.batch(&space, seed)?;
        let teacher = needs_teacher.then(|| args.common.teacher(&space, seed)).transpose()?;
        let ctx = ScoringContext::new(
            &space,
            &batch,
            teacher.as_ref(),
            args.common.diswot(),
            args.common.temperature,
        )?;
        let scored: Vec<Vec<ScoreRow>> = pool.install(|| {
            archs
                .par_iter()
                .map(|desc| {
                    let id = desc.arch_id();
                    let init = args.common.init(derive_seed(seed, &format!("student/{id}")));
                    let scores = ctx
                        .score_all(&args.proxy, desc, &init)
                        .with_context(|| format!("scoring {id}"))?;
                    Ok(scores
                        .into_iter()
                        .map(|s| ScoreRow {
                            arch_id: id.clone(),
                            proxy: s.proxy_name,
                            value: s.value,
                            higher_is_better: s.higher_is_better,
                            seed,
                        })
                        .collect())
                })
                .collect::<Result<_>>()
        })?;
        rows.extend(scored.into_iter().flatten());
    }

    let csv = render_scores_csv(&rows)?;
    match &args.out {
        Some(path) => {
            std::fs::write(path, csv).with_context(|| format!("writing {}", path.display()))?;
            let meta = serde_json::json!({
                "command": "score",
                "config": &args,
                "space": &space,
                "teacher": needs_teacher.then(|| args.common.teacher_desc(&space).map(|d| d.arch_id())).transpose()?,
                "n_archs": archs.len(),
                "n_rows": rows.len(),
            });
            let mut meta_path = path.clone().into_os_string();
            meta_path.push(".meta.json");
            std::fs::write(&meta_path, serde_json::to_string_pretty(&meta)? + "\n")?;
        }
        None => print!("{csv}"),
    }
    Ok(())
}

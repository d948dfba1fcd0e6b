use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, ValueEnum};
use serde::Serialize;

use diswot_core::arch::{ArchDescriptor, ArchJson};
use diswot_core::proxy::{ProxyKind, ProxyScore, ScoringContext};
use diswot_core::search::{evolve, random_search, write_jsonl, EvoConfig, SearchState};

use crate::common::{parse_proxy, thread_pool, ScoringArgs};
use crate::usage;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Evo,
    Random,
}

#[derive(Debug, Args, Serialize)]
pub struct SearchArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: ScoringArgs,

    #[arg(long, value_enum, default_value = "evo")]
    pub strategy: Strategy,

    /// Proxy used as fitness.
    #[arg(long, value_parser = parse_proxy, default_value = "diswot")]
    #[serde(serialize_with = "ser_proxy")]
    pub fitness: ProxyKind,

    /// Search for the lowest proxy value instead of the highest.
    #[arg(long)]
    pub minimize: bool,

    /// Master seed.
    #[arg(long, env = "DISWOT_SEED", default_value_t = 0)]
    pub seed: u64,

    #[arg(long, default_value_t = 20)]
    pub population: usize,

    /// Evolution iterations.
    #[arg(long, default_value_t = 100)]
    pub iters: usize,

    /// Fraction of the population sampled into each pool.
    #[arg(long, default_value_t = 0.5)]
    pub sample_ratio: f64,

    #[arg(long, default_value_t = 3)]
    pub topk: usize,

    /// Redraw constraint-violating children instead of skipping the iteration.
    #[arg(long)]
    pub retry_mutation: bool,

    /// Evaluations for `--strategy random`.
    #[arg(long, default_value_t = 100)]
    pub budget: usize,

    /// Random search: never score the same architecture twice.
    #[arg(long)]
    pub distinct: bool,

    /// Output directory for `run.jsonl` and `summary.json`.
    #[arg(long, default_value = "search_out")]
    pub out: PathBuf,
}

fn ser_proxy<S: serde::Serializer>(v: &ProxyKind, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(v.name())
}

pub fn run(args: SearchArgs) -> Result<()> {
    args.common.check()?;
    if args.budget == 0 {
        return Err(usage("--budget must be at least 1"));
    }
    let cfg = EvoConfig {
        population_size: args.population,
        max_iterations: args.iters,
        sample_ratio: args.sample_ratio,
        topk: args.topk,
        master_seed: args.seed,
        retry_mutation: args.retry_mutation,
    };
    if args.strategy == Strategy::Evo {
        cfg.validate().map_err(|e| usage(e.to_string()))?;
    }
    let space = args.common.space()?;
    let batch = args.common.batch(&space, args.seed)?;
    let teacher = args
        .fitness
        .needs_teacher()
        .then(|| args.common.teacher(&space, args.seed))
        .transpose()?;
    let ctx = ScoringContext::new(
        &space,
        &batch,
        teacher.as_ref(),
        args.common.diswot(),
        args.common.temperature,
    )?;
    let sign = if args.minimize { -1.0 } else { 1.0 };
    let fitness = |desc: &ArchDescriptor, seed: u64| -> diswot_core::Result<ProxyScore> {
        let mut s = ctx.score(args.fitness, desc, &args.common.init(seed))?;
        s.value *= sign;
        Ok(s)
    };

    let pool = thread_pool(args.common.jobs)?;
    let mut state: SearchState = pool.install(|| match args.strategy {
        Strategy::Evo => evolve(&space, fitness, &cfg),
        Strategy::Random => random_search(&space, fitness, args.budget, args.seed, args.distinct),
    })?;

    // Log proxy values, not the sign-adjusted fitness.
    for r in &mut state.records {
        r.best_score *= sign;
    }
    std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    write_jsonl(&args.out.join("run.jsonl"), &state.records)?;
    let best_json = ArchJson::from_descriptor(space.kind, &state.best.desc)?;
    let summary = serde_json::json!({
        "command": "search",
        "config": &args,
        "space": &space,
        "teacher": teacher.as_ref().map(|t| t.descriptor().arch_id()),
        "best": {
            "arch_id": state.best.desc.arch_id(),
            "arch": best_json,
            "score": state.best.score.value * sign,
            "fitness": state.best.score.value,
            "serial": state.best.serial,
        },
        "evaluations": state.evaluations,
        "iterations": state.records.len(),
        "final_population": state.population.iter().map(|m| serde_json::json!({
            "arch_id": m.desc.arch_id(),
            "fitness": m.score.value,
            "serial": m.serial,
        })).collect::<Vec<_>>(),
    });
    std::fs::write(args.out.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    println!(
        "best {} {} = {:?} after {} evaluations",
        state.best.desc.arch_id(),
        args.fitness,
        state.best.score.value * sign,
        state.evaluations
    );
    Ok(())
}

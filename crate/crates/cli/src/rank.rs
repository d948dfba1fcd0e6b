use std::collections::BTreeSet;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, ValueEnum};

use diswot_core::data::{read_accuracy_csv, read_scores_csv};
use diswot_core::rank::{evaluate_proxy, render_report_csv, render_report_table, EvalOptions, KendallVariant};
use diswot_core::rng::{derive_seed, stream_rng};

use crate::usage;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum KendallArg {
    TauA,
    TauB,
}

#[derive(Debug, Args)]
pub struct RankArgs {
    /// Score CSV; repeatable (typically one per seed).
    #[arg(long, required = true)]
    pub scores: Vec<PathBuf>,

    /// Accuracy CSV with header `arch_id,accuracy`.
    #[arg(long)]
    pub accuracy: PathBuf,

    /// Proxies to report, comma separated; all proxies present by default.
    #[arg(long, value_delimiter = ',')]
    pub proxy: Vec<String>,

    /// Architectures sampled per repetition; all by default.
    #[arg(long)]
    pub sample: Option<usize>,

    /// Repetitions; one per score seed by default.
    #[arg(long)]
    pub seeds: Option<usize>,

    /// Seed for architecture subsampling.
    #[arg(long, env = "DISWOT_SEED", default_value_t = 0)]
    pub seed: u64,

    #[arg(long, value_enum, default_value = "tau-a")]
    pub kendall: KendallArg,

    /// Report CSV path; the table always goes to standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(args: RankArgs) -> Result<()> {
    if args.sample.is_some_and(|s| s < 3) {
        return Err(usage("--sample must be at least 3"));
    }
    if args.seeds == Some(0) {
        return Err(usage("--seeds must be at least 1"));
    }
    let accuracy = read_accuracy_csv(&args.accuracy).with_context(|| args.accuracy.display().to_string())?;
    let mut rows = Vec::new();
    for p in &args.scores {
        rows.extend(read_scores_csv(p).with_context(|| p.display().to_string())?);
    }
    let mut seen = BTreeSet::new();
    for r in &rows {
        if !seen.insert((r.arch_id.clone(), r.proxy.clone(), r.seed)) {
            return Err(usage(format!(
                "arch_id `{}` is scored twice for proxy `{}` and seed {}",
                r.arch_id, r.proxy, r.seed
            )));
        }
    }
    let proxies: Vec<String> = if args.proxy.is_empty() {
        let mut names = Vec::new();
        for r in &rows {
            if !names.contains(&r.proxy) {
                names.push(r.proxy.clone());
            }
        }
        names
    } else {
        args.proxy.clone()
    };
    let opts = EvalOptions {
        sample_size: args.sample,
        repetitions: args.seeds,
        kendall: match args.kendall {
            KendallArg::TauA => KendallVariant::TauA,
            KendallArg::TauB => KendallVariant::TauB,
        },
    };
    let mut rng = stream_rng(derive_seed(args.seed, "rank"), 0);
    let mut reports = Vec::new();
    for p in &proxies {
        if !rows.iter().any(|r| &r.proxy == p) {
            return Err(usage(format!("no scores for proxy `{p}`")));
        }
        reports.push(evaluate_proxy(p, &rows, &accuracy, &opts, &mut rng).with_context(|| format!("proxy {p}"))?);
    }
    for r in reports.iter().filter(|r| r.degenerate > 0) {
        eprintln!(
            "warning: {}: {} repetition(s) had a constant series; coefficients set to 0",
            r.proxy_name, r.degenerate
        );
    }
    print!("{}", render_report_table(&reports));
    if let Some(out) = &args.out {
        std::fs::write(out, render_report_csv(&reports)).with_context(|| format!("writing {}", out.display()))?;
    }
    Ok(())
}

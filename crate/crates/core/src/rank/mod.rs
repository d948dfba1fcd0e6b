//! Rank statistics between proxy scores and ground-truth accuracies.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{read_scores_csv, AccuracyTable, ScoreRow};
use crate::{Error, Result};

/// Scores and targets aligned by architecture.
#[derive(Clone, Debug, PartialEq)]
pub struct PairedSeries {
    arch_ids: Vec<String>,
    scores: Vec<f64>,
    targets: Vec<f64>,
}

impl PairedSeries {
    pub fn new(arch_ids: Vec<String>, scores: Vec<f64>, targets: Vec<f64>) -> Result<Self> {
        if arch_ids.len() != scores.len() || scores.len() != targets.len() {
            return Err(Error::InvalidArgument(format!(
                "series lengths differ: {} ids, {} scores, {} targets",
                arch_ids.len(),
                scores.len(),
                targets.len()
            )));
        }
        if scores.len() < 2 {
            return Err(Error::InvalidArgument(format!("need at least 2 pairs, got {}", scores.len())));
        }
        if scores.iter().chain(&targets).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("series contain non-finite values".into()));
        }
        let mut seen = HashSet::new();
        if let Some(dup) = arch_ids.iter().find(|id| !seen.insert(id.as_str())) {
            return Err(Error::InvalidArgument(format!("duplicate arch_id `{dup}`")));
        }
        Ok(PairedSeries {
            arch_ids,
            scores,
            targets,
        })
    }

    /// Series with positional ids.
    pub fn from_values(scores: Vec<f64>, targets: Vec<f64>) -> Result<Self> {
        let ids = (0..scores.len()).map(|i| i.to_string()).collect();
        PairedSeries::new(ids, scores, targets)
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn arch_ids(&self) -> &[String] {
        &self.arch_ids
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    /// Same pairs with the roles of scores and targets exchanged.
    pub fn swapped(&self) -> Self {
        PairedSeries {
            arch_ids: self.arch_ids.clone(),
            scores: self.targets.clone(),
            targets: self.scores.clone(),
        }
    }
}

/// A coefficient plus a flag raised when it was defined as 0 because a series
/// had no variation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Correlation {
    pub value: f64,
    pub degenerate: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KendallVariant {
    /// Ties contribute 0 and the denominator is `M(M-1)/2`.
    #[default]
    TauA,
    /// Tie-corrected denominator.
    TauB,
}

fn tie_pairs(sorted: &[f64]) -> u64 {
    let mut total = 0u64;
    let mut run = 1u64;
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            total += run * (run - 1) / 2;
            run = 1;
        }
    }
    total + run * (run - 1) / 2
}

/// Sorts `v` and returns the number of inversions removed.
fn merge_count(v: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = merge_count(&mut v[..mid]) + merge_count(&mut v[mid..]);
    let mut merged = Vec::with_capacity(n);
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if v[j] < v[i] {
            swaps += (mid - i) as u64;
            merged.push(v[j]);
            j += 1;
        } else {
            merged.push(v[i]);
            i += 1;
        }
    }
    merged.extend_from_slice(&v[i..mid]);
    merged.extend_from_slice(&v[j..n]);
    v.copy_from_slice(&merged);
    swaps
}

/// Concordant minus discordant pairs, and the tie counts `(n1, n2)`, in
/// O(M log M).
fn kendall_parts(x: &[f64], y: &[f64]) -> (i64, u64, u64, u64) {
    let n = x.len() as u64;
    let n0 = n * (n - 1) / 2;
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(y[a].total_cmp(&y[b])));
    let xs: Vec<f64> = order.iter().map(|&i| x[i]).collect();
    let mut ys: Vec<f64> = order.iter().map(|&i| y[i]).collect();
    let n1 = tie_pairs(&xs);
    // Joint ties: runs equal in both coordinates.
    let mut n3 = 0u64;
    let mut run = 1u64;
    for k in 1..xs.len() {
        if xs[k] == xs[k - 1] && ys[k] == ys[k - 1] {
            run += 1;
        } else {
            n3 += run * (run - 1) / 2;
            run = 1;
        }
    }
    n3 += run * (run - 1) / 2;
    let swaps = merge_count(&mut ys);
    let n2 = tie_pairs(&ys);
    let s = n0 as i64 - n1 as i64 - n2 as i64 + n3 as i64 - 2 * swaps as i64;
    (s, n0, n1, n2)
}

pub fn kendall_tau(series: &PairedSeries) -> Correlation {
    kendall_tau_with(series, KendallVariant::TauA)
}

pub fn kendall_tau_with(series: &PairedSeries, variant: KendallVariant) -> Correlation {
    let (s, n0, n1, n2) = kendall_parts(&series.targets, &series.scores);
    let degenerate = n1 == n0 || n2 == n0;
    if degenerate {
        return Correlation {
            value: 0.0,
            degenerate,
        };
    }
    let value = match variant {
        KendallVariant::TauA => s as f64 / n0 as f64,
        KendallVariant::TauB => s as f64 / (((n0 - n1) as f64) * ((n0 - n2) as f64)).sqrt(),
    };
    Correlation {
        value,
        degenerate: false,
    }
}

/// 1-based ranks, ties sharing the mean of their positions.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

fn pearson_raw(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

fn require_three(series: &PairedSeries, what: &str) -> Result<()> {
    if series.len() < 3 {
        return Err(Error::InvalidArgument(format!("{what} needs at least 3 pairs, got {}", series.len())));
    }
    Ok(())
}

/// Pearson correlation of average ranks. Without ties this is evaluated as
/// `1 - 6·Σd²/(M(M²-1))` in integer arithmetic with one final division.
pub fn spearman(series: &PairedSeries) -> Result<Correlation> {
    require_three(series, "spearman")?;
    let rt = average_ranks(&series.targets);
    let rs = average_ranks(&series.scores);
    let has_ties = |r: &[f64]| r.iter().any(|x| x.fract() != 0.0) || {
        let mut s: Vec<f64> = r.to_vec();
        s.sort_by(f64::total_cmp);
        s.windows(2).any(|w| w[0] == w[1])
    };
    if !has_ties(&rt) && !has_ties(&rs) {
        let m = series.len() as i128;
        let d2: i128 = rt.iter().zip(&rs).map(|(a, b)| (*a as i128 - *b as i128).pow(2)).sum();
        let den = m * (m * m - 1);
        return Ok(Correlation {
            value: (den - 6 * d2) as f64 / den as f64,
            degenerate: false,
        });
    }
    Ok(match pearson_raw(&rt, &rs) {
        Some(value) => Correlation {
            value,
            degenerate: false,
        },
        None => Correlation {
            value: 0.0,
            degenerate: true,
        },
    })
}

pub fn pearson(series: &PairedSeries) -> Result<f64> {
    require_three(series, "pearson")?;
    pearson_raw(&series.targets, &series.scores)
        .ok_or_else(|| Error::InvalidArgument("pearson is undefined for a constant series".into()))
}

/// Mean and population standard deviation over repetitions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    pub fn from_values(v: &[f64]) -> Self {
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        Stat {
            mean,
            std: var.sqrt(),
        }
    }

    /// `mean±std` in percent with two decimals.
    pub fn percent(&self) -> String {
        format!("{}±{}", percent(self.mean), percent(self.std))
    }
}

/// A fraction rendered as a percentage with two decimals.
pub fn percent(x: f64) -> String {
    let s = format!("{:.2}", x * 100.0);
    if s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub proxy_name: String,
    pub kendall_tau: Stat,
    pub spearman: Stat,
    pub pearson: Stat,
    pub n_seeds: usize,
    pub n_archs: usize,
    /// Repetitions where a coefficient was defined as 0 for lack of variation.
    pub degenerate: usize,
}

pub const REPORT_HEADER: &str = "proxy,metric,mean,std,n_seeds,n_archs";

impl CorrelationReport {
    fn metrics(&self) -> [(&'static str, &Stat); 3] {
        [
            ("kendall_tau", &self.kendall_tau),
            ("spearman", &self.spearman),
            ("pearson", &self.pearson),
        ]
    }

    /// Body lines of the report CSV (no header).
    pub fn csv_lines(&self) -> Vec<String> {
        self.metrics()
            .iter()
            .map(|(m, s)| {
                format!(
                    "{},{m},{},{},{},{}",
                    self.proxy_name,
                    percent(s.mean),
                    percent(s.std),
                    self.n_seeds,
                    self.n_archs
                )
            })
            .collect()
    }
}

pub fn render_report_csv(reports: &[CorrelationReport]) -> String {
    let mut out = String::from(REPORT_HEADER);
    out.push('\n');
    for r in reports {
        for l in r.csv_lines() {
            out.push_str(&l);
            out.push('\n');
        }
    }
    out
}

/// Fixed-width table of `mean±std` percentages.
pub fn render_report_table(reports: &[CorrelationReport]) -> String {
    let width = reports.iter().map(|r| r.proxy_name.chars().count()).max().unwrap_or(0).max(5);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<width$}  {:>15}  {:>15}  {:>15}  {:>5}  {:>5}",
        "proxy", "kendall_tau(%)", "spearman(%)", "pearson(%)", "seeds", "archs"
    );
    for r in reports {
        let _ = writeln!(
            out,
            "{:<width$}  {:>15}  {:>15}  {:>15}  {:>5}  {:>5}",
            r.proxy_name,
            r.kendall_tau.percent(),
            r.spearman.percent(),
            r.pearson.percent(),
            r.n_seeds,
            r.n_archs
        );
    }
    out
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    /// Architectures drawn without replacement per repetition; `None` uses all.
    pub sample_size: Option<usize>,
    /// Repetitions; `None` means one per score seed.
    pub repetitions: Option<usize>,
    pub kendall: KendallVariant,
}

/// Score series of one proxy per seed, in ascending seed order, each in
/// file order.
pub fn group_by_seed(rows: &[ScoreRow], proxy: &str) -> Vec<(u64, Vec<(String, f64)>)> {
    let mut groups: BTreeMap<u64, Vec<(String, f64)>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.proxy == proxy) {
        groups.entry(r.seed).or_default().push((r.arch_id.clone(), r.value));
    }
    groups.into_iter().collect()
}

/// Correlates one proxy against `accuracy`.
///
/// Repetition `r` uses seed group `r mod G` (groups in ascending seed order)
/// and, when `sample_size` is set, a fresh subsample of that group's
/// architectures drawn from `rng`.
pub fn evaluate_proxy<R: Rng + ?Sized>(
    proxy: &str,
    rows: &[ScoreRow],
    accuracy: &AccuracyTable,
    opts: &EvalOptions,
    rng: &mut R,
) -> Result<CorrelationReport> {
    let groups = group_by_seed(rows, proxy);
    if groups.is_empty() {
        return Err(Error::InvalidArgument(format!("no scores for proxy `{proxy}`")));
    }
    let reps = opts.repetitions.unwrap_or(groups.len());
    if reps == 0 {
        return Err(Error::InvalidArgument("repetitions must be at least 1".into()));
    }
    let (mut kt, mut sp, mut pr) = (Vec::new(), Vec::new(), Vec::new());
    let mut n_archs = 0;
    let mut degenerate = 0;
    for r in 0..reps {
        let (_, group) = &groups[r % groups.len()];
        let picked: Vec<&(String, f64)> = match opts.sample_size {
            Some(k) if k < group.len() => {
                let mut idx = index::sample(rng, group.len(), k).into_vec();
                idx.sort_unstable();
                idx.into_iter().map(|i| &group[i]).collect()
            }
            _ => group.iter().collect(),
        };
        let mut ids = Vec::with_capacity(picked.len());
        let mut scores = Vec::with_capacity(picked.len());
        let mut targets = Vec::with_capacity(picked.len());
        for (id, v) in picked {
            let acc = accuracy.get(id).ok_or_else(|| Error::MissingArch(id.clone()))?;
            ids.push(id.clone());
            scores.push(*v);
            targets.push(acc);
        }
        if ids.len() < 3 {
            return Err(Error::InvalidArgument(format!(
                "only {} architectures joined; at least 3 are needed",
                ids.len()
            )));
        }
        let series = PairedSeries::new(ids, scores, targets)?;
        let k = kendall_tau_with(&series, opts.kendall);
        let s = spearman(&series)?;
        let p = pearson_raw(&series.targets, &series.scores);
        if k.degenerate || s.degenerate || p.is_none() {
            degenerate += 1;
        }
        kt.push(k.value);
        sp.push(s.value);
        pr.push(p.unwrap_or(0.0));
        n_archs = series.len();
    }
    Ok(CorrelationReport {
        proxy_name: proxy.to_string(),
        kendall_tau: Stat::from_values(&kt),
        spearman: Stat::from_values(&sp),
        pearson: Stat::from_values(&pr),
        n_seeds: reps,
        n_archs,
        degenerate,
    })
}

/// Reads one score CSV per path and evaluates every requested proxy.
pub fn evaluate_proxy_paths<R: Rng + ?Sized>(
    paths: &[&Path],
    proxies: &[&str],
    accuracy: &AccuracyTable,
    opts: &EvalOptions,
    rng: &mut R,
) -> Result<Vec<CorrelationReport>> {
    let mut rows = Vec::new();
    for p in paths {
        rows.extend(read_scores_csv(p)?);
    }
    let mut seen = HashSet::new();
    for r in &rows {
        if !seen.insert((r.arch_id.as_str(), r.proxy.as_str(), r.seed)) {
            return Err(Error::InvalidArgument(format!(
                "arch_id `{}` scored twice for proxy `{}` and seed {}",
                r.arch_id, r.proxy, r.seed
            )));
        }
    }
    proxies
        .iter()
        .map(|p| evaluate_proxy(p, &rows, accuracy, opts, rng))
        .collect()
}

//! Constrained evolutionary search and a random-search baseline.
//!
//! Each iteration samples a pool of `⌈r·P⌉` members, mutates a uniformly
//! chosen parent among the pool's top `k`, and, if the child meets the
//! space's constraints, scores it, appends it and evicts the lowest-scoring
//! member. A child that violates the constraints is dropped and the
//! iteration ends without an insertion.
//!
//! All search decisions come from stream 0 of the master seed. Candidate
//! `serial` is scored with seed `derive_seed(master, "candidate/<serial>")`,
//! so fitness evaluations may run in any order.

use std::collections::HashSet;
use std::io::Write;
use std::path::Path;

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arch::{mutate, sample_random, ArchDescriptor, SearchSpace, MAX_MUTATION_RETRIES, MAX_SAMPLE_ATTEMPTS};
use crate::proxy::ProxyScore;
use crate::rng::{derive_seed, stream_rng, StreamRng};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvoConfig {
    pub population_size: usize,
    pub max_iterations: usize,
    pub sample_ratio: f64,
    pub topk: usize,
    pub master_seed: u64,
    /// Redraw a constraint-violating child instead of skipping the iteration.
    pub retry_mutation: bool,
}

impl Default for EvoConfig {
    fn default() -> Self {
        EvoConfig {
            population_size: 20,
            max_iterations: 100,
            sample_ratio: 0.5,
            topk: 3,
            master_seed: 0,
            retry_mutation: false,
        }
    }
}

impl EvoConfig {
    pub fn pool_size(&self) -> usize {
        (self.sample_ratio * self.population_size as f64).ceil() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.population_size == 0 {
            return bad("population size must be at least 1".into());
        }
        if self.max_iterations == 0 {
            return bad("iterations must be at least 1".into());
        }
        if !(self.sample_ratio > 0.0 && self.sample_ratio <= 1.0) {
            return bad(format!("sample ratio must lie in (0, 1], got {}", self.sample_ratio));
        }
        if self.topk == 0 || self.topk > self.pool_size() {
            return bad(format!(
                "topk must lie in [1, {}] for population {} and ratio {}",
                self.pool_size(),
                self.population_size,
                self.sample_ratio
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Member {
    pub desc: ArchDescriptor,
    pub score: ProxyScore,
    /// Insertion order across the whole run.
    pub serial: u64,
}

impl Member {
    /// Comparison key: larger is better regardless of the proxy's orientation.
    pub fn fitness(&self) -> f64 {
        if self.score.higher_is_better {
            self.score.value
        } else {
            -self.score.value
        }
    }

    fn beats(&self, other: &Member) -> bool {
        self.fitness() > other.fitness() || (self.fitness() == other.fitness() && self.serial < other.serial)
    }
}

/// One line of the run log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub iter: usize,
    pub best_score: f64,
    pub best_arch: String,
    pub evals: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchState {
    pub population: Vec<Member>,
    /// Best fitness after each iteration.
    pub history: Vec<f64>,
    pub best: Member,
    pub evaluations: usize,
    pub records: Vec<IterRecord>,
}

impl SearchState {
    fn record(&mut self, iter: usize) {
        self.history.push(self.best.fitness());
        self.records.push(IterRecord {
            iter,
            best_score: self.best.score.value,
            best_arch: self.best.desc.arch_id(),
            evals: self.evaluations,
        });
    }
}

/// Seed handed to the fitness for candidate `serial`.
pub fn candidate_seed(master: u64, serial: u64) -> u64 {
    derive_seed(master, &format!("candidate/{serial}"))
}

/// Indices of the `k` largest `scores`, ties to the earlier index.
pub fn topk_indices(scores: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    idx.truncate(k);
    idx
}

/// Positions in `pool` of its `k` best members, ties to the earlier serial.
pub fn get_topk(pool: &[Member], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..pool.len()).collect();
    idx.sort_by(|&a, &b| {
        pool[b]
            .fitness()
            .total_cmp(&pool[a].fitness())
            .then(pool[a].serial.cmp(&pool[b].serial))
    });
    idx.truncate(k);
    idx
}

fn score_all<F>(descs: Vec<ArchDescriptor>, first_serial: u64, master: u64, fitness: &F) -> Result<Vec<Member>>
where
    F: Fn(&ArchDescriptor, u64) -> Result<ProxyScore> + Sync,
{
    descs
        .into_par_iter()
        .enumerate()
        .map(|(i, desc)| {
            let serial = first_serial + i as u64;
            let score = fitness(&desc, candidate_seed(master, serial))?;
            Ok(Member { desc, score, serial })
        })
        .collect()
}

fn best_of(members: &[Member]) -> Member {
    members
        .iter()
        .fold(None::<&Member>, |best, m| match best {
            Some(b) if !m.beats(b) => Some(b),
            _ => Some(m),
        })
        .expect("non-empty")
        .clone()
}

fn draw_child(parent: &ArchDescriptor, space: &SearchSpace, cfg: &EvoConfig, rng: &mut StreamRng) -> Result<Option<ArchDescriptor>> {
    let attempts = if cfg.retry_mutation { MAX_MUTATION_RETRIES } else { 1 };
    for _ in 0..attempts {
        let child = match mutate(parent, space, rng) {
            Ok(c) => c,
            Err(Error::Unsatisfiable { .. }) => return Ok(None),
            Err(e) => return Err(e),
        };
        if space.satisfies(&child)? {
            return Ok(Some(child));
        }
    }
    Ok(None)
}

/// Runs `cfg.max_iterations` iterations after scoring an initial population
/// of `cfg.population_size` valid random candidates.
pub fn evolve<F>(space: &SearchSpace, fitness: F, cfg: &EvoConfig) -> Result<SearchState>
where
    F: Fn(&ArchDescriptor, u64) -> Result<ProxyScore> + Sync,
{
    cfg.validate()?;
    let mut rng = stream_rng(cfg.master_seed, 0);
    let init: Vec<ArchDescriptor> = (0..cfg.population_size)
        .map(|_| sample_random(space, &mut rng))
        .collect::<Result<_>>()?;
    let population = score_all(init, 0, cfg.master_seed, &fitness)?;
    let mut state = SearchState {
        best: best_of(&population),
        evaluations: population.len(),
        population,
        history: Vec::with_capacity(cfg.max_iterations),
        records: Vec::with_capacity(cfg.max_iterations),
    };
    let mut next_serial = cfg.population_size as u64;

    for iter in 1..=cfg.max_iterations {
        let n = state.population.len();
        let pool_idx = index::sample(&mut rng, n, cfg.pool_size().min(n)).into_vec();
        let pool: Vec<Member> = pool_idx.iter().map(|&i| state.population[i].clone()).collect();
        let top = get_topk(&pool, cfg.topk);
        let parent = &pool[top[rng.random_range(0..top.len())]];

        if let Some(child) = draw_child(&parent.desc, space, cfg, &mut rng)? {
            let serial = next_serial;
            next_serial += 1;
            let score = fitness(&child, candidate_seed(cfg.master_seed, serial))?;
            state.evaluations += 1;
            let member = Member {
                desc: child,
                score,
                serial,
            };
            if member.beats(&state.best) {
                state.best = member.clone();
            }
            state.population.push(member);
            if state.population.len() > cfg.population_size {
                let worst = (0..state.population.len())
                    .min_by(|&a, &b| {
                        let (x, y) = (&state.population[a], &state.population[b]);
                        x.fitness().total_cmp(&y.fitness()).then(x.serial.cmp(&y.serial))
                    })
                    .expect("non-empty");
                state.population.remove(worst);
            }
        }
        debug_assert!(state.population.len() <= cfg.population_size);
        debug_assert!(state
            .population
            .iter()
            .all(|m| space.satisfies(&m.desc).unwrap_or(false)));
        state.record(iter);
    }
    Ok(state)
}

/// Scores `budget` constraint-satisfying random draws and keeps the best.
/// With `distinct`, repeated descriptors are redrawn; the run stops early if
/// no unseen candidate turns up within the sampling attempt limit.
pub fn random_search<F>(space: &SearchSpace, fitness: F, budget: usize, seed: u64, distinct: bool) -> Result<SearchState>
where
    F: Fn(&ArchDescriptor, u64) -> Result<ProxyScore> + Sync,
{
    if budget == 0 {
        return Err(Error::InvalidArgument("budget must be at least 1".into()));
    }
    let mut rng = stream_rng(seed, 0);
    let mut seen = HashSet::new();
    let mut descs = Vec::with_capacity(budget);
    'outer: while descs.len() < budget {
        for _ in 0..MAX_SAMPLE_ATTEMPTS {
            let d = sample_random(space, &mut rng)?;
            if !distinct || seen.insert(d.clone()) {
                descs.push(d);
                continue 'outer;
            }
        }
        break;
    }
    let members = score_all(descs, 0, seed, &fitness)?;
    let mut state = SearchState {
        best: members[0].clone(),
        evaluations: 0,
        population: Vec::new(),
        history: Vec::with_capacity(members.len()),
        records: Vec::with_capacity(members.len()),
    };
    for (i, m) in members.into_iter().enumerate() {
        state.evaluations += 1;
        if m.beats(&state.best) {
            state.best = m.clone();
        }
        state.population.push(m);
        state.record(i + 1);
    }
    Ok(state)
}

/// Writes one JSON object per record.
pub fn write_jsonl(path: &Path, records: &[IterRecord]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut f, r)?;
        f.write_all(b"\n")?;
    }
    f.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::{count_params, enumerate_s0, Constraints};

    fn neg_params(space: &SearchSpace) -> impl Fn(&ArchDescriptor, u64) -> Result<ProxyScore> + Sync + '_ {
        move |d, _| ProxyScore::new("params", -(count_params(d, space)? as f64))
    }

    #[test]
    fn topk_examples() {
        assert_eq!(topk_indices(&[3.0, 1.0, 3.0, 2.0], 2), vec![0, 2]);
        assert_eq!(topk_indices(&[3.0, 1.0, 3.0, 2.0], 1), vec![0]);
        assert_eq!(topk_indices(&[1.0, 2.0], 5), vec![1, 0]);
    }

    #[test]
    fn config_validation() {
        assert!(EvoConfig::default().validate().is_ok());
        for bad in [
            EvoConfig { topk: 11, ..Default::default() },
            EvoConfig { sample_ratio: 0.0, ..Default::default() },
            EvoConfig { max_iterations: 0, ..Default::default() },
            EvoConfig { population_size: 0, ..Default::default() },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn evolve_finds_smallest_s0() {
        let space = SearchSpace::s0();
        let cfg = EvoConfig {
            population_size: 16,
            max_iterations: 300,
            master_seed: 4,
            ..Default::default()
        };
        let s = evolve(&space, neg_params(&space), &cfg).unwrap();
        assert_eq!(s.best.desc, ArchDescriptor::s0(1, 1, 1));
        assert_eq!(s.history.len(), 300);
        assert!(s.history.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(s.population.len(), 16);
        let again = evolve(&space, neg_params(&space), &cfg).unwrap();
        assert_eq!(again, s);
    }

    #[test]
    fn constraints_hold_throughout() {
        let space = SearchSpace::s0().with_constraints(Constraints {
            max_params: Some(400_000),
            ..Default::default()
        });
        let fit = |d: &ArchDescriptor, _| ProxyScore::new("params", count_params(d, &space).unwrap() as f64);
        let s = evolve(
            &space,
            fit,
            &EvoConfig {
                max_iterations: 200,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(s.population.iter().all(|m| m.score.value <= 400_000.0));
        let opt = enumerate_s0()
            .into_iter()
            .filter_map(|d| count_params(&d, &space).ok().filter(|&p| p <= 400_000))
            .max()
            .unwrap();
        assert_eq!(s.best.score.value, opt as f64);
    }

    #[test]
    fn random_search_distinct_is_exhaustive() {
        let space = SearchSpace::s0();
        let s = random_search(&space, neg_params(&space), 64, 3, true).unwrap();
        assert_eq!(s.evaluations, 64);
        assert_eq!(s.best.desc, ArchDescriptor::s0(1, 1, 1));
        let one = random_search(&space, neg_params(&space), 1, 3, false).unwrap();
        assert_eq!(one.best, one.population[0]);
        assert!(random_search(&space, neg_params(&space), 0, 3, false).is_err());
        let capped = random_search(&space, neg_params(&space), 100, 3, true).unwrap();
        assert_eq!(capped.evaluations, 64);
    }

    #[test]
    fn jsonl_lines() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.jsonl");
        let space = SearchSpace::s0();
        let s = random_search(&space, neg_params(&space), 3, 1, false).unwrap();
        write_jsonl(&p, &s.records).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text.lines().count(), 3);
        let r: IterRecord = serde_json::from_str(text.lines().last().unwrap()).unwrap();
        assert_eq!(r.evals, 3);
    }
}

//! Accelerator search strategies and the evolutionary network/accelerator
//! co-search built on them.

mod hw;
mod oracle;

pub use hw::{
    chunk_macs, coarse_search, fine_search, pe_allocation, search_accelerator, search_layers, search_variant,
    CoarseResult, FineResult, ManualDesign, PeAllocation, SearchOutcome, SearchVariant, FINE_STEPS,
};
pub use oracle::{exhaustive_oracle, oracle_layers, oracle_node_estimate, Objective, PeGrid, DEFAULT_NODE_CAP};

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::accel::{AcceleratorConfig, EnergyCoeffs, HardwareBudget, PerfReport};
use crate::search_space::{crossover_with, mutate, sample_random, validate, SearchSpace, SubNetwork};
use crate::zeroshot::{combined_scores, instantiate_with, nn_degree, zen_score, ZenConfig, ZeroShotScore};
use crate::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchParams {
    pub population: usize,
    pub expand_size: usize,
    pub mutate_prob: f64,
    /// Per-field probability of taking the second parent's value.
    pub crossover_prob: f64,
    pub iterations: usize,
    pub top_k: usize,
    pub seed: u64,
    pub zen: ZenConfig,
    /// Adds a throughput rank to the two zero-shot ranks.
    pub hardware_in_rank: bool,
}

impl Default for SearchParams {
    fn default() -> Self {
        SearchParams {
            population: 100,
            expand_size: 50,
            mutate_prob: 0.2,
            crossover_prob: 0.2,
            iterations: 15,
            top_k: 3,
            seed: 0,
            zen: ZenConfig::default(),
            hardware_in_rank: false,
        }
    }
}

impl SearchParams {
    pub fn validate(&self) -> Result<(), Error> {
        let p = |x: f64| (0.0..=1.0).contains(&x);
        if self.population == 0 || self.top_k == 0 || self.top_k > self.population {
            return Err(Error::InvalidParams(format!(
                "need 0 < top_k <= population, got top_k {} population {}",
                self.top_k, self.population
            )));
        }
        if !p(self.mutate_prob) || !p(self.crossover_prob) {
            return Err(Error::InvalidParams("probabilities must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub max_dsp: Option<u32>,
    pub max_lut: Option<u64>,
    #[serde(default)]
    pub max_latency_s: Option<f64>,
    #[serde(default)]
    pub min_gops: Option<f64>,
    #[serde(default)]
    pub objective: Objective,
}

impl Default for Constraint {
    fn default() -> Self {
        let b = HardwareBudget::default();
        Constraint {
            max_dsp: Some(b.dsp_total),
            max_lut: Some(b.lut_total),
            max_latency_s: None,
            min_gops: None,
            objective: Objective::MaximizeThroughput,
        }
    }
}

impl Constraint {
    pub fn validate(&self) -> Result<(), Error> {
        if self.max_dsp.is_none() && self.max_lut.is_none() {
            return Err(Error::InvalidParams("constraint needs max_dsp or max_lut".into()));
        }
        Ok(())
    }

    pub fn admits(&self, r: &PerfReport) -> bool {
        self.max_dsp.is_none_or(|d| r.resources.dsp <= d)
            && self.max_lut.is_none_or(|l| r.resources.lut <= l)
            && self.max_latency_s.is_none_or(|t| r.latency_s <= t)
            && self.min_gops.is_none_or(|g| r.throughput_gops >= g)
    }
}

/// Everything known about one evaluated genome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub net: SubNetwork,
    pub hash: u64,
    pub config: AcceleratorConfig,
    pub report: PerfReport,
    pub nn_degree: f64,
    pub zen_score: Option<f64>,
}

impl Candidate {
    fn tuple(&self) -> (f64, f64) {
        (self.nn_degree, self.zen_score.unwrap_or(f64::NAN))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub genome: String,
    pub candidate: Candidate,
    pub score: ZeroShotScore,
}

/// Population statistics after one selection step (iteration 0 is the
/// initial population).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub iteration: usize,
    pub population: usize,
    pub offspring: usize,
    pub evaluated: usize,
    pub cache_hits: usize,
    pub rejected: usize,
    pub best_rank: usize,
    pub mean_rank: f64,
    pub best_zen: f64,
    pub mean_zen: f64,
    pub best_nn_degree: f64,
    pub best_gops: f64,
    pub mean_gops: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoSearchResult {
    /// Top-k of the final population, best first.
    pub entries: Vec<RankedEntry>,
    pub log: Vec<IterationLog>,
    /// Feasible genomes seen during the run not dominated in (throughput,
    /// combined rank over all of them).
    pub pareto: Vec<RankedEntry>,
}

/// Per-candidate seed from the master seed and genome hash (splitmix64).
pub fn candidate_seed(master: u64, hash: u64) -> u64 {
    let mut z = master ^ hash.rotate_left(17) ^ 0x9E37_79B9_7F4A_7C15;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Outcome of evaluating one genome: `None` when no accelerator fits the
/// budget or the best one violates the constraint.
pub type Evaluation = Option<Candidate>;

/// Hardware search, constraint check, then the zero-shot scores.
pub fn evaluate(
    net: &SubNetwork,
    space: &SearchSpace,
    budget: &HardwareBudget,
    constraint: &Constraint,
    coeffs: &EnergyCoeffs,
    params: &SearchParams,
) -> Result<Evaluation, Error> {
    validate(space, net)?;
    let (config, report) = match search_accelerator(net, space, budget, coeffs) {
        Ok(x) => x,
        Err(Error::Accel(_)) => return Ok(None),
        Err(e) => return Err(e),
    };
    if !constraint.admits(&report) {
        return Ok(None);
    }
    let hash = net.genome_hash();
    let seed = candidate_seed(params.seed, hash);
    let model = instantiate_with(net, space, seed, params.zen.shift_range)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let zen = zen_score(&model, params.zen.alpha, params.zen.batch, params.zen.repeats, &mut rng).ok();
    Ok(Some(Candidate {
        net: net.clone(),
        hash,
        config,
        report,
        nn_degree: nn_degree(space, net)?,
        zen_score: zen,
    }))
}

/// Combined ranks of a candidate set; with `hardware` a throughput rank is
/// added.
pub fn rank_candidates(cands: &[&Candidate], hardware: bool) -> Vec<usize> {
    let tuples: Vec<(f64, f64)> = cands.iter().map(|c| c.tuple()).collect();
    let mut ranks = combined_scores(&tuples);
    if hardware {
        for (i, r) in ranks.iter_mut().enumerate() {
            let g = cands[i].report.throughput_gops;
            *r += cands.iter().filter(|c| c.report.throughput_gops > g).count();
        }
    }
    ranks
}

/// Ranks `pool` and keeps the best `keep`, ordered by (rank, flat genome).
/// Returns the kept candidates with their ranks within the pool.
pub fn select(pool: Vec<Candidate>, keep: usize, hardware: bool) -> Vec<(Candidate, usize)> {
    let ranks = rank_candidates(&pool.iter().collect::<Vec<_>>(), hardware);
    let mut order: Vec<(usize, Vec<u32>, usize)> = pool
        .iter()
        .enumerate()
        .map(|(i, c)| (ranks[i], c.net.to_flat(), i))
        .collect();
    order.sort();
    let mut slots: Vec<Option<Candidate>> = pool.into_iter().map(Some).collect();
    order
        .into_iter()
        .take(keep)
        .map(|(r, _, i)| (slots[i].take().expect("each index once"), r))
        .collect()
}

fn ranked_entries(cands: Vec<Candidate>, hardware: bool) -> Vec<RankedEntry> {
    select(cands, usize::MAX, hardware)
        .into_iter()
        .map(|(c, r)| RankedEntry {
            genome: c.net.genome_string(),
            score: ZeroShotScore {
                nn_degree: c.nn_degree,
                zen_score: c.zen_score,
                combined_rank: r,
            },
            candidate: c,
        })
        .collect()
}

/// Entries not dominated in (higher throughput, lower rank).
pub fn pareto_front(entries: &[RankedEntry]) -> Vec<RankedEntry> {
    let key = |e: &RankedEntry| (e.candidate.report.throughput_gops, e.score.combined_rank);
    entries
        .iter()
        .filter(|e| {
            let (g, r) = key(e);
            !entries.iter().any(|o| {
                let (og, or) = key(o);
                og >= g && or <= r && (og > g || or < r)
            })
        })
        .cloned()
        .collect()
}

fn stats(iteration: usize, pop: &[(Candidate, usize)], offspring: usize, evaluated: usize, hits: usize, rejected: usize) -> IterationLog {
    let n = pop.len() as f64;
    let zens: Vec<f64> = pop.iter().filter_map(|c| c.0.zen_score).collect();
    let mean = |v: &[f64]| if v.is_empty() { f64::NAN } else { v.iter().sum::<f64>() / v.len() as f64 };
    let gops: Vec<f64> = pop.iter().map(|c| c.0.report.throughput_gops).collect();
    IterationLog {
        iteration,
        population: pop.len(),
        offspring,
        evaluated,
        cache_hits: hits,
        rejected,
        best_rank: pop.iter().map(|c| c.1).min().unwrap_or(0),
        mean_rank: pop.iter().map(|c| c.1 as f64).sum::<f64>() / n,
        best_zen: zens.iter().cloned().fold(f64::NAN, f64::max),
        mean_zen: mean(&zens),
        best_nn_degree: pop.iter().map(|c| c.0.nn_degree).fold(f64::NAN, f64::max),
        best_gops: gops.iter().cloned().fold(f64::NAN, f64::max),
        mean_gops: mean(&gops),
    }
}

struct Archive<'a> {
    cache: BTreeMap<u64, Evaluation>,
    space: &'a SearchSpace,
    budget: &'a HardwareBudget,
    constraint: &'a Constraint,
    coeffs: &'a EnergyCoeffs,
    params: &'a SearchParams,
}

impl Archive<'_> {
    /// Evaluates the genomes not yet cached, in parallel. Returns (new
    /// evaluations, cache hits).
    fn fill(&mut self, nets: &[SubNetwork]) -> Result<(usize, usize), Error> {
        let mut seen = BTreeSet::new();
        let fresh: Vec<&SubNetwork> = nets
            .iter()
            .filter(|n| {
                let h = n.genome_hash();
                !self.cache.contains_key(&h) && seen.insert(h)
            })
            .collect();
        let results: Vec<Result<Evaluation, Error>> = fresh
            .par_iter()
            .map(|n| evaluate(n, self.space, self.budget, self.constraint, self.coeffs, self.params))
            .collect();
        for (n, r) in fresh.iter().zip(results) {
            self.cache.insert(n.genome_hash(), r?);
        }
        Ok((fresh.len(), nets.len() - fresh.len()))
    }

    fn get(&self, net: &SubNetwork) -> Option<&Candidate> {
        self.cache.get(&net.genome_hash()).and_then(|e| e.as_ref())
    }
}

/// Evolutionary co-search: sample, then per iteration breed offspring by
/// crossover and mutation, search each new genome's accelerator, drop
/// constraint violators, rank survivors together with the population by
/// combined zero-shot rank and keep the best.
pub fn cosearch(
    space: &SearchSpace,
    budget: &HardwareBudget,
    constraint: &Constraint,
    params: &SearchParams,
    coeffs: &EnergyCoeffs,
) -> Result<CoSearchResult, Error> {
    space.check()?;
    budget.validate()?;
    constraint.validate()?;
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut archive = Archive {
        cache: BTreeMap::new(),
        space,
        budget,
        constraint,
        coeffs,
        params,
    };

    // distinct initial genomes; small spaces may hold fewer than requested
    let mut init = Vec::new();
    let mut hashes = BTreeSet::new();
    for _ in 0..params.population * 20 {
        if init.len() == params.population {
            break;
        }
        let n = sample_random(space, &mut rng);
        if hashes.insert(n.genome_hash()) {
            init.push(n);
        }
    }
    let (evaluated, hits) = archive.fill(&init)?;
    let pool: Vec<Candidate> = init.iter().filter_map(|n| archive.get(n).cloned()).collect();
    let rejected = init.len() - pool.len();
    if pool.is_empty() {
        return Err(Error::EmptyPopulation);
    }
    let mut pop = select(pool, params.population, params.hardware_in_rank);
    let mut log = vec![stats(0, &pop, init.len(), evaluated, hits, rejected)];

    for it in 1..=params.iterations {
        let n_cross = params.expand_size / 2;
        let mut kids = Vec::with_capacity(params.expand_size);
        for i in 0..params.expand_size {
            let a = &pop[rng.random_range(0..pop.len())].0.net;
            let kid = if i < n_cross {
                let b = &pop[rng.random_range(0..pop.len())].0.net;
                crossover_with(a, b, params.crossover_prob, &mut rng)
            } else {
                mutate(space, a, params.mutate_prob, &mut rng)
            };
            kids.push(kid);
        }
        let (evaluated, hits) = archive.fill(&kids)?;
        let mut in_pool: BTreeSet<u64> = pop.iter().map(|c| c.0.hash).collect();
        let mut pool: Vec<Candidate> = pop.into_iter().map(|c| c.0).collect();
        let mut rejected = 0;
        for k in &kids {
            match archive.get(k) {
                Some(c) => {
                    if in_pool.insert(c.hash) {
                        pool.push(c.clone());
                    }
                }
                None => rejected += 1,
            }
        }
        pop = select(pool, params.population, params.hardware_in_rank);
        log.push(stats(it, &pop, kids.len(), evaluated, hits, rejected));
    }

    let final_pop: Vec<Candidate> = pop.into_iter().map(|c| c.0).collect();
    let mut entries = ranked_entries(final_pop, params.hardware_in_rank);
    entries.truncate(params.top_k);
    let all: Vec<Candidate> = archive.cache.into_values().flatten().collect();
    let pareto = pareto_front(&ranked_entries(all, params.hardware_in_rank));
    Ok(CoSearchResult { entries, log, pareto })
}

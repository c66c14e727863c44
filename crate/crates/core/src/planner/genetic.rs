use std::collections::HashMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::schedule::{budget_bits, budget_ranks, PrecisionSchedule, RankGroup};
use crate::error::{Error, Result};
use crate::numerics::Rng;

/// Bit widths of the searchable tiers, highest first.
pub const TIERS: [u8; 5] = [16, 8, 4, 3, 2];

/// Rank counts for the 16/8/4/3/2-bit tiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Allocation {
    pub counts: [usize; 5],
}

impl Allocation {
    pub fn new(counts: [usize; 5]) -> Self {
        Allocation { counts }
    }

    /// Per-tier rank counts of an existing schedule; groups at widths outside
    /// the tier set are rejected.
    pub fn from_schedule(schedule: &PrecisionSchedule) -> Result<Self> {
        let mut counts = [0; 5];
        for g in schedule.groups() {
            let t = TIERS
                .iter()
                .position(|&b| b == g.bits)
                .ok_or_else(|| Error::InvalidArgument(format!("{}-bit group has no allocation tier", g.bits)))?;
            counts[t] += g.width();
        }
        Ok(Allocation { counts })
    }

    pub fn total_ranks(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn payload_bits(&self, h_out: usize, h_in: usize) -> u64 {
        let span = (h_out + h_in) as u64;
        self.counts
            .iter()
            .zip(TIERS)
            .map(|(&c, k)| c as u64 * k as u64 * span)
            .sum()
    }

    /// Within the bit budget and no more ranks than the delta has.
    pub fn is_feasible(&self, alpha: f64, h_out: usize, h_in: usize) -> bool {
        self.payload_bits(h_out, h_in) as f64 <= budget_bits(alpha, h_out, h_in)
            && self.total_ranks() <= h_out.min(h_in)
    }

    /// Consecutive rank ranges in tier order; empty tiers are dropped.
    pub fn to_schedule(&self, alpha: f64) -> Result<PrecisionSchedule> {
        let mut begin = 0;
        let mut groups = Vec::new();
        for (&c, bits) in self.counts.iter().zip(TIERS) {
            if c > 0 {
                groups.push(RankGroup {
                    bits,
                    r_begin: begin,
                    r_end: begin + c,
                });
                begin += c;
            }
        }
        PrecisionSchedule::new(groups, alpha)
    }

    /// Shrinks the lowest-bit tiers first until the allocation is feasible.
    fn repair(&mut self, alpha: f64, h_out: usize, h_in: usize) {
        let budget = budget_bits(alpha, h_out, h_in);
        let span = (h_out + h_in) as f64;
        let max_ranks = h_out.min(h_in);
        for t in (0..TIERS.len()).rev() {
            let over_bits = self.payload_bits(h_out, h_in) as f64 - budget;
            let over_ranks = self.total_ranks().saturating_sub(max_ranks);
            if over_bits <= 0.0 && over_ranks == 0 {
                break;
            }
            let by_bits = if over_bits > 0.0 {
                (over_bits / (TIERS[t] as f64 * span)).ceil() as usize
            } else {
                0
            };
            let cut = by_bits.max(over_ranks).min(self.counts[t]);
            self.counts[t] -= cut;
        }
        debug_assert!(self.is_feasible(alpha, h_out, h_in));
    }
}

impl fmt::Display for Allocation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .counts
            .iter()
            .zip(TIERS)
            .map(|(c, k)| format!("{k}-bit:{c}"))
            .collect();
        write!(f, "{}", parts.join(" "))
    }
}

#[derive(Debug, Clone)]
pub struct GaParams {
    pub population: usize,
    pub generations: usize,
    pub tournament: usize,
    /// Probability that a child is mutated after crossover.
    pub mutation_rate: f64,
    /// Individuals placed in the initial population before random fill.
    pub seeds: Vec<Allocation>,
}

impl Default for GaParams {
    fn default() -> Self {
        GaParams {
            population: 32,
            generations: 40,
            tournament: 3,
            mutation_rate: 0.5,
            seeds: Vec::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SearchResult {
    pub best: Allocation,
    pub objective: f64,
    /// Best objective after initialization and after each generation.
    pub trace: Vec<f64>,
    pub evaluations: usize,
}

/// Minimizes `objective` over feasible allocations. Non-finite objective
/// values rank as `+inf`.
pub fn genetic_search<F>(
    objective: F,
    alpha: f64,
    h_out: usize,
    h_in: usize,
    params: &GaParams,
    rng: &mut Rng,
) -> Result<SearchResult>
where
    F: Fn(&Allocation) -> f64 + Sync,
{
    if !(alpha > 0.0 && alpha <= 1.0) || h_out == 0 || h_in == 0 {
        return Err(Error::InvalidArgument(format!(
            "search needs alpha in (0, 1] and positive dims, got alpha {alpha}, {h_out}x{h_in}"
        )));
    }
    let cheapest = *TIERS.last().unwrap();
    if budget_ranks(cheapest, alpha, h_out, h_in) == 0 {
        return Err(Error::BudgetExhausted {
            needed: cheapest as f64 * (h_out + h_in) as f64,
            budget: budget_bits(alpha, h_out, h_in),
        });
    }
    if params.population < 2 || params.tournament == 0 {
        return Err(Error::InvalidArgument(
            "population must be >= 2 and tournament >= 1".into(),
        ));
    }

    let mut cache: HashMap<Allocation, f64> = HashMap::new();
    let mut population: Vec<Allocation> = params
        .seeds
        .iter()
        .take(params.population)
        .map(|s| {
            let mut s = *s;
            s.repair(alpha, h_out, h_in);
            s
        })
        .collect();
    while population.len() < params.population {
        population.push(random_allocation(rng, alpha, h_out, h_in));
    }
    let mut scores = evaluate(&objective, &population, &mut cache);
    let mut trace = vec![best_index(&scores).1];

    for _ in 0..params.generations {
        let (elite, _) = best_index(&scores);
        let mut next = Vec::with_capacity(params.population);
        next.push(population[elite]);
        while next.len() < params.population {
            let a = &population[tournament(rng, &scores, params.tournament)];
            let b = &population[tournament(rng, &scores, params.tournament)];
            let mut child = Allocation::default();
            for t in 0..TIERS.len() {
                child.counts[t] = if rng.bernoulli(0.5) { a.counts[t] } else { b.counts[t] };
            }
            if rng.bernoulli(params.mutation_rate) {
                mutate(&mut child, rng, alpha, h_out, h_in);
            }
            child.repair(alpha, h_out, h_in);
            next.push(child);
        }
        population = next;
        scores = evaluate(&objective, &population, &mut cache);
        trace.push(best_index(&scores).1);
    }

    let (i, objective) = best_index(&scores);
    Ok(SearchResult {
        best: population[i],
        objective,
        trace,
        evaluations: cache.len(),
    })
}

fn evaluate<F>(objective: &F, population: &[Allocation], cache: &mut HashMap<Allocation, f64>) -> Vec<f64>
where
    F: Fn(&Allocation) -> f64 + Sync,
{
    let mut fresh: Vec<Allocation> = population.iter().filter(|a| !cache.contains_key(a)).copied().collect();
    fresh.sort_by_key(|a| a.counts);
    fresh.dedup();
    let values: Vec<f64> = fresh.par_iter().map(objective).collect();
    for (a, v) in fresh.into_iter().zip(values) {
        cache.insert(a, if v.is_finite() { v } else { f64::INFINITY });
    }
    population.iter().map(|a| cache[a]).collect()
}

/// Lowest score, earliest index on ties.
fn best_index(scores: &[f64]) -> (usize, f64) {
    let mut best = (0, scores[0]);
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s < best.1 {
            best = (i, s);
        }
    }
    best
}

fn tournament(rng: &mut Rng, scores: &[f64], size: usize) -> usize {
    let mut winner = rng.below(scores.len() as u64) as usize;
    for _ in 1..size {
        let c = rng.below(scores.len() as u64) as usize;
        if scores[c] < scores[winner] || (scores[c] == scores[winner] && c < winner) {
            winner = c;
        }
    }
    winner
}

/// Visits tiers in random order, giving each a uniform share of what is left.
fn random_allocation(rng: &mut Rng, alpha: f64, h_out: usize, h_in: usize) -> Allocation {
    let mut order = [0usize, 1, 2, 3, 4];
    for i in (1..order.len()).rev() {
        order.swap(i, rng.below(i as u64 + 1) as usize);
    }
    let span = (h_out + h_in) as f64;
    let mut left_bits = budget_bits(alpha, h_out, h_in);
    let mut left_ranks = h_out.min(h_in);
    let mut a = Allocation::default();
    for t in order {
        let cap = ((left_bits / (TIERS[t] as f64 * span)).floor() as usize).min(left_ranks);
        let c = rng.below(cap as u64 + 1) as usize;
        a.counts[t] = c;
        left_bits -= c as f64 * TIERS[t] as f64 * span;
        left_ranks -= c;
    }
    a
}

/// Adds or removes a random number of ranks on one tier.
fn mutate(a: &mut Allocation, rng: &mut Rng, alpha: f64, h_out: usize, h_in: usize) {
    let t = rng.below(TIERS.len() as u64) as usize;
    let reach = (budget_ranks(TIERS[t], alpha, h_out, h_in) / 4).max(1) as i64;
    let mut step = rng.range_inclusive(1, reach);
    if rng.bernoulli(0.5) {
        step = -step;
    }
    a.counts[t] = (a.counts[t] as i64 + step).max(0) as usize;
}

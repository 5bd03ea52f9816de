//! Budget chance constraints: `P{ sum_i x_ij s_i <= B_j } >= alpha_j` with
//! normal keyword costs `s_i ~ N(mu, sigma^2)`.
//!
//! [`simulate_chance`] estimates the probability by sampling costs,
//! [`analytic_chance`] evaluates it in closed form.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::{Assignment, ProblemInstance};
use crate::normal;

/// Default sample count for feasibility checks.
pub const DEFAULT_SAMPLES: u64 = 10_000;

const CHUNK: u64 = 1 << 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChanceCheckConfig {
    pub samples: u64,
    pub seed: u64,
}

impl Default for ChanceCheckConfig {
    fn default() -> Self {
        Self {
            samples: DEFAULT_SAMPLES,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChanceCheckResult {
    /// Fraction of samples whose total cost stayed within budget.
    pub alpha_hat: f64,
    pub satisfied: bool,
    pub standard_error: f64,
    pub hits: u64,
    pub samples: u64,
}

/// Sum of cost means and variances of the keywords placed in one adgroup.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ColumnLoad {
    pub mean: f64,
    pub var: f64,
}

impl ColumnLoad {
    pub fn of_column(inst: &ProblemInstance, column: &[bool], j: usize) -> Self {
        column
            .iter()
            .enumerate()
            .filter(|(_, &on)| on)
            .fold(Self::default(), |acc, (i, _)| acc.with(inst, i, j))
    }

    pub fn of_assignment(inst: &ProblemInstance, x: &Assignment, j: usize) -> Self {
        x.pairs()
            .filter(|&(_, jj)| jj == j)
            .fold(Self::default(), |acc, (i, _)| acc.with(inst, i, j))
    }

    /// Load after adding keyword `i` to adgroup `j`.
    pub fn with(self, inst: &ProblemInstance, i: usize, j: usize) -> Self {
        let c = inst.cost(i, j);
        Self {
            mean: self.mean + c.mean,
            var: self.var + c.variance(),
        }
    }
}

/// `Phi((B - mean) / sqrt(var))`, or a step function when the load is deterministic.
pub fn chance_from_load(load: ColumnLoad, budget: f64) -> f64 {
    if load.var <= 0.0 {
        if load.mean <= budget {
            1.0
        } else {
            0.0
        }
    } else {
        normal::cdf((budget - load.mean) / load.var.sqrt())
    }
}

/// Whether a load meets adgroup `j`'s chance level.
pub fn load_satisfies(inst: &ProblemInstance, load: ColumnLoad, j: usize) -> bool {
    let g = &inst.adgroups()[j];
    chance_from_load(load, g.budget) >= g.alpha
}

/// Closed-form probability that adgroup `j`'s total cost stays within budget.
pub fn analytic_chance(inst: &ProblemInstance, column: &[bool], j: usize) -> f64 {
    chance_from_load(ColumnLoad::of_column(inst, column, j), inst.adgroups()[j].budget)
}

/// Monte Carlo estimate of the same probability; deterministic given the seed
/// and independent of the rayon pool size.
pub fn simulate_chance(inst: &ProblemInstance, column: &[bool], j: usize, cfg: ChanceCheckConfig) -> ChanceCheckResult {
    let g = &inst.adgroups()[j];
    let samples = cfg.samples.max(1);
    let costs: Vec<(f64, f64)> = column
        .iter()
        .enumerate()
        .filter(|(_, &on)| on)
        .map(|(i, _)| {
            let c = inst.cost(i, j);
            (c.mean, c.sd)
        })
        .collect();

    let hits = if costs.is_empty() {
        samples
    } else {
        let chunks = samples.div_ceil(CHUNK);
        (0..chunks)
            .into_par_iter()
            .map(|chunk| {
                let len = CHUNK.min(samples - chunk * CHUNK);
                let mut rng = ChaCha8Rng::seed_from_u64(mix64(cfg.seed ^ mix64(chunk.wrapping_add(1))));
                let mut hits = 0u64;
                for _ in 0..len {
                    let total: f64 = costs
                        .iter()
                        .map(|&(mu, sd)| {
                            let z: f64 = StandardNormal.sample(&mut rng);
                            mu + sd * z
                        })
                        .sum();
                    if total <= g.budget {
                        hits += 1;
                    }
                }
                hits
            })
            .sum()
    };

    let alpha_hat = hits as f64 / samples as f64;
    ChanceCheckResult {
        alpha_hat,
        satisfied: alpha_hat >= g.alpha,
        standard_error: (alpha_hat * (1.0 - alpha_hat) / samples as f64).sqrt(),
        hits,
        samples,
    }
}

/// Seed of the sampling stream used for `(node, adgroup)` under a base seed.
pub fn derive_stream_seed(base: u64, node: u64, adgroup: usize) -> u64 {
    mix64(base ^ mix64(node.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ mix64(adgroup as u64 + 1)))
}

/// SplitMix64 finalizer.
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

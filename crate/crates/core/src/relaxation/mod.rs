//! Continuous relaxation of the grouping model with the chance constraints
//! replaced by their second-order-cone deterministic equivalent:
//!
//! ```text
//! max  sum e_ij x_ij
//! s.t. sum_i mu_ij x_ij + z_j sqrt(sum_i sigma_ij^2 x_ij^2) <= B_j     (z_j = Phi^-1(alpha_j))
//!      sum_ij w_ij x_ij^2 <= theta * sum_j B_j
//!      sum_j x_ij <= 1,  0 <= x_ij <= 1
//! ```
//!
//! Every constraint is non-decreasing in each `x_ij >= 0`, so a node is
//! feasible exactly when its fixed-to-one pairs alone are feasible, and pairs
//! with non-positive profit can be dropped without changing the optimum.

mod interior;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ProblemInstance;
use crate::normal;

pub use interior::InteriorOptions;

/// Default KKT tolerance of [`solve_relaxation`].
pub const DEFAULT_TOL: f64 = 1e-8;

/// Pairs forced to one or zero by a search node.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NodeFixings {
    fixed_one: BTreeSet<(usize, usize)>,
    fixed_zero: BTreeSet<(usize, usize)>,
}

impl NodeFixings {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn fix_one(&mut self, i: usize, j: usize) -> &mut Self {
        self.fixed_one.insert((i, j));
        self
    }

    pub fn fix_zero(&mut self, i: usize, j: usize) -> &mut Self {
        self.fixed_zero.insert((i, j));
        self
    }

    /// Fixes keyword `i` into adgroup `target` (or out of every adgroup).
    pub fn decide(&mut self, i: usize, target: Option<usize>, m: usize) -> &mut Self {
        for j in 0..m {
            if Some(j) == target {
                self.fixed_one.insert((i, j));
            } else {
                self.fixed_zero.insert((i, j));
            }
        }
        self
    }

    pub fn fixed_one(&self) -> &BTreeSet<(usize, usize)> {
        &self.fixed_one
    }

    pub fn fixed_zero(&self) -> &BTreeSet<(usize, usize)> {
        &self.fixed_zero
    }

    pub fn is_fixed_one(&self, i: usize, j: usize) -> bool {
        self.fixed_one.contains(&(i, j))
    }

    pub fn is_fixed_zero(&self, i: usize, j: usize) -> bool {
        self.fixed_zero.contains(&(i, j))
    }

    pub fn validate(&self, n: usize, m: usize) -> Result<()> {
        for &(i, j) in self.fixed_one.iter().chain(&self.fixed_zero) {
            if i >= n || j >= m {
                return Err(Error::Config(format!("fixing ({i}, {j}) outside {n}x{m}")));
            }
        }
        if let Some(p) = self.fixed_one.intersection(&self.fixed_zero).next() {
            return Err(Error::Config(format!("pair {p:?} fixed to both 0 and 1")));
        }
        let mut seen = vec![false; n];
        for &(i, _) in &self.fixed_one {
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::Config(format!("keyword {i} fixed into more than one adgroup")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RelaxStatus {
    Optimal,
    Infeasible,
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelaxationResult {
    /// `n x m`, entries in `[0, 1]`.
    pub x_cont: Vec<Vec<f64>>,
    /// Expected profit at `x_cont`.
    pub objective: f64,
    /// Certified upper bound on the node optimum: `objective` plus the
    /// Lagrangian duality gap plus `tol * max(1, |objective|)`. Infinite
    /// unless the status is optimal.
    pub upper_bound: f64,
    pub status: RelaxStatus,
    /// Certified duality gap relative to `max(1, |objective|)`.
    pub kkt_residual: f64,
    pub iterations: usize,
}

impl RelaxationResult {
    fn infeasible(n: usize, m: usize) -> Self {
        Self {
            x_cont: vec![vec![0.0; m]; n],
            objective: f64::NEG_INFINITY,
            upper_bound: f64::NEG_INFINITY,
            status: RelaxStatus::Infeasible,
            kkt_residual: 0.0,
            iterations: 0,
        }
    }
}

/// `sum_i x_i mu_ij + Phi^-1(alpha_j) sqrt(sum_i x_i^2 sigma_ij^2)` for a
/// (possibly fractional) column `x`.
pub fn deterministic_budget_lhs(inst: &ProblemInstance, column: &[f64], j: usize) -> f64 {
    let z = normal::inv_cdf(inst.adgroups()[j].alpha);
    let (mut mean, mut var) = (0.0, 0.0);
    for (i, &x) in column.iter().enumerate() {
        if x != 0.0 {
            let c = inst.cost(i, j);
            mean += x * c.mean;
            var += x * x * c.variance();
        }
    }
    mean + z * var.sqrt()
}

/// Absolute feasibility slack granted to a budget row.
pub(crate) fn budget_slack(budget: f64) -> f64 {
    1e-9 * budget.abs().max(1.0)
}

pub(crate) fn variance_slack(limit: f64) -> f64 {
    1e-9 * limit.abs().max(1.0)
}

/// Solves the relaxation of the subspace described by `fix`.
pub fn solve_relaxation(inst: &ProblemInstance, fix: &NodeFixings, tol: f64) -> Result<RelaxationResult> {
    solve_relaxation_with(inst, fix, tol, &InteriorOptions::default())
}

pub fn solve_relaxation_with(
    inst: &ProblemInstance,
    fix: &NodeFixings,
    tol: f64,
    opts: &InteriorOptions,
) -> Result<RelaxationResult> {
    let (n, m) = (inst.n(), inst.m());
    fix.validate(n, m)?;
    let tol = if tol > 0.0 { tol } else { DEFAULT_TOL };

    let z: Vec<f64> = inst.adgroups().iter().map(|g| normal::inv_cdf(g.alpha)).collect();

    // Contribution of the pairs fixed to one.
    let mut x_cont = vec![vec![0.0; m]; n];
    let mut row_taken = vec![false; n];
    let mut base_mean = vec![0.0; m];
    let mut base_var = vec![0.0; m];
    let mut base_risk = 0.0;
    let mut base_obj = 0.0;
    for &(i, j) in fix.fixed_one() {
        x_cont[i][j] = 1.0;
        row_taken[i] = true;
        let c = inst.cost(i, j);
        base_mean[j] += c.mean;
        base_var[j] += c.variance();
        base_risk += inst.variance(i, j);
        base_obj += inst.profit(i, j);
    }

    let limit = inst.variance_limit();
    let mut col_slack = vec![0.0; m];
    for j in 0..m {
        let budget = inst.adgroups()[j].budget;
        let lhs = base_mean[j] + z[j] * base_var[j].sqrt();
        if lhs > budget + budget_slack(budget) {
            return Ok(RelaxationResult::infeasible(n, m));
        }
        col_slack[j] = budget - lhs;
    }
    let risk_slack = limit - base_risk;
    if limit.is_finite() && risk_slack < -variance_slack(limit) {
        return Ok(RelaxationResult::infeasible(n, m));
    }

    // Free pairs: undecided, row still open, positive profit, and not blocked
    // by a constraint that is already tight.
    let mut free = Vec::new();
    for i in 0..n {
        if row_taken[i] {
            continue;
        }
        for j in 0..m {
            if fix.is_fixed_zero(i, j) || inst.profit(i, j) <= 0.0 {
                continue;
            }
            let c = inst.cost(i, j);
            let uses_budget = c.mean > 0.0 || (z[j] > 0.0 && c.sd > 0.0);
            if uses_budget && col_slack[j] <= budget_slack(inst.adgroups()[j].budget) {
                continue;
            }
            if limit.is_finite() && inst.variance(i, j) > 0.0 && risk_slack <= variance_slack(limit) {
                continue;
            }
            free.push((i, j));
        }
    }

    if free.is_empty() {
        return Ok(RelaxationResult {
            x_cont,
            objective: base_obj,
            upper_bound: base_obj + tol * base_obj.abs().max(1.0),
            status: RelaxStatus::Optimal,
            kkt_residual: 0.0,
            iterations: 0,
        });
    }

    let problem = interior::Problem::build(inst, &free, &z, &base_mean, &base_var, base_risk, limit);
    let sol = problem.solve(tol, base_obj, opts);
    for (k, &(i, j)) in free.iter().enumerate() {
        x_cont[i][j] = sol.y[k].clamp(0.0, 1.0);
    }
    let objective = base_obj + sol.objective;
    let status = if sol.converged {
        RelaxStatus::Optimal
    } else {
        RelaxStatus::IterationLimit
    };
    let upper_bound = match status {
        RelaxStatus::Optimal => objective + sol.gap_bound + tol * objective.abs().max(1.0),
        _ => f64::INFINITY,
    };
    Ok(RelaxationResult {
        x_cont,
        objective,
        upper_bound,
        status,
        kkt_residual: sol.kkt_residual,
        iterations: sol.iterations,
    })
}

//! Best-first branch and bound over keyword decisions.
//!
//! Keywords are decided in decreasing best-adgroup profit. A node at depth
//! `d` has fixed the first `d` keywords of that order, each to one adgroup or
//! to none, and branches the next keyword into at most `m + 1` children. Child
//! bounds come from [`solve_relaxation`]; each child is also completed
//! greedily to improve the incumbent.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chance::{self, ChanceCheckConfig, ChanceCheckResult, ColumnLoad};
use crate::model::{Assignment, ProblemInstance};
use crate::relaxation::{solve_relaxation, NodeFixings, RelaxStatus, DEFAULT_TOL};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveConfig {
    /// Stop after expanding this many nodes.
    pub node_limit: Option<u64>,
    /// Wall-clock limit. Runs cut short by it are not reproducible.
    pub time_limit: Option<Duration>,
    /// Seed of the final Monte Carlo audit.
    pub seed: u64,
    /// Samples per adgroup in the final audit; 0 skips it.
    pub audit_samples: u64,
    /// Relaxation tolerance.
    pub tol: f64,
    /// With pruning off every feasible node is expanded.
    pub pruning: bool,
    /// Keep a record of every evaluated node.
    pub record_trace: bool,
    /// Nodes expanded together; their children are evaluated in parallel.
    /// Fixed so the search does not depend on the thread count.
    pub batch: usize,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            node_limit: None,
            time_limit: None,
            seed: 0,
            audit_samples: 1_000_000,
            tol: DEFAULT_TOL,
            pruning: true,
            record_trace: false,
            batch: 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Exhausted,
    NodeLimit,
    TimeLimit,
}

/// One evaluated search node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: u64,
    pub depth: usize,
    pub fixings: NodeFixings,
    /// Relaxation upper bound of the node's subspace.
    pub sup: f64,
    pub status: RelaxStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub best: Assignment,
    pub best_value: f64,
    pub nodes_expanded: u64,
    pub nodes_evaluated: u64,
    pub proven_optimal: bool,
    /// `(largest open bound - best_value) / max(1, |best_value|)`, zero when proven.
    pub gap: f64,
    pub root_bound: f64,
    pub stop: StopReason,
    /// Incumbent value after each improvement.
    pub incumbent_history: Vec<f64>,
    /// Monte Carlo chance estimate per adgroup for `best`.
    pub audit: Vec<ChanceCheckResult>,
    pub trace: Vec<NodeRecord>,
}

/// Initial incumbent: adgroups by decreasing budget, and within each adgroup
/// the keywords by decreasing profit there. A keyword is placed when it is
/// still free, has positive profit, and both the adgroup's chance constraint
/// and the risk limit still hold with it.
pub fn greedy_incumbent(inst: &ProblemInstance) -> Assignment {
    let (n, m) = (inst.n(), inst.m());
    let mut x = Assignment::empty(n, m);
    let mut var = 0.0;
    for j in inst.adgroup_order() {
        let mut load = ColumnLoad::default();
        let mut order: Vec<usize> = (0..n).filter(|&i| inst.profit(i, j) > 0.0).collect();
        order.sort_by(|&a, &b| inst.profit(b, j).total_cmp(&inst.profit(a, j)).then(a.cmp(&b)));
        for i in order {
            if x.get(i).is_some() {
                continue;
            }
            let next = load.with(inst, i, j);
            if chance::load_satisfies(inst, next, j) && inst.variance_ok(var + inst.variance(i, j)) {
                x.set(i, Some(j));
                load = next;
                var += inst.variance(i, j);
            }
        }
    }
    x
}

/// Exact feasibility check, recomputed from scratch.
pub fn is_feasible(inst: &ProblemInstance, x: &Assignment) -> bool {
    (0..inst.m()).all(|j| chance::load_satisfies(inst, ColumnLoad::of_assignment(inst, x, j), j))
        && inst.variance_ok(x.pairs().map(|(i, j)| inst.variance(i, j)).sum())
}

struct Node {
    /// Per decided keyword (in search order): adgroup index, or `m` for none.
    decisions: Vec<u8>,
    loads: Vec<ColumnLoad>,
    var: f64,
    bound: f64,
    id: u64,
}

impl Node {
    fn depth(&self) -> usize {
        self.decisions.len()
    }
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    /// Larger bound first, then deeper, then older.
    fn cmp(&self, other: &Self) -> Ordering {
        self.bound
            .total_cmp(&other.bound)
            .then(self.depth().cmp(&other.depth()))
            .then(other.id.cmp(&self.id))
    }
}

struct Search<'a> {
    inst: &'a ProblemInstance,
    order: Vec<usize>,
    adgroups: Vec<usize>,
    cfg: &'a SolveConfig,
}

struct Evaluated {
    sup: f64,
    status: RelaxStatus,
    completion: Option<(f64, Vec<Option<usize>>)>,
}

impl Search<'_> {
    fn fixings(&self, decisions: &[u8]) -> NodeFixings {
        let m = self.inst.m();
        let mut fix = NodeFixings::new();
        for (d, &c) in decisions.iter().enumerate() {
            let c = usize::from(c);
            fix.decide(self.order[d], (c < m).then_some(c), m);
        }
        fix
    }

    fn fits(&self, loads: &[ColumnLoad], var: f64, i: usize, j: usize) -> bool {
        chance::load_satisfies(self.inst, loads[j].with(self.inst, i, j), j)
            && self.inst.variance_ok(var + self.inst.variance(i, j))
    }

    fn rows(&self, decisions: &[u8]) -> Vec<Option<usize>> {
        let m = self.inst.m();
        let mut rows = vec![None; self.inst.n()];
        for (d, &c) in decisions.iter().enumerate() {
            let c = usize::from(c);
            rows[self.order[d]] = (c < m).then_some(c);
        }
        rows
    }

    /// Greedy completion of a node: undecided keywords in search order, each
    /// tried in the adgroups it occupies most in the relaxation, then by budget.
    fn complete(&self, node: &Node, x_cont: &[Vec<f64>]) -> (f64, Vec<Option<usize>>) {
        let inst = self.inst;
        let mut rows = self.rows(&node.decisions);
        let mut loads = node.loads.clone();
        let mut var = node.var;
        for &i in &self.order[node.depth()..] {
            let mut cands: Vec<usize> = self
                .adgroups
                .iter()
                .copied()
                .filter(|&j| inst.profit(i, j) > 0.0)
                .collect();
            cands.sort_by(|&a, &b| x_cont[i][b].total_cmp(&x_cont[i][a]));
            for j in cands {
                if self.fits(&loads, var, i, j) {
                    rows[i] = Some(j);
                    loads[j] = loads[j].with(inst, i, j);
                    var += inst.variance(i, j);
                    break;
                }
            }
        }
        let value = rows
            .iter()
            .enumerate()
            .filter_map(|(i, r)| r.map(|j| inst.profit(i, j)))
            .sum();
        (value, rows)
    }

    fn children(&self, node: &Node, next_id: &mut u64) -> Vec<Node> {
        let inst = self.inst;
        let m = inst.m();
        let i = self.order[node.depth()];
        let mut out = Vec::with_capacity(m + 1);
        // Placing a keyword with non-positive profit is never better than
        // rejecting it, since every constraint only tightens.
        for &j in &self.adgroups {
            if inst.profit(i, j) > 0.0 && self.fits(&node.loads, node.var, i, j) {
                let mut decisions = node.decisions.clone();
                decisions.push(j as u8);
                let mut loads = node.loads.clone();
                loads[j] = loads[j].with(inst, i, j);
                out.push(Node {
                    decisions,
                    loads,
                    var: node.var + inst.variance(i, j),
                    bound: node.bound,
                    id: *next_id,
                });
                *next_id += 1;
            }
        }
        let mut decisions = node.decisions.clone();
        decisions.push(m as u8);
        out.push(Node {
            decisions,
            loads: node.loads.clone(),
            var: node.var,
            bound: node.bound,
            id: *next_id,
        });
        *next_id += 1;
        out
    }

    fn evaluate(&self, node: &Node) -> Evaluated {
        let fix = self.fixings(&node.decisions);
        // Fixings built here are always consistent.
        let r = solve_relaxation(self.inst, &fix, self.cfg.tol).expect("consistent fixings");
        let completion = (r.status != RelaxStatus::Infeasible).then(|| self.complete(node, &r.x_cont));
        Evaluated {
            sup: r.upper_bound,
            status: r.status,
            completion,
        }
    }
}

/// Runs the search.
pub fn solve(inst: &ProblemInstance, cfg: &SolveConfig) -> SolveReport {
    let started = Instant::now();
    let (n, m) = (inst.n(), inst.m());
    assert!(m < usize::from(u8::MAX), "too many adgroups");
    let search = Search {
        inst,
        order: inst.keyword_order(),
        adgroups: inst.adgroup_order(),
        cfg,
    };
    let prune_tol = 2.0 * cfg.tol;
    let prunable = |bound: f64, inf: f64| cfg.pruning && bound <= inf + prune_tol * inf.abs().max(1.0);

    let mut best = greedy_incumbent(inst);
    let mut best_value: f64 = best.pairs().map(|(i, j)| inst.profit(i, j)).sum();
    let mut history = vec![best_value];
    let mut trace = Vec::new();
    let mut nodes_expanded = 0u64;
    let mut nodes_evaluated = 0u64;
    let mut next_id = 0u64;

    let mut consider = |value: f64, rows: Vec<Option<usize>>, best: &mut Assignment, best_value: &mut f64| {
        if value > *best_value {
            let x = Assignment::from_rows(rows, m).expect("well-formed rows");
            if is_feasible(inst, &x) {
                *best = x;
                *best_value = value;
                history.push(value);
            }
        }
    };

    let root = Node {
        decisions: Vec::new(),
        loads: vec![ColumnLoad::default(); m],
        var: 0.0,
        bound: f64::INFINITY,
        id: next_id,
    };
    next_id += 1;
    let ev = search.evaluate(&root);
    nodes_evaluated += 1;
    if cfg.record_trace {
        trace.push(NodeRecord {
            id: root.id,
            depth: 0,
            fixings: NodeFixings::new(),
            sup: ev.sup,
            status: ev.status,
        });
    }
    if let Some((v, rows)) = ev.completion {
        consider(v, rows, &mut best, &mut best_value);
    }
    let root_bound = ev.sup;
    let mut frontier = BinaryHeap::new();
    if n > 0 {
        frontier.push(Node { bound: ev.sup, ..root });
    }

    let batch_size = cfg.batch.max(1);
    let stop = loop {
        if let Some(limit) = cfg.node_limit {
            if nodes_expanded >= limit {
                break StopReason::NodeLimit;
            }
        }
        if cfg.time_limit.is_some_and(|t| started.elapsed() >= t) {
            break StopReason::TimeLimit;
        }
        let room = cfg
            .node_limit
            .map_or(batch_size as u64, |l| (l - nodes_expanded).min(batch_size as u64));
        let mut batch = Vec::new();
        while (batch.len() as u64) < room {
            let Some(node) = frontier.pop() else { break };
            if node.depth() == n || prunable(node.bound, best_value) {
                continue;
            }
            batch.push(node);
        }
        if batch.is_empty() {
            break StopReason::Exhausted;
        }
        nodes_expanded += batch.len() as u64;

        let children: Vec<(f64, Node)> = batch
            .iter()
            .flat_map(|parent| {
                search
                    .children(parent, &mut next_id)
                    .into_iter()
                    .map(|c| (parent.bound, c))
            })
            .collect();
        let evaluated: Vec<Evaluated> = children.par_iter().map(|(_, c)| search.evaluate(c)).collect();

        for ((parent_bound, mut child), ev) in children.into_iter().zip(evaluated) {
            nodes_evaluated += 1;
            if cfg.record_trace {
                trace.push(NodeRecord {
                    id: child.id,
                    depth: child.depth(),
                    fixings: search.fixings(&child.decisions),
                    sup: ev.sup,
                    status: ev.status,
                });
            }
            if let Some((v, rows)) = ev.completion {
                consider(v, rows, &mut best, &mut best_value);
            }
            child.bound = match ev.status {
                RelaxStatus::Infeasible => continue,
                RelaxStatus::Optimal => ev.sup.min(parent_bound),
                RelaxStatus::IterationLimit => parent_bound,
            };
            if child.depth() == n || prunable(child.bound, best_value) {
                continue;
            }
            frontier.push(child);
        }
    };

    let open = frontier
        .iter()
        .filter(|node| !prunable(node.bound, best_value) && node.depth() < n)
        .map(|node| node.bound)
        .fold(f64::NEG_INFINITY, f64::max);
    // Open nodes that can no longer beat the incumbent do not count.
    let proven_optimal = open == f64::NEG_INFINITY;
    let gap = if proven_optimal {
        0.0
    } else {
        ((open - best_value) / best_value.abs().max(1.0)).max(0.0)
    };

    debug_assert!(is_feasible(inst, &best));
    let audit = if cfg.audit_samples > 0 {
        (0..m)
            .map(|j| {
                let cc = ChanceCheckConfig {
                    samples: cfg.audit_samples,
                    seed: chance::derive_stream_seed(cfg.seed, 0, j),
                };
                chance::simulate_chance(inst, &best.column(j), j, cc)
            })
            .collect()
    } else {
        Vec::new()
    };
    log::debug!(
        "bnb: {nodes_expanded} expanded, {nodes_evaluated} evaluated, value {best_value}, gap {gap}, {:?}",
        started.elapsed()
    );

    SolveReport {
        best,
        best_value,
        nodes_expanded,
        nodes_evaluated,
        proven_optimal,
        gap,
        root_bound,
        stop,
        incumbent_history: history,
        audit,
        trace,
    }
}

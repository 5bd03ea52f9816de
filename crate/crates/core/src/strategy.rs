//! Grouping strategies behind one trait, looked up by name.

use crate::baselines::{run_baseline, BaselineKind};
use crate::bnb::{self, SolveConfig, StopReason};
use crate::error::{Error, Result};
use crate::model::{Assignment, ProblemInstance};

/// How a strategy's answer came about.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Optimal,
    NodeLimit,
    TimeLimit,
    Heuristic,
}

impl RunStatus {
    pub fn name(self) -> &'static str {
        match self {
            RunStatus::Optimal => "optimal",
            RunStatus::NodeLimit => "node_limit",
            RunStatus::TimeLimit => "time_limit",
            RunStatus::Heuristic => "heuristic",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    /// Instance the assignment refers to, when the strategy reshaped the adgroups.
    pub instance: Option<ProblemInstance>,
    pub assignment: Assignment,
    pub status: RunStatus,
    /// Relative optimality gap; 0 for heuristics, which make no claim.
    pub gap: f64,
    pub nodes: u64,
}

pub trait GroupingStrategy: Send + Sync {
    fn name(&self) -> &'static str;
    fn run(&self, inst: &ProblemInstance, cfg: &SolveConfig) -> Result<Outcome>;
}

pub struct Bbkg;

impl GroupingStrategy for Bbkg {
    fn name(&self) -> &'static str {
        "bbkg"
    }

    fn run(&self, inst: &ProblemInstance, cfg: &SolveConfig) -> Result<Outcome> {
        let report = bnb::solve(inst, cfg);
        let status = match (report.proven_optimal, report.stop) {
            (true, _) => RunStatus::Optimal,
            (false, StopReason::TimeLimit) => RunStatus::TimeLimit,
            (false, _) => RunStatus::NodeLimit,
        };
        Ok(Outcome {
            instance: None,
            assignment: report.best,
            status,
            gap: report.gap,
            nodes: report.nodes_expanded,
        })
    }
}

pub struct Baseline(pub BaselineKind);

impl GroupingStrategy for Baseline {
    fn name(&self) -> &'static str {
        self.0.name()
    }

    fn run(&self, inst: &ProblemInstance, cfg: &SolveConfig) -> Result<Outcome> {
        let r = run_baseline(self.0, inst, cfg.seed)?;
        let merged = r.instance.m() != inst.m();
        Ok(Outcome {
            instance: merged.then_some(r.instance),
            assignment: r.assignment,
            status: RunStatus::Heuristic,
            gap: 0.0,
            nodes: 0,
        })
    }
}

pub struct StrategyRegistry {
    entries: Vec<Box<dyn GroupingStrategy>>,
}

impl Default for StrategyRegistry {
    /// The exact solver followed by the five baselines.
    fn default() -> Self {
        let mut r = Self::empty();
        r.register(Box::new(Bbkg));
        for kind in BaselineKind::ALL {
            r.register(Box::new(Baseline(kind)));
        }
        r
    }
}

impl StrategyRegistry {
    pub fn empty() -> Self {
        Self { entries: Vec::new() }
    }

    /// Adds a strategy, replacing any registered under the same name.
    pub fn register(&mut self, s: Box<dyn GroupingStrategy>) {
        match self.entries.iter().position(|e| e.name() == s.name()) {
            Some(k) => self.entries[k] = s,
            None => self.entries.push(s),
        }
    }

    pub fn get(&self, name: &str) -> Result<&dyn GroupingStrategy> {
        self.entries
            .iter()
            .find(|e| e.name().eq_ignore_ascii_case(name))
            .map(|e| e.as_ref())
            .ok_or_else(|| Error::UnknownStrategy(name.to_string()))
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|e| e.name()).collect()
    }
}

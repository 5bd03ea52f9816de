//! Budget sweeps: every approach at every budget level and risk tolerance.
//!
//! Cells run on a bounded thread pool and come back in
//! `(level, theta, approach)` order whatever order they finish in. Rows
//! carry no timings, so a sweep without time limits writes the same bytes
//! on every run and every worker count.

use std::io::Write;
use std::time::{Duration, Instant};

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bnb::SolveConfig;
use crate::error::{Error, Result};
use crate::model::{evaluate, AdGroupSpec, ProblemInstance, Roi};
use crate::strategy::StrategyRegistry;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    /// Total campaign budgets, strictly increasing.
    pub budget_levels: Vec<f64>,
    /// Share of each adgroup in the total budget; normalized internally.
    pub split_ratios: Vec<f64>,
    pub alpha: f64,
    pub thetas: Vec<f64>,
    pub approaches: Vec<String>,
    pub seed: u64,
    pub node_limit: Option<u64>,
    pub time_limit: Option<Duration>,
    /// Monte Carlo audit samples for exact-solver answers; 0 skips the audit.
    pub audit_samples: u64,
}

impl SweepConfig {
    fn with_levels(levels: Vec<f64>, ratios: Vec<f64>, node_limit: u64, seed: u64) -> Self {
        Self {
            budget_levels: levels,
            split_ratios: ratios,
            alpha: 0.95,
            thetas: vec![0.3, f64::INFINITY],
            approaches: StrategyRegistry::default()
                .names()
                .into_iter()
                .map(String::from)
                .collect(),
            seed,
            node_limit: Some(node_limit),
            time_limit: None,
            audit_samples: 0,
        }
    }

    /// 2,000 to 20,000 in steps of 2,000, split 2:1, at most 20,000 nodes per solve.
    pub fn dataset1(seed: u64) -> Self {
        Self::with_levels(
            (1..=10).map(|k| 2_000.0 * k as f64).collect(),
            vec![2.0, 1.0],
            20_000,
            seed,
        )
    }

    /// 10,000 to 70,000 in steps of 10,000, split 3:2:1, at most 3,000 nodes
    /// per solve. Node limits keep the sweep reproducible, unlike time limits.
    pub fn dataset2(seed: u64) -> Self {
        Self::with_levels(
            (1..=7).map(|k| 10_000.0 * k as f64).collect(),
            vec![3.0, 2.0, 1.0],
            3_000,
            seed,
        )
    }

    pub fn validate(&self, m: usize, registry: &StrategyRegistry) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.budget_levels.is_empty() {
            return bad("at least one budget level is required".into());
        }
        if let Some(b) = self.budget_levels.iter().find(|b| !(b.is_finite() && **b > 0.0)) {
            return bad(format!("budget level {b} must be > 0"));
        }
        if self.budget_levels.windows(2).any(|w| w[1] <= w[0]) {
            return bad("budget levels must be strictly increasing".into());
        }
        if self.split_ratios.len() != m {
            return bad(format!("{} split ratios for {m} adgroups", self.split_ratios.len()));
        }
        if let Some(r) = self.split_ratios.iter().find(|r| !(r.is_finite() && **r > 0.0)) {
            return bad(format!("split ratio {r} must be > 0"));
        }
        if !(0.5..1.0).contains(&self.alpha) {
            return bad(format!("alpha {} must lie in [0.5, 1)", self.alpha));
        }
        if self.thetas.is_empty() || self.thetas.iter().any(|t| t.is_nan() || *t <= 0.0) {
            return bad("risk tolerances must be > 0 (inf allowed)".into());
        }
        if self.approaches.is_empty() {
            return bad("at least one approach is required".into());
        }
        for a in &self.approaches {
            registry.get(a)?;
        }
        Ok(())
    }

    /// Adgroup budgets at one level.
    pub fn budgets(&self, level: f64) -> Vec<f64> {
        let total: f64 = self.split_ratios.iter().sum();
        self.split_ratios.iter().map(|r| level * r / total).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub level: f64,
    pub theta: f64,
    pub approach: String,
    pub status: String,
    pub expected_profit: Option<f64>,
    pub expected_cost: Option<f64>,
    pub roi: Option<f64>,
    /// `Var / sum(B)`.
    pub risk: Option<f64>,
    pub assigned: Option<usize>,
    pub gap: Option<f64>,
    pub nodes: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct SweepOutput {
    pub rows: Vec<SweepRow>,
    /// Wall time per row.
    pub elapsed: Vec<Duration>,
}

/// Runs every cell of the sweep on `workers` threads (all cores when `None`).
pub fn sweep(
    inst: &ProblemInstance,
    cfg: &SweepConfig,
    registry: &StrategyRegistry,
    workers: Option<usize>,
) -> Result<SweepOutput> {
    cfg.validate(inst.m(), registry)?;
    let mut cells = Vec::new();
    for &level in &cfg.budget_levels {
        for &theta in &cfg.thetas {
            for approach in &cfg.approaches {
                cells.push((level, theta, approach.as_str()));
            }
        }
    }
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        pool = pool.num_threads(w.max(1));
    }
    let pool = pool.build().map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let results: Vec<(SweepRow, Duration)> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(l, t, a)| run_cell(inst, cfg, registry, l, t, a))
            .collect()
    });
    let (rows, elapsed) = results.into_iter().unzip();
    Ok(SweepOutput { rows, elapsed })
}

fn run_cell(
    base: &ProblemInstance,
    cfg: &SweepConfig,
    registry: &StrategyRegistry,
    level: f64,
    theta: f64,
    approach: &str,
) -> (SweepRow, Duration) {
    let start = Instant::now();
    let mut row = SweepRow {
        level,
        theta,
        approach: approach.to_string(),
        status: String::new(),
        expected_profit: None,
        expected_cost: None,
        roi: None,
        risk: None,
        assigned: None,
        gap: None,
        nodes: None,
    };
    let result = (|| -> Result<()> {
        let adgroups = base
            .adgroups()
            .iter()
            .zip(cfg.budgets(level))
            .map(|(g, b)| AdGroupSpec::new(g.id.clone(), b, cfg.alpha))
            .collect();
        let inst = ProblemInstance::new(base.keywords().to_vec(), adgroups, theta)?;
        let solve = SolveConfig {
            node_limit: cfg.node_limit,
            time_limit: cfg.time_limit,
            seed: cfg.seed,
            audit_samples: cfg.audit_samples,
            ..SolveConfig::default()
        };
        let out = registry.get(approach)?.run(&inst, &solve)?;
        let eval = evaluate(out.instance.as_ref().unwrap_or(&inst), &out.assignment)?;
        row.status = out.status.name().to_string();
        row.expected_profit = Some(eval.expected_profit);
        row.expected_cost = Some(eval.expected_cost);
        row.roi = match eval.roi {
            Roi::Ratio(v) => Some(v),
            Roi::NoSpend => None,
        };
        row.risk = Some(eval.risk);
        row.assigned = Some(eval.assigned);
        row.gap = Some(out.gap);
        row.nodes = Some(out.nodes);
        Ok(())
    })();
    if let Err(e) = result {
        row.status = format!("error: {e}");
    }
    let elapsed = start.elapsed();
    info!(
        "sweep level {level} theta {theta} {approach}: {} in {:.2?}",
        row.status, elapsed
    );
    (row, elapsed)
}

pub const SWEEP_HEADER: [&str; 11] = [
    "level",
    "theta",
    "approach",
    "status",
    "expected_profit",
    "expected_cost",
    "roi",
    "risk",
    "assigned",
    "gap",
    "nodes",
];

/// Writes rows as CSV; undefined values (ROI without spend, failed cells) are empty.
pub fn write_sweep<W: Write>(w: W, rows: &[SweepRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e.to_string()));
    out.write_record(SWEEP_HEADER).map_err(csv_err)?;
    let opt = |v: Option<String>| v.unwrap_or_default();
    for r in rows {
        out.write_record([
            r.level.to_string(),
            r.theta.to_string(),
            r.approach.clone(),
            r.status.clone(),
            opt(r.expected_profit.map(|v| v.to_string())),
            opt(r.expected_cost.map(|v| v.to_string())),
            opt(r.roi.map(|v| v.to_string())),
            opt(r.risk.map(|v| v.to_string())),
            opt(r.assigned.map(|v| v.to_string())),
            opt(r.gap.map(|v| v.to_string())),
            opt(r.nodes.map(|v| v.to_string())),
        ])
        .map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

/// Everything needed to rerun a sweep, plus how long it took.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub config: SweepConfig,
    pub keywords: usize,
    pub adgroups: usize,
    pub workers: Option<usize>,
    pub inputs: Vec<String>,
    pub cells: usize,
    pub elapsed_s: f64,
    pub cell_elapsed_s: Vec<f64>,
}

impl Manifest {
    pub fn new(
        inst: &ProblemInstance,
        cfg: &SweepConfig,
        out: &SweepOutput,
        workers: Option<usize>,
        inputs: Vec<String>,
    ) -> Self {
        let cell_elapsed_s: Vec<f64> = out.elapsed.iter().map(Duration::as_secs_f64).collect();
        Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            config: cfg.clone(),
            keywords: inst.n(),
            adgroups: inst.m(),
            workers,
            inputs,
            cells: out.rows.len(),
            elapsed_s: cell_elapsed_s.iter().sum(),
            cell_elapsed_s,
        }
    }
}

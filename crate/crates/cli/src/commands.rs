use std::fs::File;
use std::io::BufWriter;
use std::path::Path;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use log::{info, warn};
use serde::Serialize;

use kwgroup::baselines::{run_baseline, BaselineKind};
use kwgroup::bnb::{self, SolveConfig};
use kwgroup::chance::{derive_stream_seed, simulate_chance, ChanceCheckConfig, ChanceCheckResult};
use kwgroup::data::{self, GeneratorSpec, RateOverflow};
use kwgroup::harness::{self, Manifest, SweepConfig};
use kwgroup::model::{evaluate, AdGroupSpec, Assignment, ProblemInstance, Roi};
use kwgroup::strategy::StrategyRegistry;

use crate::{AuditArgs, BaselineArgs, Cli, Command, EstimateArgs, GenArgs, Preset, ProblemArgs, SolveArgs, SweepArgs};

pub fn run(cli: Cli) -> Result<u8> {
    if let Some(w) = cli.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build_global()
            .context("configuring worker threads")?;
    }
    match cli.command {
        Command::Gen(a) => gen(a),
        Command::Estimate(a) => estimate(a),
        Command::Solve(a) => solve(a),
        Command::Baseline(a) => baseline(a),
        Command::Sweep(a) => sweep(a, cli.workers),
        Command::Audit(a) => audit(a),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    serde_json::to_writer_pretty(BufWriter::new(f), value)?;
    Ok(())
}

fn gen(a: GenArgs) -> Result<u8> {
    let mut spec = match a.preset {
        Preset::CampaignA => GeneratorSpec::campaign_a(a.n.unwrap_or(90), a.m.unwrap_or(2), a.seed),
        Preset::CampaignB => GeneratorSpec::campaign_b(a.n.unwrap_or(305), a.m.unwrap_or(3), a.seed),
        Preset::Dataset1 => GeneratorSpec::dataset1(a.seed),
        Preset::Dataset2 => GeneratorSpec::dataset2(a.seed),
    };
    if let Some(n) = a.n {
        spec.n = n;
    }
    if let Some(m) = a.m {
        spec.m = m;
        spec.products = m + 1;
    }
    spec.ctr_factoring = a.ctr_factoring;
    if a.cap_rates {
        spec.rate_overflow = RateOverflow::Cap;
    }
    let g = data::generate(&spec)?;
    data::save_instance(&a.out, &g.keywords)?;
    info!("wrote {} keywords to {}", g.keywords.len(), a.out.display());
    if let (Some(total), Some(path)) = (a.budget, a.adgroups_out) {
        let ratios = a.ratios.unwrap_or_else(|| vec![1.0; spec.m]);
        if ratios.len() != spec.m {
            bail!("{} ratios for {} adgroups", ratios.len(), spec.m);
        }
        let sum: f64 = ratios.iter().sum();
        let groups: Vec<AdGroupSpec> = ratios
            .iter()
            .enumerate()
            .map(|(j, r)| AdGroupSpec::new(format!("adgroup-{}", j + 1), total * r / sum, a.alpha))
            .collect();
        data::save_adgroups(&path, &groups)?;
    }
    println!("{}", serde_json::to_string_pretty(&g.summary)?);
    Ok(0)
}

fn estimate(a: EstimateArgs) -> Result<u8> {
    let rows = data::load_report(&a.report)?;
    let est = data::estimate_stats(&rows, a.m)?;
    if est.keywords.is_empty() {
        bail!("no keyword in {} has both clicks and conversions", a.report.display());
    }
    data::save_instance(&a.out, &est.keywords)?;
    info!(
        "estimated {} keywords ({} warnings)",
        est.keywords.len(),
        est.warnings.len()
    );
    Ok(0)
}

fn load_problem(p: &ProblemArgs) -> Result<ProblemInstance> {
    let keywords = data::load_instance(&p.instance)?;
    let mut groups = data::load_adgroups(&p.adgroups)?;
    if let Some(alpha) = p.alpha {
        for g in &mut groups {
            g.alpha = alpha;
        }
    }
    Ok(ProblemInstance::new(keywords, groups, p.theta)?)
}

#[derive(Serialize)]
struct EvaluationReport {
    expected_profit: f64,
    profit_variance: f64,
    expected_cost: f64,
    roi: Option<f64>,
    risk: f64,
    assigned: usize,
    analytic_chance: Vec<f64>,
}

impl EvaluationReport {
    fn new(inst: &ProblemInstance, x: &Assignment) -> Result<Self> {
        let e = evaluate(inst, x)?;
        Ok(Self {
            expected_profit: e.expected_profit,
            profit_variance: e.profit_variance,
            expected_cost: e.expected_cost,
            roi: match e.roi {
                Roi::Ratio(v) => Some(v),
                Roi::NoSpend => None,
            },
            risk: e.risk,
            assigned: e.assigned,
            analytic_chance: e.per_adgroup_chance,
        })
    }
}

#[derive(Serialize)]
struct SolveJson {
    status: &'static str,
    value: f64,
    proven_optimal: bool,
    gap: f64,
    root_bound: f64,
    nodes_expanded: u64,
    nodes_evaluated: u64,
    evaluation: EvaluationReport,
    monte_carlo: Vec<ChanceCheckResult>,
}

fn limits(node_limit: Option<u64>, time_limit_s: Option<f64>) -> Result<Option<Duration>> {
    if node_limit == Some(0) {
        bail!("--node-limit must be >= 1");
    }
    time_limit_s
        .map(|s| Duration::try_from_secs_f64(s).context("--time-limit-s must be a non-negative number"))
        .transpose()
}

fn solve(a: SolveArgs) -> Result<u8> {
    let inst = load_problem(&a.problem)?;
    let cfg = SolveConfig {
        node_limit: a.limits.node_limit,
        time_limit: limits(a.limits.node_limit, a.limits.time_limit_s)?,
        seed: a.problem.seed,
        audit_samples: a.problem.samples,
        ..SolveConfig::default()
    };
    let report = bnb::solve(&inst, &cfg);
    data::save_assignment(&a.assignment, &inst, &report.best)?;
    let status = if report.proven_optimal { "optimal" } else { "limit" };
    write_json(
        &a.report,
        &SolveJson {
            status,
            value: report.best_value,
            proven_optimal: report.proven_optimal,
            gap: report.gap,
            root_bound: report.root_bound,
            nodes_expanded: report.nodes_expanded,
            nodes_evaluated: report.nodes_evaluated,
            evaluation: EvaluationReport::new(&inst, &report.best)?,
            monte_carlo: report.audit,
        },
    )?;
    println!(
        "{status}: value {} ({} keywords assigned)",
        report.best_value,
        report.best.assigned_count()
    );
    if !report.proven_optimal && report.best.assigned_count() == 0 {
        warn!("solver limit reached without an incumbent");
        return Ok(2);
    }
    Ok(0)
}

#[derive(Serialize)]
struct BaselineJson {
    kind: &'static str,
    adgroups: Vec<AdGroupSpec>,
    evaluation: EvaluationReport,
}

fn baseline(a: BaselineArgs) -> Result<u8> {
    let kind: BaselineKind = a.kind.parse()?;
    let inst = load_problem(&a.problem)?;
    let r = run_baseline(kind, &inst, a.problem.seed)?;
    data::save_assignment(&a.assignment, &r.instance, &r.assignment)?;
    let evaluation = EvaluationReport::new(&r.instance, &r.assignment)?;
    println!(
        "{kind}: value {} ({} keywords assigned)",
        evaluation.expected_profit, evaluation.assigned
    );
    write_json(
        &a.report,
        &BaselineJson {
            kind: kind.name(),
            adgroups: r.instance.adgroups().to_vec(),
            evaluation,
        },
    )?;
    Ok(0)
}

fn sweep(a: SweepArgs, workers: Option<usize>) -> Result<u8> {
    let keywords = data::load_instance(&a.instance)?;
    let m = keywords[0].num_adgroups();
    let groups = match &a.adgroups {
        Some(p) => data::load_adgroups(p)?,
        None => (1..=m)
            .map(|j| AdGroupSpec::new(format!("adgroup-{j}"), 1.0, a.alpha))
            .collect(),
    };
    let inst = ProblemInstance::new(keywords, groups, f64::INFINITY)?;
    let mut cfg = match a.preset {
        Preset::CampaignA | Preset::Dataset1 => SweepConfig::dataset1(a.seed),
        Preset::CampaignB | Preset::Dataset2 => SweepConfig::dataset2(a.seed),
    };
    if let Some(levels) = a.levels {
        cfg.budget_levels = levels;
    }
    if let Some(ratios) = a.ratios {
        cfg.split_ratios = ratios;
    }
    if let Some(approaches) = a.approaches {
        cfg.approaches = approaches;
    }
    cfg.alpha = a.alpha;
    cfg.thetas = a.thetas;
    cfg.time_limit = limits(a.limits.node_limit, a.limits.time_limit_s)?;
    if a.limits.node_limit.is_some() {
        cfg.node_limit = a.limits.node_limit;
    }
    cfg.audit_samples = a.samples;

    let out = harness::sweep(&inst, &cfg, &StrategyRegistry::default(), workers)?;
    let f = File::create(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    harness::write_sweep(BufWriter::new(f), &out.rows)?;
    let mut inputs = vec![a.instance.display().to_string()];
    inputs.extend(a.adgroups.iter().map(|p| p.display().to_string()));
    write_json(&a.manifest, &Manifest::new(&inst, &cfg, &out, workers, inputs))?;
    let failed = out.rows.iter().filter(|r| r.status.starts_with("error")).count();
    if failed > 0 {
        warn!("{failed} sweep cells failed; see the status column");
    }
    println!("{} rows written to {}", out.rows.len(), a.out.display());
    Ok(0)
}

#[derive(Serialize)]
struct AuditJson {
    feasible: bool,
    chance_ok: Vec<bool>,
    risk_ok: bool,
    evaluation: EvaluationReport,
    monte_carlo: Vec<ChanceCheckResult>,
}

fn audit(a: AuditArgs) -> Result<u8> {
    let inst = load_problem(&a.problem)?;
    let x = data::load_assignment(&a.assignment, &inst)?;
    let evaluation = EvaluationReport::new(&inst, &x)?;
    let chance_ok: Vec<bool> = evaluation
        .analytic_chance
        .iter()
        .zip(inst.adgroups())
        .map(|(&p, g)| p >= g.alpha)
        .collect();
    let risk_ok = inst.variance_ok(evaluation.profit_variance);
    let monte_carlo = if a.problem.samples > 0 {
        (0..inst.m())
            .map(|j| {
                let cfg = ChanceCheckConfig {
                    samples: a.problem.samples,
                    seed: derive_stream_seed(a.problem.seed, 0, j),
                };
                simulate_chance(&inst, &x.column(j), j, cfg)
            })
            .collect()
    } else {
        Vec::new()
    };
    let feasible = bnb::is_feasible(&inst, &x);
    let report = AuditJson {
        feasible,
        chance_ok,
        risk_ok,
        evaluation,
        monte_carlo,
    };
    let text = serde_json::to_string_pretty(&report)?;
    match &a.report {
        Some(p) => std::fs::write(p, &text).with_context(|| format!("writing {}", p.display()))?,
        None => println!("{text}"),
    }
    if !feasible {
        eprintln!("assignment is infeasible");
        return Ok(1);
    }
    Ok(0)
}

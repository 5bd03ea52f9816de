//! `kwgroup`: keyword grouping from the command line.
//!
//! Exit codes: 0 success, 1 invalid input or an infeasible audit, 2 a solver
//! limit reached before any keyword could be placed.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "kwgroup", version, about = "Chance-constrained keyword grouping")]
pub struct Cli {
    /// Worker threads for node evaluation and sweep cells.
    #[arg(long, global = true, env = "KWGROUP_WORKERS")]
    pub workers: Option<usize>,

    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic keyword population.
    Gen(GenArgs),
    /// Estimate keyword statistics from a period report.
    Estimate(EstimateArgs),
    /// Solve to optimality with branch and bound.
    Solve(SolveArgs),
    /// Run one baseline grouping strategy.
    Baseline(BaselineArgs),
    /// Sweep budget levels, risk tolerances and approaches.
    Sweep(SweepArgs),
    /// Check an assignment against the instance constraints.
    Audit(AuditArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum Preset {
    /// Per-period statistics of the first campaign.
    CampaignA,
    /// Per-period statistics of the second campaign.
    CampaignB,
    /// 90 keywords, 2 adgroups, scaled to a campaign spend of 19,200.
    Dataset1,
    /// 305 keywords, 3 adgroups, scaled to a campaign spend of 66,786.
    Dataset2,
}

#[derive(Args, Debug)]
pub struct GenArgs {
    #[arg(long, value_enum, default_value = "dataset1")]
    pub preset: Preset,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Per-adgroup CTR multipliers, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub ctr_factoring: Option<Vec<f64>>,
    /// Cap rate spreads no rate can reach instead of rejecting them.
    #[arg(long)]
    pub cap_rates: bool,
    #[arg(long, short, default_value = "instance.csv")]
    pub out: PathBuf,
    /// Also write adgroups with this total budget.
    #[arg(long, requires = "adgroups_out")]
    pub budget: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub ratios: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0.95)]
    pub alpha: f64,
    #[arg(long)]
    pub adgroups_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EstimateArgs {
    #[arg(long)]
    pub report: PathBuf,
    /// Number of adgroup columns to replicate the statistics over.
    #[arg(long)]
    pub m: usize,
    #[arg(long, short, default_value = "instance.csv")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ProblemArgs {
    #[arg(long)]
    pub instance: PathBuf,
    #[arg(long)]
    pub adgroups: PathBuf,
    /// Risk tolerance; `inf` disables the risk limit.
    #[arg(long, default_value_t = f64::INFINITY)]
    pub theta: f64,
    /// Override the chance level of every adgroup.
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Monte Carlo samples per adgroup for the feasibility audit.
    #[arg(long, default_value_t = 1_000_000)]
    pub samples: u64,
}

#[derive(Args, Debug)]
pub struct LimitArgs {
    #[arg(long)]
    pub node_limit: Option<u64>,
    /// Wall-clock limit; results then depend on machine speed.
    #[arg(long)]
    pub time_limit_s: Option<f64>,
}

#[derive(Args, Debug)]
pub struct SolveArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[command(flatten)]
    pub limits: LimitArgs,
    #[arg(long, default_value = "assignment.csv")]
    pub assignment: PathBuf,
    #[arg(long, default_value = "report.json")]
    pub report: PathBuf,
}

#[derive(Args, Debug)]
pub struct BaselineArgs {
    #[arg(long)]
    pub kind: String,
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[arg(long, default_value = "assignment.csv")]
    pub assignment: PathBuf,
    #[arg(long, default_value = "report.json")]
    pub report: PathBuf,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[arg(long)]
    pub instance: PathBuf,
    /// Adgroup ids; budgets and alphas in it are ignored.
    #[arg(long)]
    pub adgroups: Option<PathBuf>,
    /// Level, ratio and node-limit defaults.
    #[arg(long, value_enum, default_value = "dataset1")]
    pub preset: Preset,
    #[arg(long, value_delimiter = ',')]
    pub levels: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub ratios: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0.95)]
    pub alpha: f64,
    #[arg(long, value_delimiter = ',', default_value = "0.3,inf")]
    pub thetas: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    pub approaches: Option<Vec<String>>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Monte Carlo audit samples for exact answers; 0 skips the audit.
    #[arg(long, default_value_t = 0)]
    pub samples: u64,
    #[command(flatten)]
    pub limits: LimitArgs,
    #[arg(long, short, default_value = "sweep.csv")]
    pub out: PathBuf,
    #[arg(long, default_value = "manifest.json")]
    pub manifest: PathBuf,
}

#[derive(Args, Debug)]
pub struct AuditArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[arg(long)]
    pub assignment: PathBuf,
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).init();
    match commands::run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

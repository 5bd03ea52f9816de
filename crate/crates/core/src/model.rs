//! Problem instance, assignment and the stochastic profit evaluation.
//!
//! Click-through rate `c` and conversion rate `r` of each keyword/adgroup pair
//! are independent random variables, and pairs are mutually independent, so
//! both the expected profit and its variance are sums of per-pair terms.

use serde::{Deserialize, Serialize};

use crate::chance::{self, ColumnLoad};
use crate::error::{Error, Result};

/// Mean and standard deviation of a scalar random quantity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments2 {
    pub mean: f64,
    pub sd: f64,
}

impl Moments2 {
    pub const fn new(mean: f64, sd: f64) -> Self {
        Self { mean, sd }
    }

    pub const fn fixed(value: f64) -> Self {
        Self { mean: value, sd: 0.0 }
    }

    pub fn variance(&self) -> f64 {
        self.sd * self.sd
    }

    /// Second raw moment `E[X^2]`.
    pub fn second_moment(&self) -> f64 {
        self.mean * self.mean + self.sd * self.sd
    }
}

/// Market parameters of one keyword, with one column per adgroup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeywordStat {
    pub id: String,
    pub demand: f64,
    pub value_per_sale: f64,
    pub ctr: Vec<Moments2>,
    pub cvr: Vec<Moments2>,
    pub cpc: Vec<f64>,
    pub cost: Vec<Moments2>,
    pub product_label: Option<String>,
    pub hierarchy_label: Option<String>,
}

impl KeywordStat {
    /// Builds a keyword whose statistics are identical in each of `m` adgroups
    /// and whose cost distribution is derived from demand, CTR and CPC.
    pub fn replicated(
        id: impl Into<String>,
        demand: f64,
        value_per_sale: f64,
        ctr: Moments2,
        cvr: Moments2,
        cpc: f64,
        m: usize,
    ) -> Self {
        let cost = derived_cost(demand, ctr, cpc);
        Self {
            id: id.into(),
            demand,
            value_per_sale,
            ctr: vec![ctr; m],
            cvr: vec![cvr; m],
            cpc: vec![cpc; m],
            cost: vec![cost; m],
            product_label: None,
            hierarchy_label: None,
        }
    }

    pub fn num_adgroups(&self) -> usize {
        self.ctr.len()
    }

    /// Expected profit `d (v E[c] E[r] - p E[c])` of placing this keyword in adgroup `j`.
    pub fn pair_profit(&self, j: usize) -> f64 {
        let c = self.ctr[j].mean;
        let r = self.cvr[j].mean;
        self.demand * (self.value_per_sale * c * r - self.cpc[j] * c)
    }

    /// Variance of `d c (r v - p)` in adgroup `j`.
    pub fn pair_variance(&self, j: usize) -> f64 {
        let (c, r) = (self.ctr[j], self.cvr[j]);
        let v = self.value_per_sale;
        let margin = v * r.mean - self.cpc[j];
        // Var(c X) = E[c^2] Var(X) + Var(c) E[X]^2 for independent c, X = r v - p.
        let per_impression = c.second_moment() * v * v * r.variance() + c.variance() * margin * margin;
        self.demand * self.demand * per_impression
    }

    /// Expected spend `d E[c] p` in adgroup `j`.
    pub fn pair_spend(&self, j: usize) -> f64 {
        self.demand * self.ctr[j].mean * self.cpc[j]
    }

    /// Conditions under which the normal approximation of the click count is
    /// questionable in adgroup `j`, if any.
    pub fn normality_warning(&self, j: usize) -> Option<String> {
        let c = self.ctr[j].mean;
        let clicks = self.demand * c;
        let misses = self.demand * (1.0 - c);
        if clicks < 10.0 || misses < 10.0 {
            Some(format!(
                "keyword `{}` adgroup {}: d*ctr = {:.3}, d*(1-ctr) = {:.3}; normal cost approximation is weak",
                self.id,
                j + 1,
                clicks,
                misses
            ))
        } else {
            None
        }
    }

    fn validate(&self, m: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidInstance(format!("keyword `{}`: {msg}", self.id)));
        for (name, len) in [
            ("ctr", self.ctr.len()),
            ("cvr", self.cvr.len()),
            ("cpc", self.cpc.len()),
            ("cost", self.cost.len()),
        ] {
            if len != m {
                return bad(format!("{name} has {len} columns, expected {m}"));
            }
        }
        if !(self.demand.is_finite() && self.demand >= 0.0) {
            return bad(format!("demand {} must be finite and >= 0", self.demand));
        }
        if !(self.value_per_sale.is_finite() && self.value_per_sale >= 0.0) {
            return bad(format!(
                "value per sale {} must be finite and >= 0",
                self.value_per_sale
            ));
        }
        for j in 0..m {
            for (name, mo) in [("ctr", self.ctr[j]), ("cvr", self.cvr[j])] {
                if !(0.0..=1.0).contains(&mo.mean) || !(mo.sd.is_finite() && mo.sd >= 0.0) {
                    return bad(format!(
                        "{name}[{}] = ({}, {}) outside rate domain",
                        j + 1,
                        mo.mean,
                        mo.sd
                    ));
                }
            }
            if !(self.cpc[j].is_finite() && self.cpc[j] >= 0.0) {
                return bad(format!("cpc[{}] = {} must be >= 0", j + 1, self.cpc[j]));
            }
            let cost = self.cost[j];
            if !(cost.mean.is_finite() && cost.mean >= 0.0 && cost.sd.is_finite() && cost.sd >= 0.0) {
                return bad(format!(
                    "cost[{}] = ({}, {}) must be non-negative",
                    j + 1,
                    cost.mean,
                    cost.sd
                ));
            }
        }
        Ok(())
    }
}

/// Cost moments implied by demand, CTR and CPC: `(d E[c] p, d p sd(c))`.
pub fn derived_cost(demand: f64, ctr: Moments2, cpc: f64) -> Moments2 {
    Moments2::new(demand * ctr.mean * cpc, demand * cpc * ctr.sd)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdGroupSpec {
    pub id: String,
    pub budget: f64,
    pub alpha: f64,
}

impl AdGroupSpec {
    pub fn new(id: impl Into<String>, budget: f64, alpha: f64) -> Self {
        Self {
            id: id.into(),
            budget,
            alpha,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.budget.is_finite() && self.budget > 0.0) {
            return Err(Error::InvalidInstance(format!(
                "adgroup `{}`: budget {} must be > 0",
                self.id, self.budget
            )));
        }
        if !(0.5..1.0).contains(&self.alpha) {
            return Err(Error::InvalidInstance(format!(
                "adgroup `{}`: alpha {} must lie in [0.5, 1)",
                self.id, self.alpha
            )));
        }
        Ok(())
    }
}

/// Keywords, adgroups and the risk tolerance. Per-pair moments are cached on
/// construction; the instance is immutable afterwards.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    keywords: Vec<KeywordStat>,
    adgroups: Vec<AdGroupSpec>,
    risk_tolerance: f64,
    profit: Vec<f64>,
    variance: Vec<f64>,
    spend: Vec<f64>,
}

impl ProblemInstance {
    /// `risk_tolerance` may be `f64::INFINITY` (risk-loving).
    pub fn new(keywords: Vec<KeywordStat>, adgroups: Vec<AdGroupSpec>, risk_tolerance: f64) -> Result<Self> {
        if keywords.is_empty() {
            return Err(Error::InvalidInstance("at least one keyword is required".into()));
        }
        if adgroups.is_empty() {
            return Err(Error::InvalidInstance("at least one adgroup is required".into()));
        }
        if risk_tolerance.is_nan() || risk_tolerance <= 0.0 {
            return Err(Error::InvalidInstance(format!(
                "risk tolerance {risk_tolerance} must be > 0 (or infinite)"
            )));
        }
        let m = adgroups.len();
        for g in &adgroups {
            g.validate()?;
        }
        for k in &keywords {
            k.validate(m)?;
        }
        let n = keywords.len();
        let mut profit = Vec::with_capacity(n * m);
        let mut variance = Vec::with_capacity(n * m);
        let mut spend = Vec::with_capacity(n * m);
        for k in &keywords {
            for j in 0..m {
                profit.push(k.pair_profit(j));
                variance.push(k.pair_variance(j));
                spend.push(k.pair_spend(j));
            }
        }
        Ok(Self {
            keywords,
            adgroups,
            risk_tolerance,
            profit,
            variance,
            spend,
        })
    }

    pub fn n(&self) -> usize {
        self.keywords.len()
    }

    pub fn m(&self) -> usize {
        self.adgroups.len()
    }

    pub fn keywords(&self) -> &[KeywordStat] {
        &self.keywords
    }

    pub fn adgroups(&self) -> &[AdGroupSpec] {
        &self.adgroups
    }

    pub fn risk_tolerance(&self) -> f64 {
        self.risk_tolerance
    }

    pub fn total_budget(&self) -> f64 {
        self.adgroups.iter().map(|g| g.budget).sum()
    }

    /// Upper limit on total profit variance, `theta * sum(B)`.
    pub fn variance_limit(&self) -> f64 {
        if self.risk_tolerance.is_infinite() {
            f64::INFINITY
        } else {
            self.risk_tolerance * self.total_budget()
        }
    }

    pub fn profit(&self, i: usize, j: usize) -> f64 {
        self.profit[i * self.m() + j]
    }

    pub fn variance(&self, i: usize, j: usize) -> f64 {
        self.variance[i * self.m() + j]
    }

    pub fn spend(&self, i: usize, j: usize) -> f64 {
        self.spend[i * self.m() + j]
    }

    pub fn cost(&self, i: usize, j: usize) -> Moments2 {
        self.keywords[i].cost[j]
    }

    /// Best expected profit of keyword `i` over all adgroups.
    pub fn best_profit(&self, i: usize) -> f64 {
        (0..self.m())
            .map(|j| self.profit(i, j))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Keyword indices by decreasing best expected profit (ties by index).
    pub fn keyword_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.n()).collect();
        order.sort_by(|&a, &b| self.best_profit(b).total_cmp(&self.best_profit(a)).then(a.cmp(&b)));
        order
    }

    /// Adgroup indices by decreasing budget (ties by index).
    pub fn adgroup_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.m()).collect();
        order.sort_by(|&a, &b| {
            self.adgroups[b]
                .budget
                .total_cmp(&self.adgroups[a].budget)
                .then(a.cmp(&b))
        });
        order
    }

    /// Same keywords with new adgroup budgets.
    pub fn with_budgets(&self, budgets: &[f64]) -> Result<Self> {
        if budgets.len() != self.m() {
            return Err(Error::Dimension {
                expected: self.m(),
                got: budgets.len(),
            });
        }
        let adgroups = self
            .adgroups
            .iter()
            .zip(budgets)
            .map(|(g, &b)| AdGroupSpec::new(g.id.clone(), b, g.alpha))
            .collect();
        Self::new(self.keywords.clone(), adgroups, self.risk_tolerance)
    }

    pub fn with_risk_tolerance(&self, theta: f64) -> Result<Self> {
        Self::new(self.keywords.clone(), self.adgroups.clone(), theta)
    }

    /// Whether a total profit variance respects the risk tolerance, `var / sum(B) <= theta`.
    pub fn variance_ok(&self, var: f64) -> bool {
        self.risk_tolerance.is_infinite() || var / self.total_budget() <= self.risk_tolerance
    }

    pub fn keyword_index(&self, id: &str) -> Option<usize> {
        self.keywords.iter().position(|k| k.id == id)
    }
}

/// A 0/1 keyword-to-adgroup matrix stored row-wise; each keyword sits in at
/// most one adgroup.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Assignment {
    rows: Vec<Option<usize>>,
    m: usize,
}

impl Assignment {
    pub fn empty(n: usize, m: usize) -> Self {
        Self { rows: vec![None; n], m }
    }

    pub fn from_rows(rows: Vec<Option<usize>>, m: usize) -> Result<Self> {
        if let Some(&j) = rows.iter().flatten().find(|&&j| j >= m) {
            return Err(Error::Dimension {
                expected: m,
                got: j + 1,
            });
        }
        Ok(Self { rows, m })
    }

    /// Validates a dense 0/1 matrix against the instance; a row with more
    /// than one 1 is rejected.
    pub fn from_matrix(inst: &ProblemInstance, x: &[Vec<f64>]) -> Result<Self> {
        if x.len() != inst.n() {
            return Err(Error::Dimension {
                expected: inst.n(),
                got: x.len(),
            });
        }
        let mut rows = Vec::with_capacity(x.len());
        for (i, row) in x.iter().enumerate() {
            if row.len() != inst.m() {
                return Err(Error::Dimension {
                    expected: inst.m(),
                    got: row.len(),
                });
            }
            let id = || inst.keywords()[i].id.clone();
            let mut chosen = None;
            let mut count = 0;
            for (j, &v) in row.iter().enumerate() {
                if v == 1.0 {
                    chosen = Some(j);
                    count += 1;
                } else if v != 0.0 {
                    return Err(Error::NonBinary {
                        keyword: id(),
                        value: v,
                    });
                }
            }
            if count > 1 {
                return Err(Error::RowSum { keyword: id(), count });
            }
            rows.push(chosen);
        }
        Ok(Self { rows, m: inst.m() })
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn rows(&self) -> &[Option<usize>] {
        &self.rows
    }

    pub fn get(&self, i: usize) -> Option<usize> {
        self.rows[i]
    }

    pub fn set(&mut self, i: usize, j: Option<usize>) {
        debug_assert!(j.is_none_or(|j| j < self.m));
        self.rows[i] = j;
    }

    pub fn is_set(&self, i: usize, j: usize) -> bool {
        self.rows[i] == Some(j)
    }

    pub fn assigned_count(&self) -> usize {
        self.rows.iter().flatten().count()
    }

    /// 0/1 indicator vector for adgroup `j`.
    pub fn column(&self, j: usize) -> Vec<bool> {
        self.rows.iter().map(|r| *r == Some(j)).collect()
    }

    pub fn to_matrix(&self) -> Vec<Vec<u8>> {
        self.rows
            .iter()
            .map(|r| (0..self.m).map(|j| u8::from(*r == Some(j))).collect())
            .collect()
    }

    /// Assigned `(keyword, adgroup)` pairs.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.rows.iter().enumerate().filter_map(|(i, r)| r.map(|j| (i, j)))
    }

    fn check(&self, inst: &ProblemInstance) -> Result<()> {
        if self.n() != inst.n() {
            return Err(Error::Dimension {
                expected: inst.n(),
                got: self.n(),
            });
        }
        if self.m != inst.m() {
            return Err(Error::Dimension {
                expected: inst.m(),
                got: self.m,
            });
        }
        Ok(())
    }
}

/// Return on investment; undefined when nothing is spent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Roi {
    Ratio(f64),
    NoSpend,
}

impl Roi {
    pub fn value(self) -> Option<f64> {
        match self {
            Roi::Ratio(v) => Some(v),
            Roi::NoSpend => None,
        }
    }
}

pub fn expected_profit(inst: &ProblemInstance, x: &Assignment) -> Result<f64> {
    x.check(inst)?;
    Ok(x.pairs().map(|(i, j)| inst.profit(i, j)).sum())
}

pub fn profit_variance(inst: &ProblemInstance, x: &Assignment) -> Result<f64> {
    x.check(inst)?;
    Ok(x.pairs().map(|(i, j)| inst.variance(i, j)).sum())
}

/// Expected total spend `sum x d E[c] p`.
pub fn expected_cost(inst: &ProblemInstance, x: &Assignment) -> Result<f64> {
    x.check(inst)?;
    Ok(x.pairs().map(|(i, j)| inst.spend(i, j)).sum())
}

pub fn roi(inst: &ProblemInstance, x: &Assignment) -> Result<Roi> {
    let cost = expected_cost(inst, x)?;
    if cost > 0.0 {
        Ok(Roi::Ratio(expected_profit(inst, x)? / cost))
    } else {
        Ok(Roi::NoSpend)
    }
}

/// `Var(z) / sum(B) <= theta`.
pub fn risk_feasible(inst: &ProblemInstance, x: &Assignment) -> Result<bool> {
    Ok(inst.variance_ok(profit_variance(inst, x)?))
}

/// Everything the experiments report about an assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub expected_profit: f64,
    pub profit_variance: f64,
    pub expected_cost: f64,
    pub roi: Roi,
    /// `Var / sum(B)`.
    pub risk: f64,
    pub per_adgroup_chance: Vec<f64>,
    pub assigned: usize,
}

pub fn evaluate(inst: &ProblemInstance, x: &Assignment) -> Result<Evaluation> {
    let expected_profit = expected_profit(inst, x)?;
    let profit_variance = profit_variance(inst, x)?;
    let expected_cost = expected_cost(inst, x)?;
    let roi = if expected_cost > 0.0 {
        Roi::Ratio(expected_profit / expected_cost)
    } else {
        Roi::NoSpend
    };
    let per_adgroup_chance = (0..inst.m())
        .map(|j| {
            let load = ColumnLoad::of_assignment(inst, x, j);
            chance::chance_from_load(load, inst.adgroups()[j].budget)
        })
        .collect();
    Ok(Evaluation {
        expected_profit,
        profit_variance,
        expected_cost,
        roi,
        risk: profit_variance / inst.total_budget(),
        per_adgroup_chance,
        assigned: x.assigned_count(),
    })
}

//! Synthetic keyword populations with prescribed summary statistics.
//!
//! Demand, value per sale and CPC are log-normal; CTR and CVR are Beta, both
//! moment matched. Demand and CTR are coupled through a Gaussian copula: with
//! independent draws the mean keyword cost `d c p` of a heavy-tailed
//! population lands far above typical reported values, because the
//! high-demand head terms are exactly the ones with low click-through. When a
//! cost target is given, the copula correlation is bisected on the realized
//! draws until the population's mean keyword cost equals it.

use log::{debug, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::beta::inv_beta_reg;

use super::estimate::moments;
use crate::error::{Error, Result};
use crate::model::{derived_cost, KeywordStat, Moments2};
use crate::normal;

/// What to do with a rate whose target sd no distribution on `[0, 1]` can
/// reach (`sd^2 >= mean (1 - mean)`).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RateOverflow {
    #[default]
    Reject,
    /// Shrink the sd to 99% of the attainable maximum and warn.
    Cap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub n: usize,
    pub m: usize,
    pub demand: Moments2,
    pub ctr: Moments2,
    pub cvr: Moments2,
    pub vps: Moments2,
    pub cpc: Moments2,
    /// Target mean keyword cost `d E[c] p` over the population.
    pub cost_mean: Option<f64>,
    /// Rescale demand so the expected spend of all keywords together equals
    /// this; turns per-period statistics into a campaign horizon.
    pub total_cost: Option<f64>,
    /// Per-adgroup CTR multipliers; keyword CTR in adgroup `j` is `c * f_j`.
    pub ctr_factoring: Option<Vec<f64>>,
    pub products: usize,
    pub topics_per_product: usize,
    pub rate_overflow: RateOverflow,
    pub seed: u64,
}

impl GeneratorSpec {
    /// Population like the first campaign dataset (per-period statistics).
    pub fn campaign_a(n: usize, m: usize, seed: u64) -> Self {
        Self {
            n,
            m,
            demand: Moments2::new(1211.90, 2296.07),
            ctr: Moments2::new(0.04, 0.15),
            cvr: Moments2::new(0.53, 0.37),
            vps: Moments2::new(16.31, 14.64),
            cpc: Moments2::new(0.30, 0.08),
            cost_mean: Some(2.13),
            total_cost: None,
            ctr_factoring: None,
            products: m + 1,
            topics_per_product: 2,
            rate_overflow: RateOverflow::Reject,
            seed,
        }
    }

    /// Population like the second campaign dataset (per-period statistics). Its
    /// CVR sd exceeds what a rate can have, so it is capped.
    pub fn campaign_b(n: usize, m: usize, seed: u64) -> Self {
        Self {
            demand: Moments2::new(289.57, 2279.9),
            ctr: Moments2::new(0.17, 0.23),
            cvr: Moments2::new(0.35, 0.57),
            vps: Moments2::new(21.90, 54.53),
            cpc: Moments2::new(1.15, 0.4),
            cost_mean: Some(8.95),
            rate_overflow: RateOverflow::Cap,
            ..Self::campaign_a(n, m, seed)
        }
    }

    /// 90 keywords, 2 adgroups, campaign spend 19,200 at full admission.
    pub fn dataset1(seed: u64) -> Self {
        Self {
            total_cost: Some(19_200.0),
            ..Self::campaign_a(90, 2, seed)
        }
    }

    /// 305 keywords, 3 adgroups, campaign spend 66,786 at full admission.
    pub fn dataset2(seed: u64) -> Self {
        Self {
            total_cost: Some(66_786.0),
            ..Self::campaign_b(305, 3, seed)
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.n == 0 || self.m == 0 {
            return bad(format!("n = {} and m = {} must both be >= 1", self.n, self.m));
        }
        for (name, t) in [("demand", self.demand), ("vps", self.vps), ("cpc", self.cpc)] {
            if !(t.mean.is_finite() && t.sd.is_finite() && t.mean >= 0.0 && t.sd >= 0.0) {
                return bad(format!("{name}: target ({}, {}) must be finite and >= 0", t.mean, t.sd));
            }
            if t.sd > 0.0 && t.mean == 0.0 {
                return bad(format!("{name}: a zero mean admits no spread"));
            }
        }
        for (name, t) in [("ctr", self.ctr), ("cvr", self.cvr)] {
            if !((0.0..=1.0).contains(&t.mean) && t.sd.is_finite() && t.sd >= 0.0) {
                return bad(format!("{name}: target ({}, {}) outside the rate domain", t.mean, t.sd));
            }
        }
        for (name, v) in [("cost_mean", self.cost_mean), ("total_cost", self.total_cost)] {
            if let Some(v) = v {
                if !(v.is_finite() && v > 0.0) {
                    return bad(format!("{name} {v} must be > 0"));
                }
            }
        }
        if let Some(f) = &self.ctr_factoring {
            if f.len() != self.m {
                return bad(format!("ctr_factoring has {} entries for {} adgroups", f.len(), self.m));
            }
            if let Some(v) = f.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
                return bad(format!("ctr multiplier {v} must be > 0"));
            }
        }
        if self.products == 0 || self.topics_per_product == 0 {
            return bad("products and topics_per_product must be >= 1".into());
        }
        Ok(())
    }
}

/// Sample moments of the generated population, keyword level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationSummary {
    pub demand: Moments2,
    pub ctr: Moments2,
    pub cvr: Moments2,
    pub vps: Moments2,
    pub cpc: Moments2,
    pub cost: Moments2,
    /// Copula correlation between demand and CTR.
    pub dependence: f64,
    /// Factor applied to demand to reach `total_cost` (1 without it).
    pub horizon: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedKeywords {
    pub keywords: Vec<KeywordStat>,
    pub summary: PopulationSummary,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy)]
enum Marginal {
    Fixed(f64),
    LogNormal { mu: f64, sigma: f64 },
    Beta { a: f64, b: f64 },
}

impl Marginal {
    fn log_normal(t: Moments2) -> Self {
        if t.sd == 0.0 {
            return Self::Fixed(t.mean);
        }
        let s2 = (1.0 + (t.sd / t.mean).powi(2)).ln();
        Self::LogNormal {
            mu: t.mean.ln() - 0.5 * s2,
            sigma: s2.sqrt(),
        }
    }

    fn rate(name: &str, t: Moments2, overflow: RateOverflow, warnings: &mut Vec<String>) -> Result<Self> {
        if t.sd == 0.0 {
            return Ok(Self::Fixed(t.mean));
        }
        let limit = (t.mean * (1.0 - t.mean)).sqrt();
        let mut sd = t.sd;
        if sd >= limit {
            let msg = format!(
                "{name}: sd {} is not attainable by a rate with mean {} (largest possible sd {limit:.4})",
                t.sd, t.mean
            );
            match overflow {
                RateOverflow::Reject => return Err(Error::Config(msg)),
                RateOverflow::Cap => {
                    if limit == 0.0 {
                        return Ok(Self::Fixed(t.mean));
                    }
                    sd = 0.99 * limit;
                    let msg = format!("{msg}; capped at {sd:.4}");
                    warn!("{msg}");
                    warnings.push(msg);
                }
            }
        }
        let k = t.mean * (1.0 - t.mean) / (sd * sd) - 1.0;
        Ok(Self::Beta {
            a: t.mean * k,
            b: (1.0 - t.mean) * k,
        })
    }

    /// Value at standard normal score `z`.
    fn at(self, z: f64) -> f64 {
        match self {
            Self::Fixed(v) => v,
            Self::LogNormal { mu, sigma } => (mu + sigma * z).exp(),
            Self::Beta { a, b } => {
                let u = normal::cdf(z);
                if u <= 0.0 {
                    0.0
                } else if u >= 1.0 {
                    1.0
                } else {
                    inv_beta_reg(a, b, u)
                }
            }
        }
    }
}

struct Scores {
    demand: f64,
    ctr: f64,
    cvr: f64,
    vps: f64,
    cpc: f64,
    product: usize,
    topic: usize,
}

/// Draws a keyword population. Deterministic in `spec.seed`.
pub fn generate(spec: &GeneratorSpec) -> Result<GeneratedKeywords> {
    spec.validate()?;
    let mut warnings = Vec::new();
    let demand = Marginal::log_normal(spec.demand);
    let vps = Marginal::log_normal(spec.vps);
    let cpc = Marginal::log_normal(spec.cpc);
    let ctr = Marginal::rate("ctr", spec.ctr, spec.rate_overflow, &mut warnings)?;
    let cvr = Marginal::rate("cvr", spec.cvr, spec.rate_overflow, &mut warnings)?;

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let scores: Vec<Scores> = (0..spec.n)
        .map(|_| Scores {
            demand: rng.sample(StandardNormal),
            ctr: rng.sample(StandardNormal),
            cvr: rng.sample(StandardNormal),
            vps: rng.sample(StandardNormal),
            cpc: rng.sample(StandardNormal),
            product: rng.random_range(0..spec.products),
            topic: rng.random_range(0..spec.topics_per_product),
        })
        .collect();

    let d: Vec<f64> = scores.iter().map(|s| demand.at(s.demand)).collect();
    let p: Vec<f64> = scores.iter().map(|s| cpc.at(s.cpc)).collect();
    let ctr_at = |rho: f64| -> Vec<f64> {
        let tail = (1.0 - rho * rho).max(0.0).sqrt();
        scores.iter().map(|s| ctr.at(rho * s.demand + tail * s.ctr)).collect()
    };
    let mean_cost = |c: &[f64]| (0..spec.n).map(|i| d[i] * c[i] * p[i]).sum::<f64>() / spec.n as f64;

    let coupled = !matches!(demand, Marginal::Fixed(_)) && !matches!(ctr, Marginal::Fixed(_));
    let rho = match spec.cost_mean {
        Some(target) if coupled => {
            let f = |rho: f64| mean_cost(&ctr_at(rho)) - target;
            let (mut lo, mut hi) = (-1.0, 1.0);
            if f(lo) >= 0.0 || f(hi) <= 0.0 {
                let r = if f(lo) >= 0.0 { lo } else { hi };
                let msg = format!("mean keyword cost {target} is out of reach; demand/CTR correlation set to {r}");
                warn!("{msg}");
                warnings.push(msg);
                r
            } else {
                for _ in 0..80 {
                    let mid = 0.5 * (lo + hi);
                    if f(mid) < 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                0.5 * (lo + hi)
            }
        }
        _ => 0.0,
    };
    let c = ctr_at(rho);

    let horizon = match spec.total_cost {
        Some(total) => {
            let spend = mean_cost(&c) * spec.n as f64;
            if spend <= 0.0 {
                return Err(Error::Config("population has no expected spend to rescale".into()));
            }
            total / spend
        }
        None => 1.0,
    };

    let width = spec.n.to_string().len();
    let mut keywords = Vec::with_capacity(spec.n);
    let mut weak = 0;
    for (i, s) in scores.iter().enumerate() {
        let demand = d[i] * horizon;
        let r = cvr.at(s.cvr);
        let mut k = KeywordStat {
            id: format!("kw{:0width$}", i + 1),
            demand,
            value_per_sale: vps.at(s.vps),
            ctr: Vec::with_capacity(spec.m),
            cvr: Vec::with_capacity(spec.m),
            cpc: vec![p[i]; spec.m],
            cost: Vec::with_capacity(spec.m),
            product_label: Some(format!("product-{}", s.product + 1)),
            hierarchy_label: Some(format!("product-{}/topic-{}", s.product + 1, s.topic + 1)),
        };
        for j in 0..spec.m {
            let f = spec.ctr_factoring.as_ref().map_or(1.0, |f| f[j]);
            let cj = (c[i] * f).min(1.0);
            // Binomial sampling error of the realized rates.
            let ctr_j = Moments2::new(cj, (cj * (1.0 - cj) / demand.max(1.0)).sqrt());
            let cvr_j = Moments2::new(r, (r * (1.0 - r) / (demand * cj).max(1.0)).sqrt());
            k.cost.push(derived_cost(demand, ctr_j, p[i]));
            k.ctr.push(ctr_j);
            k.cvr.push(cvr_j);
        }
        for j in 0..spec.m {
            if let Some(msg) = k.normality_warning(j) {
                debug!("{msg}");
                weak += 1;
            }
        }
        keywords.push(k);
    }
    if weak > 0 {
        let msg = format!(
            "{weak} of {} keyword/adgroup pairs have fewer than 10 expected clicks or misses; \
             their normal cost approximation is weak",
            spec.n * spec.m
        );
        warn!("{msg}");
        warnings.push(msg);
    }

    let col = |g: &dyn Fn(&KeywordStat) -> f64| moments(&keywords.iter().map(g).collect::<Vec<_>>());
    let summary = PopulationSummary {
        demand: col(&|k| k.demand),
        ctr: col(&|k| k.ctr[0].mean),
        cvr: col(&|k| k.cvr[0].mean),
        vps: col(&|k| k.value_per_sale),
        cpc: col(&|k| k.cpc[0]),
        cost: col(&|k| k.cost[0].mean),
        dependence: rho,
        horizon,
    };
    Ok(GeneratedKeywords {
        keywords,
        summary,
        warnings,
    })
}

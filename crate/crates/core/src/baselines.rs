//! Comparison grouping strategies.
//!
//! Every baseline first partitions the keywords into groups and maps the
//! groups onto adgroups. Within an adgroup, profitable keywords are then
//! admitted in decreasing expected profit until the next one would break the
//! adgroup's chance constraint. Only [`BaselineKind::Profit`] also respects
//! the risk limit.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bnb::greedy_incumbent;
use crate::chance::{self, ColumnLoad};
use crate::error::{Error, Result};
use crate::model::{AdGroupSpec, Assignment, KeywordStat, ProblemInstance};

const KMEANS_ITERATIONS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineKind {
    /// All keywords in one adgroup holding the whole budget.
    Nogrouping,
    /// One group per product label.
    Product,
    /// k-means over keyword metrics, one cluster per adgroup.
    Kcluster,
    /// One group per hierarchy label.
    Hierarchy,
    /// Greedy fill by expected profit under chance and risk constraints.
    Profit,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 5] = [
        BaselineKind::Nogrouping,
        BaselineKind::Product,
        BaselineKind::Kcluster,
        BaselineKind::Hierarchy,
        BaselineKind::Profit,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BaselineKind::Nogrouping => "nogrouping",
            BaselineKind::Product => "product",
            BaselineKind::Kcluster => "kcluster",
            BaselineKind::Hierarchy => "hierarchy",
            BaselineKind::Profit => "profit",
        }
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::UnknownStrategy(s.to_string()))
    }
}

/// A baseline assignment and the instance it refers to. That instance differs
/// from the input only for [`BaselineKind::Nogrouping`], which merges the adgroups.
#[derive(Debug, Clone)]
pub struct BaselineResult {
    pub instance: ProblemInstance,
    pub assignment: Assignment,
}

pub fn run_baseline(kind: BaselineKind, inst: &ProblemInstance, seed: u64) -> Result<BaselineResult> {
    let (instance, groups) = match kind {
        BaselineKind::Profit => {
            return Ok(BaselineResult {
                assignment: greedy_incumbent(inst),
                instance: inst.clone(),
            })
        }
        BaselineKind::Nogrouping => {
            let merged = merge_adgroups(inst)?;
            let groups = vec![0; inst.n()];
            (merged, groups)
        }
        BaselineKind::Product => (inst.clone(), label_groups(inst, "product", |k| &k.product_label)?),
        BaselineKind::Hierarchy => (inst.clone(), label_groups(inst, "hierarchy", |k| &k.hierarchy_label)?),
        BaselineKind::Kcluster => {
            let features: Vec<Vec<f64>> = (0..inst.n()).map(|i| keyword_features(inst, i)).collect();
            let k = inst.m().min(inst.n());
            let labels = kmeans(&features, k, seed)?;
            (inst.clone(), map_groups(inst, &labels))
        }
    };
    let assignment = admit_prefix(&instance, &groups);
    Ok(BaselineResult { instance, assignment })
}

/// Single adgroup with the total budget and the alpha of the largest adgroup.
/// Each keyword keeps the statistics of its most profitable adgroup.
pub fn merge_adgroups(inst: &ProblemInstance) -> Result<ProblemInstance> {
    let lead = &inst.adgroups()[inst.adgroup_order()[0]];
    let keywords = inst
        .keywords()
        .iter()
        .enumerate()
        .map(|(i, k)| {
            let j = best_column(inst, i);
            KeywordStat {
                ctr: vec![k.ctr[j]],
                cvr: vec![k.cvr[j]],
                cpc: vec![k.cpc[j]],
                cost: vec![k.cost[j]],
                ..k.clone()
            }
        })
        .collect();
    ProblemInstance::new(
        keywords,
        vec![AdGroupSpec::new("merged", inst.total_budget(), lead.alpha)],
        inst.risk_tolerance(),
    )
}

fn best_column(inst: &ProblemInstance, i: usize) -> usize {
    (0..inst.m()).fold(0, |best, j| {
        if inst.profit(i, j) > inst.profit(i, best) {
            j
        } else {
            best
        }
    })
}

/// Impressions, CTR, CPC, CVR and value per sale in the keyword's best adgroup.
fn keyword_features(inst: &ProblemInstance, i: usize) -> Vec<f64> {
    let k = &inst.keywords()[i];
    let j = best_column(inst, i);
    vec![k.demand, k.ctr[j].mean, k.cpc[j], k.cvr[j].mean, k.value_per_sale]
}

fn label_groups(
    inst: &ProblemInstance,
    label: &'static str,
    get: impl Fn(&KeywordStat) -> &Option<String>,
) -> Result<Vec<usize>> {
    let mut ids: BTreeMap<&str, usize> = BTreeMap::new();
    let mut raw = Vec::with_capacity(inst.n());
    for k in inst.keywords() {
        let l = get(k).as_deref().ok_or_else(|| Error::MissingLabel {
            label,
            keyword: k.id.clone(),
        })?;
        let next = ids.len();
        raw.push(*ids.entry(l).or_insert(next));
    }
    Ok(map_groups(inst, &raw))
}

/// Maps group labels onto adgroups: groups ranked by total best-adgroup
/// profit are dealt round-robin over adgroups ranked by budget.
fn map_groups(inst: &ProblemInstance, labels: &[usize]) -> Vec<usize> {
    let count = labels.iter().max().map_or(0, |&l| l + 1);
    let mut total = vec![0.0; count];
    for (i, &l) in labels.iter().enumerate() {
        total[l] += inst.best_profit(i).max(0.0);
    }
    let mut rank: Vec<usize> = (0..count).collect();
    rank.sort_by(|&a, &b| total[b].total_cmp(&total[a]).then(a.cmp(&b)));
    let adgroups = inst.adgroup_order();
    let mut target = vec![0; count];
    for (r, &g) in rank.iter().enumerate() {
        target[g] = adgroups[r % adgroups.len()];
    }
    labels.iter().map(|&l| target[l]).collect()
}

/// Per adgroup, admits its profitable keywords in decreasing profit and
/// stops at the first one that would break the chance constraint.
fn admit_prefix(inst: &ProblemInstance, groups: &[usize]) -> Assignment {
    let mut x = Assignment::empty(inst.n(), inst.m());
    for j in 0..inst.m() {
        let mut members: Vec<usize> = (0..inst.n())
            .filter(|&i| groups[i] == j && inst.profit(i, j) > 0.0)
            .collect();
        members.sort_by(|&a, &b| inst.profit(b, j).total_cmp(&inst.profit(a, j)).then(a.cmp(&b)));
        let mut load = ColumnLoad::default();
        for i in members {
            let next = load.with(inst, i, j);
            if !chance::load_satisfies(inst, next, j) {
                break;
            }
            x.set(i, Some(j));
            load = next;
        }
    }
    x
}

/// Lloyd's k-means on z-scored features with k-means++ seeding. Stops when no
/// label changes or after 100 iterations. Deterministic in `seed`.
pub fn kmeans(features: &[Vec<f64>], k: usize, seed: u64) -> Result<Vec<usize>> {
    let n = features.len();
    if k == 0 || k > n {
        return Err(Error::Config(format!(
            "k-means needs 1 <= k <= n, got k = {k}, n = {n}"
        )));
    }
    let f = features[0].len();
    if features.iter().any(|row| row.len() != f) {
        return Err(Error::Config("k-means feature rows differ in length".into()));
    }
    let points = standardize(features);
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = vec![points[rng.random_range(0..n)].clone()];
    let mut nearest: Vec<f64> = points.iter().map(|p| dist(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random_range(0.0..total);
            let mut pick = n - 1;
            for (i, &d) in nearest.iter().enumerate() {
                if u < d {
                    pick = i;
                    break;
                }
                u -= d;
            }
            pick
        } else {
            // All points coincide with a center already.
            rng.random_range(0..n)
        };
        centers.push(points[pick].clone());
        for (i, p) in points.iter().enumerate() {
            nearest[i] = nearest[i].min(dist(p, &centers[centers.len() - 1]));
        }
    }

    let assign = |centers: &[Vec<f64>]| -> Vec<usize> {
        points
            .iter()
            .map(|p| {
                (0..k).fold(0, |best, c| {
                    if dist(p, &centers[c]) < dist(p, &centers[best]) {
                        c
                    } else {
                        best
                    }
                })
            })
            .collect()
    };
    let mut labels = assign(&centers);
    for _ in 0..KMEANS_ITERATIONS {
        let mut sums = vec![vec![0.0; f]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in points.iter().zip(&labels) {
            counts[l] += 1;
            for (s, v) in sums[l].iter_mut().zip(p) {
                *s += v;
            }
        }
        for c in 0..k {
            // An empty cluster keeps its previous center.
            if counts[c] > 0 {
                centers[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        let next = assign(&centers);
        if next == labels {
            break;
        }
        labels = next;
    }
    Ok(labels)
}

fn standardize(features: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = features.len() as f64;
    let f = features[0].len();
    let mut out = features.to_vec();
    for c in 0..f {
        let mean = features.iter().map(|r| r[c]).sum::<f64>() / n;
        let sd = (features.iter().map(|r| (r[c] - mean).powi(2)).sum::<f64>() / n).sqrt();
        for row in &mut out {
            row[c] = if sd > 0.0 { (row[c] - mean) / sd } else { 0.0 };
        }
    }
    out
}

#[cfg(test)]
mod tests;

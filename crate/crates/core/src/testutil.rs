//! Random small instances and an exhaustive-enumeration oracle for unit tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::chance::analytic_chance;
use crate::model::{AdGroupSpec, Assignment, KeywordStat, Moments2, ProblemInstance};
use crate::relaxation::NodeFixings;

pub(crate) fn random_instance(seed: u64, n: usize, m: usize, theta: f64) -> ProblemInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keywords = Vec::with_capacity(n);
    for i in 0..n {
        let demand = rng.random_range(50.0..2000.0);
        let ctr_mean = rng.random_range(0.01..0.2);
        let ctr = Moments2::new(ctr_mean, ctr_mean * rng.random_range(0.05..0.5));
        let cvr_mean = rng.random_range(0.05..0.6);
        let cvr = Moments2::new(cvr_mean, cvr_mean * rng.random_range(0.05..0.5));
        let vps = rng.random_range(1.0..30.0);
        let cpc = rng.random_range(0.1..1.5);
        let mut k = KeywordStat::replicated(format!("kw{i}"), demand, vps, ctr, cvr, cpc, m);
        // Perturb the per-adgroup columns so adgroups differ.
        for j in 1..m {
            let f = rng.random_range(0.7..1.3);
            k.ctr[j] = Moments2::new((ctr.mean * f).min(1.0), ctr.sd * f);
            k.cost[j] = crate::model::derived_cost(demand, k.ctr[j], cpc);
        }
        keywords.push(k);
    }
    let total_mean: f64 = keywords.iter().map(|k| k.cost[0].mean).sum();
    let adgroups = (0..m)
        .map(|j| AdGroupSpec::new(format!("g{j}"), total_mean * rng.random_range(0.15..0.5), 0.95))
        .collect();
    let inst = ProblemInstance::new(keywords, adgroups, f64::INFINITY).unwrap();
    if theta.is_finite() {
        // Express theta relative to the variance scale of the instance so the
        // risk constraint binds for some assignments.
        let typical: f64 = (0..n).map(|i| inst.variance(i, 0)).sum::<f64>() / n as f64;
        let theta_abs = theta * 3.0 * typical / inst.total_budget();
        inst.with_risk_tolerance(theta_abs).unwrap()
    } else {
        inst
    }
}

pub(crate) fn feasible(inst: &ProblemInstance, x: &Assignment) -> bool {
    for j in 0..inst.m() {
        if analytic_chance(inst, &x.column(j), j) < inst.adgroups()[j].alpha {
            return false;
        }
    }
    let var: f64 = x.pairs().map(|(i, j)| inst.variance(i, j)).sum();
    inst.risk_tolerance().is_infinite() || var / inst.total_budget() <= inst.risk_tolerance()
}

/// Best feasible objective over every assignment consistent with `fix`.
pub(crate) fn brute_force(inst: &ProblemInstance, fix: &NodeFixings) -> Option<(f64, Assignment)> {
    let (n, m) = (inst.n(), inst.m());
    let total = (m + 1).pow(n as u32);
    let mut best: Option<(f64, Assignment)> = None;
    'outer: for code in 0..total {
        let mut rows = Vec::with_capacity(n);
        let mut c = code;
        for i in 0..n {
            let d = c % (m + 1);
            c /= m + 1;
            let target = (d < m).then_some(d);
            for j in 0..m {
                let on = target == Some(j);
                if (on && fix.is_fixed_zero(i, j)) || (!on && fix.is_fixed_one(i, j)) {
                    continue 'outer;
                }
            }
            rows.push(target);
        }
        let x = Assignment::from_rows(rows, m).unwrap();
        if !feasible(inst, &x) {
            continue;
        }
        let value: f64 = x.pairs().map(|(i, j)| inst.profit(i, j)).sum();
        if best.as_ref().is_none_or(|(b, _)| value > *b) {
            best = Some((value, x));
        }
    }
    best
}

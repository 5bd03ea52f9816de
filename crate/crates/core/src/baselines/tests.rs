use super::*;
use crate::bnb::{self, SolveConfig};
use crate::model::{expected_profit, Moments2};
use crate::testutil::{feasible, random_instance};

/// Keyword with profit `16 * 0.5 - 0.3 = 7.7` per click and a fixed cost.
fn keyword(id: &str, clicks: f64, cost: f64, m: usize) -> KeywordStat {
    let mut k = KeywordStat::replicated(
        id,
        clicks * 10.0,
        16.0,
        Moments2::fixed(0.1),
        Moments2::fixed(0.5),
        0.3,
        m,
    );
    k.cost = vec![Moments2::new(cost, 0.0); m];
    k
}

fn labelled(mut k: KeywordStat, product: &str, topic: &str) -> KeywordStat {
    k.product_label = Some(product.into());
    k.hierarchy_label = Some(topic.into());
    k
}

#[test]
fn nogrouping_merges_adgroups() {
    let inst = ProblemInstance::new(
        vec![keyword("a", 10.0, 5.0, 2), keyword("b", 5.0, 5.0, 2)],
        vec![AdGroupSpec::new("small", 4.0, 0.9), AdGroupSpec::new("big", 6.0, 0.95)],
        f64::INFINITY,
    )
    .unwrap();
    let r = run_baseline(BaselineKind::Nogrouping, &inst, 0).unwrap();
    assert_eq!(r.instance.m(), 1);
    assert_eq!(r.instance.adgroups()[0].budget, 10.0);
    assert_eq!(r.instance.adgroups()[0].alpha, 0.95);
    assert_eq!(r.assignment.rows(), &[Some(0), Some(0)]);
}

#[test]
fn merge_keeps_best_column() {
    let mut k = keyword("a", 10.0, 1.0, 2);
    k.cvr[1] = Moments2::fixed(0.9);
    let inst = ProblemInstance::new(
        vec![k],
        vec![AdGroupSpec::new("x", 4.0, 0.9), AdGroupSpec::new("y", 6.0, 0.95)],
        f64::INFINITY,
    )
    .unwrap();
    let merged = merge_adgroups(&inst).unwrap();
    assert_eq!(merged.profit(0, 0), inst.profit(0, 1));
}

#[test]
fn admission_stops_at_first_overflow() {
    // Profits 77 > 38.5 > 7.7; the middle keyword does not fit, so the last
    // one is not considered even though it would.
    let inst = ProblemInstance::new(
        vec![
            labelled(keyword("a", 10.0, 6.0, 1), "p", "t"),
            labelled(keyword("b", 5.0, 6.0, 1), "p", "t"),
            labelled(keyword("c", 1.0, 1.0, 1), "p", "t"),
        ],
        vec![AdGroupSpec::new("g", 10.0, 0.95)],
        f64::INFINITY,
    )
    .unwrap();
    let r = run_baseline(BaselineKind::Product, &inst, 0).unwrap();
    assert_eq!(r.assignment.rows(), &[Some(0), None, None]);
    // The greedy baseline skips and continues.
    let g = run_baseline(BaselineKind::Profit, &inst, 0).unwrap();
    assert_eq!(g.assignment.rows(), &[Some(0), None, Some(0)]);
}

#[test]
fn groups_map_round_robin_by_profit() {
    let kws = vec![
        labelled(keyword("a", 1.0, 1.0, 2), "low", "t"),
        labelled(keyword("b", 9.0, 1.0, 2), "high", "t"),
        labelled(keyword("c", 5.0, 1.0, 2), "mid", "t"),
        labelled(keyword("d", 0.5, 1.0, 2), "high", "t"),
    ];
    let inst = ProblemInstance::new(
        kws,
        vec![
            AdGroupSpec::new("small", 50.0, 0.95),
            AdGroupSpec::new("big", 100.0, 0.95),
        ],
        f64::INFINITY,
    )
    .unwrap();
    let r = run_baseline(BaselineKind::Product, &inst, 0).unwrap();
    // high -> big, mid -> small, low -> big.
    assert_eq!(r.assignment.rows(), &[Some(1), Some(1), Some(0), Some(1)]);
    let h = run_baseline(BaselineKind::Hierarchy, &inst, 0).unwrap();
    assert_eq!(h.assignment.rows(), &[Some(1); 4]);
}

#[test]
fn missing_labels_are_reported() {
    let inst = random_instance(1, 4, 2, f64::INFINITY);
    match run_baseline(BaselineKind::Product, &inst, 0) {
        Err(Error::MissingLabel {
            label: "product",
            keyword,
        }) => assert_eq!(keyword, "kw0"),
        other => panic!("{other:?}"),
    }
    assert!(matches!(
        run_baseline(BaselineKind::Hierarchy, &inst, 0),
        Err(Error::MissingLabel { label: "hierarchy", .. })
    ));
}

#[test]
fn kind_names_round_trip() {
    for k in BaselineKind::ALL {
        assert_eq!(k.name().parse::<BaselineKind>().unwrap(), k);
    }
    assert!("bbkg".parse::<BaselineKind>().is_err());
}

#[test]
fn kmeans_trivial_cases() {
    let pts: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64, (i * i) as f64]).collect();
    assert_eq!(kmeans(&pts, 1, 3).unwrap(), vec![0; 6]);
    let mut all = kmeans(&pts, 6, 3).unwrap();
    all.sort();
    assert_eq!(all, (0..6).collect::<Vec<_>>());
    assert!(kmeans(&pts, 7, 0).is_err());
    assert!(kmeans(&pts, 0, 0).is_err());
    let two = kmeans(&[vec![0.0; 5], vec![1.0; 5]], 2, 9).unwrap();
    assert_ne!(two[0], two[1]);
}

#[test]
fn kmeans_recovers_separated_blobs() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for seed in 0..20 {
        let mut pts = Vec::new();
        let mut truth = Vec::new();
        for i in 0..40 {
            let blob = i % 2;
            let center = if blob == 0 { 0.0 } else { 100.0 };
            pts.push(
                (0..3)
                    .map(|_| center + rng.random_range(-1.0..1.0))
                    .collect::<Vec<f64>>(),
            );
            truth.push(blob);
        }
        let labels = kmeans(&pts, 2, seed).unwrap();
        for i in 0..40 {
            assert_eq!(labels[i] == labels[0], truth[i] == truth[0], "seed {seed}");
        }
        assert_eq!(labels, kmeans(&pts, 2, seed).unwrap());
    }
}

#[test]
fn baselines_respect_budgets() {
    for seed in 0..30 {
        let theta = if seed % 2 == 0 { 0.3 } else { f64::INFINITY };
        let mut inst = random_instance(seed, 10, 2, theta);
        let kws: Vec<KeywordStat> = inst
            .keywords()
            .iter()
            .enumerate()
            .map(|(i, k)| labelled(k.clone(), &format!("p{}", i % 3), &format!("t{}", i % 4)))
            .collect();
        inst = ProblemInstance::new(kws, inst.adgroups().to_vec(), inst.risk_tolerance()).unwrap();
        for kind in BaselineKind::ALL {
            let r = run_baseline(kind, &inst, seed).unwrap();
            for j in 0..r.instance.m() {
                let load = ColumnLoad::of_assignment(&r.instance, &r.assignment, j);
                assert!(chance::load_satisfies(&r.instance, load, j), "seed {seed} {kind}");
            }
            if kind == BaselineKind::Profit {
                assert!(feasible(&inst, &r.assignment));
            }
        }
    }
}

#[test]
fn profit_baseline_never_beats_branch_and_bound() {
    for seed in 0..20 {
        let inst = random_instance(500 + seed, 7, 2, if seed % 2 == 0 { 0.3 } else { f64::INFINITY });
        let greedy = run_baseline(BaselineKind::Profit, &inst, 0).unwrap();
        let g = expected_profit(&inst, &greedy.assignment).unwrap();
        let best = bnb::solve(
            &inst,
            &SolveConfig {
                audit_samples: 0,
                ..Default::default()
            },
        )
        .best_value;
        assert!(g <= best + 1e-9 * best.abs().max(1.0), "seed {seed}: {g} > {best}");
    }
}

#[test]
fn prefix_admission_grows_with_budget() {
    let base = random_instance(8, 12, 2, f64::INFINITY);
    let kws: Vec<KeywordStat> = base
        .keywords()
        .iter()
        .enumerate()
        .map(|(i, k)| labelled(k.clone(), &format!("p{}", i % 3), "t"))
        .collect();
    let base = ProblemInstance::new(kws, base.adgroups().to_vec(), f64::INFINITY).unwrap();
    let total = base.total_budget();
    for kind in [BaselineKind::Nogrouping, BaselineKind::Product, BaselineKind::Kcluster] {
        let mut last = 0.0;
        for step in 1..=10 {
            let level = total * step as f64 / 5.0;
            let inst = base.with_budgets(&[level * 2.0 / 3.0, level / 3.0]).unwrap();
            let r = run_baseline(kind, &inst, 1).unwrap();
            let v = expected_profit(&r.instance, &r.assignment).unwrap();
            assert!(v >= last, "{kind} step {step}: {v} < {last}");
            last = v;
        }
    }
}

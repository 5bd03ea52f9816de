use super::*;
use crate::model::ProblemInstance;

fn row(id: &str, period: &str, imp: u64, clicks: u64, conv: u64, cost: f64, revenue: f64) -> ReportRow {
    ReportRow {
        keyword_id: id.into(),
        period: period.into(),
        impressions: imp,
        clicks,
        conversions: conv,
        cost,
        revenue,
        product_label: Some("shoes".into()),
        hierarchy_label: None,
    }
}

fn bits(k: &KeywordStat) -> Vec<u64> {
    let mut v = vec![k.demand.to_bits(), k.value_per_sale.to_bits()];
    for j in 0..k.num_adgroups() {
        v.extend(
            [
                k.ctr[j].mean,
                k.ctr[j].sd,
                k.cvr[j].mean,
                k.cvr[j].sd,
                k.cpc[j],
                k.cost[j].mean,
                k.cost[j].sd,
            ]
            .map(f64::to_bits),
        );
    }
    v
}

#[test]
fn instance_round_trip_is_bit_exact() {
    for spec in [GeneratorSpec::dataset1(4), GeneratorSpec::campaign_b(40, 3, 9)] {
        let kws = generate(&spec).unwrap().keywords;
        let mut buf = Vec::new();
        write_instance(&mut buf, &kws).unwrap();
        let back = read_instance(buf.as_slice(), "mem").unwrap();
        assert_eq!(back, kws);
        for (a, b) in back.iter().zip(&kws) {
            assert_eq!(bits(a), bits(b));
        }
        let mut again = Vec::new();
        write_instance(&mut again, &back).unwrap();
        assert_eq!(buf, again);
    }
}

#[test]
fn adgroup_round_trip() {
    let groups = vec![
        AdGroupSpec::new("a", 1333.3333333333333, 0.95),
        AdGroupSpec::new("b", 0.1 + 0.2, 0.5),
    ];
    let mut buf = Vec::new();
    write_adgroups(&mut buf, &groups).unwrap();
    assert_eq!(read_adgroups(buf.as_slice(), "mem").unwrap(), groups);
}

#[test]
fn malformed_instance_reports_line() {
    let kws = generate(&GeneratorSpec::campaign_a(3, 1, 1)).unwrap().keywords;
    let mut buf = Vec::new();
    write_instance(&mut buf, &kws).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    lines[2] = lines[2].replacen(&format!(",{},", kws[1].demand), ",12x,", 1);
    let err = read_instance(lines.join("\n").as_bytes(), "inst.csv").unwrap_err();
    match err {
        Error::Csv { path, line, message } => {
            assert_eq!(path, "inst.csv");
            assert_eq!(line, 3);
            assert!(message.contains("demand"), "{message}");
        }
        other => panic!("{other:?}"),
    }
    assert!(matches!(
        read_instance("keyword_id,demand\nk,1\n".as_bytes(), "x"),
        Err(Error::Csv { line: 1, .. })
    ));
}

#[test]
fn report_rows_are_validated() {
    let text = "keyword_id,period,impressions,clicks,conversions,cost,revenue,product_label,hierarchy_label\n\
                a,1,100,3,1,0.9,16,shoes,\n\
                a,2,100,300,1,0.9,16,shoes,\n";
    match read_report(text.as_bytes(), "r.csv") {
        Err(Error::Csv { line: 3, message, .. }) => assert!(message.contains("clicks"), "{message}"),
        other => panic!("{other:?}"),
    }
    let first: String = text.lines().take(2).map(|l| format!("{l}\n")).collect();
    let ok = read_report(first.as_bytes(), "r.csv").unwrap();
    assert_eq!(ok.len(), 1);
    assert_eq!(ok[0].product_label.as_deref(), Some("shoes"));
    assert_eq!(ok[0].hierarchy_label, None);

    let rows = vec![row("a", "1", 10, 2, 1, 0.5, 3.0)];
    let mut buf = Vec::new();
    write_report(&mut buf, &rows).unwrap();
    assert_eq!(read_report(buf.as_slice(), "mem").unwrap(), rows);
}

#[test]
fn estimate_two_point_moments() {
    let rows = vec![
        row("k", "1", 1000, 30, 15, 9.0, 240.0),
        row("k", "2", 1000, 50, 15, 15.0, 240.0),
    ];
    let est = estimate_stats(&rows, 2).unwrap();
    assert!(est.warnings.is_empty());
    let k = &est.keywords[0];
    assert_eq!(k.demand, 1000.0);
    assert!((k.ctr[0].mean - 0.04).abs() < 1e-15);
    assert!((k.ctr[1].sd - 0.02f64.sqrt() / 10.0).abs() < 1e-15);
    assert!((k.ctr[0].sd - 0.01414).abs() < 1e-5);
    // CVR 0.5 and 0.3.
    assert!((k.cvr[0].mean - 0.4).abs() < 1e-15);
    assert_eq!(k.cpc[0], 24.0 / 80.0);
    assert_eq!(k.value_per_sale, 16.0);
    assert_eq!(k.cost[0].mean, 12.0);
    assert!((k.cost[0].sd - 18.0f64.sqrt()).abs() < 1e-12);
    assert_eq!(k.product_label.as_deref(), Some("shoes"));
}

#[test]
fn estimate_identical_periods() {
    let rows = vec![
        row("k", "1", 500, 20, 4, 6.0, 80.0),
        row("k", "2", 500, 20, 4, 6.0, 80.0),
    ];
    let k = &estimate_stats(&rows, 1).unwrap().keywords[0];
    assert_eq!(k.ctr[0], Moments2::new(0.04, 0.0));
    assert_eq!(k.cvr[0], Moments2::new(0.2, 0.0));
    assert_eq!(k.cost[0], Moments2::new(6.0, 0.0));
    assert_eq!(k.demand, 500.0);
}

#[test]
fn estimate_excludes_and_warns() {
    let rows = vec![
        row("noconv", "1", 100, 5, 0, 1.0, 0.0),
        row("noconv", "2", 100, 5, 0, 1.0, 0.0),
        row("noclick", "1", 100, 0, 0, 0.0, 0.0),
        row("single", "1", 100, 5, 1, 1.0, 10.0),
    ];
    let est = estimate_stats(&rows, 1).unwrap();
    let ids: Vec<&str> = est.keywords.iter().map(|k| k.id.as_str()).collect();
    assert_eq!(ids, ["single"]);
    assert_eq!(est.warnings.len(), 3);
    assert_eq!(est.keywords[0].ctr[0].sd, 0.0);
    assert!(estimate_stats(&rows, 0).is_err());
}

#[test]
fn table_two_cost_mean() {
    let g = generate(&GeneratorSpec::campaign_a(90, 2, 7)).unwrap();
    let mean = g
        .keywords
        .iter()
        .map(|k| k.demand * k.ctr[0].mean * k.cpc[0])
        .sum::<f64>()
        / 90.0;
    assert!((mean - 2.13).abs() <= 0.15 * 2.13, "{mean}");
    assert!(g.summary.dependence < 0.0);
    assert_eq!(g.summary.horizon, 1.0);
    let inst = ProblemInstance::new(
        g.keywords,
        vec![AdGroupSpec::new("a", 10.0, 0.95), AdGroupSpec::new("b", 5.0, 0.95)],
        0.3,
    );
    assert!(inst.is_ok());
}

#[test]
fn table_three_cpc_mean() {
    for seed in 0..5 {
        let g = generate(&GeneratorSpec::campaign_b(305, 3, seed)).unwrap();
        let mean = g.keywords.iter().map(|k| k.cpc[0]).sum::<f64>() / 305.0;
        assert!((mean - 1.15).abs() <= 0.1 * 1.15, "seed {seed}: {mean}");
        assert!(g.warnings.iter().any(|w| w.contains("cvr")));
    }
}

#[test]
fn campaign_total_rescales_demand() {
    let g = generate(&GeneratorSpec::dataset1(3)).unwrap();
    let spend: f64 = g.keywords.iter().map(|k| k.demand * k.ctr[0].mean * k.cpc[0]).sum();
    assert!((spend - 19_200.0).abs() < 1e-6 * 19_200.0);
    let per_period = generate(&GeneratorSpec::campaign_a(90, 2, 3)).unwrap();
    for (a, b) in g.keywords.iter().zip(&per_period.keywords) {
        assert!((a.demand - b.demand * g.summary.horizon).abs() <= 1e-9 * a.demand);
        assert_eq!(a.ctr[0].mean, b.ctr[0].mean);
    }
}

#[test]
fn zero_spread_gives_identical_keywords() {
    let spec = GeneratorSpec {
        demand: Moments2::fixed(1000.0),
        ctr: Moments2::fixed(0.05),
        cvr: Moments2::fixed(0.4),
        vps: Moments2::fixed(20.0),
        cpc: Moments2::fixed(0.5),
        ..GeneratorSpec::campaign_a(12, 2, 5)
    };
    let g = generate(&spec).unwrap();
    for k in &g.keywords {
        assert_eq!(k.demand, 1000.0);
        assert_eq!(k.value_per_sale, 20.0);
        assert_eq!(k.ctr[1].mean, 0.05);
        assert_eq!(k.cvr[0].mean, 0.4);
        assert_eq!(k.cpc[1], 0.5);
        assert_eq!(
            (k.ctr.clone(), k.cvr.clone(), k.cost.clone()),
            (
                g.keywords[0].ctr.clone(),
                g.keywords[0].cvr.clone(),
                g.keywords[0].cost.clone()
            )
        );
    }
    assert_eq!(g.summary.dependence, 0.0);
}

#[test]
fn generation_is_seeded() {
    let a = generate(&GeneratorSpec::campaign_a(50, 2, 11)).unwrap();
    let b = generate(&GeneratorSpec::campaign_a(50, 2, 11)).unwrap();
    let c = generate(&GeneratorSpec::campaign_a(50, 2, 12)).unwrap();
    assert_eq!(a.keywords, b.keywords);
    assert_ne!(a.keywords, c.keywords);
}

#[test]
fn marginals_match_targets() {
    // Copula coupling leaves each marginal alone.
    let spec = GeneratorSpec {
        cost_mean: None,
        ..GeneratorSpec::campaign_a(40_000, 1, 21)
    };
    let s = generate(&spec).unwrap().summary;
    let close = |got: f64, want: f64, tol: f64| assert!((got - want).abs() <= tol * want, "{got} vs {want}");
    close(s.ctr.mean, 0.04, 0.05);
    close(s.ctr.sd, 0.15, 0.05);
    close(s.cvr.mean, 0.53, 0.02);
    close(s.cvr.sd, 0.37, 0.02);
    close(s.cpc.mean, 0.30, 0.02);
    close(s.cpc.sd, 0.08, 0.05);
    close(s.vps.mean, 16.31, 0.05);
    close(s.demand.mean, 1211.90, 0.1);
}

#[test]
fn unattainable_rate_spread_is_rejected() {
    let strict = GeneratorSpec {
        rate_overflow: RateOverflow::Reject,
        ..GeneratorSpec::campaign_b(10, 1, 0)
    };
    match generate(&strict) {
        Err(Error::Config(msg)) => assert!(msg.contains("cvr"), "{msg}"),
        other => panic!("{other:?}"),
    }
    let bad_mean = GeneratorSpec {
        ctr: Moments2::new(1.2, 0.0),
        ..GeneratorSpec::campaign_a(10, 1, 0)
    };
    assert!(generate(&bad_mean).is_err());
    let bad_factoring = GeneratorSpec {
        ctr_factoring: Some(vec![1.0]),
        ..GeneratorSpec::campaign_a(10, 2, 0)
    };
    assert!(generate(&bad_factoring).is_err());
}

#[test]
fn ctr_factoring_scales_columns() {
    let spec = GeneratorSpec {
        ctr_factoring: Some(vec![1.0, 0.5]),
        ..GeneratorSpec::campaign_a(30, 2, 2)
    };
    for k in generate(&spec).unwrap().keywords {
        assert!((k.ctr[1].mean - 0.5 * k.ctr[0].mean).abs() <= 1e-15);
        assert_eq!(k.cost[1].mean, k.demand * k.ctr[1].mean * k.cpc[1]);
    }
}

#[test]
fn assignment_round_trip_and_row_sum() {
    let kws = generate(&GeneratorSpec::campaign_a(4, 2, 1)).unwrap().keywords;
    let inst = ProblemInstance::new(
        kws,
        vec![AdGroupSpec::new("a", 50.0, 0.95), AdGroupSpec::new("b", 50.0, 0.95)],
        f64::INFINITY,
    )
    .unwrap();
    let x = Assignment::from_rows(vec![Some(1), None, Some(0), None], 2).unwrap();
    let mut buf = Vec::new();
    write_assignment(&mut buf, &inst, &x).unwrap();
    assert_eq!(read_assignment(buf.as_slice(), "mem", &inst).unwrap(), x);

    let text = format!("keyword_id,a,b\n{},1,1\n", inst.keywords()[2].id);
    match read_assignment(text.as_bytes(), "x.csv", &inst) {
        Err(Error::RowSum { keyword, count: 2 }) => assert_eq!(keyword, inst.keywords()[2].id),
        other => panic!("{other:?}"),
    }
}

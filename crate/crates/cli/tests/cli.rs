use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn kwgroup(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kwgroup"))
        .current_dir(dir)
        .args(args)
        .env_remove("KWGROUP_WORKERS")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Keywords with demand 1000, CTR 0.05 (sd 0.01), CVR 0.5 (sd 0.1), value 20,
/// CPC 0.5 and the matching cost moments (25, 5), in one adgroup column.
fn write_instance(dir: &Path, ids: &[&str]) -> PathBuf {
    let mut text = String::from(
        "keyword_id,demand,vps,product_label,hierarchy_label,ctr_mean_1,ctr_sd_1,cvr_mean_1,cvr_sd_1,cpc_1,cost_mean_1,cost_sd_1\n",
    );
    for id in ids {
        text.push_str(&format!("{id},1000,20,p,p/t,0.05,0.01,0.5,0.1,0.5,25,5\n"));
    }
    let path = dir.join("instance.csv");
    fs::write(&path, text).unwrap();
    path
}

fn write_adgroups(dir: &Path, budget: f64) -> PathBuf {
    let path = dir.join("adgroups.csv");
    fs::write(&path, format!("adgroup_id,budget,alpha\ng1,{budget},0.95\n")).unwrap();
    path
}

#[test]
fn gen_is_seeded() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    for name in ["a.csv", "b.csv"] {
        let out = kwgroup(
            d,
            &[
                "gen",
                "--preset",
                "campaign-a",
                "--n",
                "30",
                "--seed",
                "4",
                "--out",
                name,
            ],
        );
        assert_eq!(code(&out), 0, "{}", stderr(&out));
    }
    let a = fs::read(d.join("a.csv")).unwrap();
    assert_eq!(a, fs::read(d.join("b.csv")).unwrap());
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("keyword_id,demand,vps,product_label,hierarchy_label,ctr_mean_1,"));
    assert_eq!(text.lines().count(), 31);
}

#[test]
fn solve_with_nothing_fitting_is_empty_and_succeeds() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    write_instance(d, &["a", "b"]);
    write_adgroups(d, 10.0);
    let out = kwgroup(
        d,
        &[
            "solve",
            "--instance",
            "instance.csv",
            "--adgroups",
            "adgroups.csv",
            "--samples",
            "1000",
        ],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let assignment = fs::read_to_string(d.join("assignment.csv")).unwrap();
    assert_eq!(assignment, "keyword_id,g1\na,0\nb,0\n");
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["value"], 0.0);
    assert_eq!(report["proven_optimal"], true);
}

#[test]
fn solve_then_audit_round_trip() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    write_instance(d, &["a", "b", "c", "d"]);
    write_adgroups(d, 70.0);
    let out = kwgroup(
        d,
        &[
            "solve",
            "--instance",
            "instance.csv",
            "--adgroups",
            "adgroups.csv",
            "--samples",
            "20000",
        ],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("report.json")).unwrap()).unwrap();
    // Two keywords: mean 50, sd 7.07, 50 + 1.645 * 7.07 = 61.6 <= 70; three do not fit.
    assert_eq!(report["evaluation"]["assigned"], 2);
    assert!((report["value"].as_f64().unwrap() - 2.0 * 475.0).abs() < 1e-9);
    assert_eq!(report["monte_carlo"].as_array().unwrap().len(), 1);

    let out = kwgroup(
        d,
        &[
            "audit",
            "--instance",
            "instance.csv",
            "--adgroups",
            "adgroups.csv",
            "--assignment",
            "assignment.csv",
            "--samples",
            "1000",
        ],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let audit: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(audit["feasible"], true);
}

#[test]
fn audit_rejects_row_sum_violation() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    write_instance(d, &["a", "b"]);
    fs::write(
        d.join("adgroups.csv"),
        "adgroup_id,budget,alpha\ng1,100,0.95\ng2,100,0.95\n",
    )
    .unwrap();
    let two = "keyword_id,demand,vps,product_label,hierarchy_label,ctr_mean_1,ctr_sd_1,cvr_mean_1,cvr_sd_1,cpc_1,cost_mean_1,cost_sd_1,\
               ctr_mean_2,ctr_sd_2,cvr_mean_2,cvr_sd_2,cpc_2,cost_mean_2,cost_sd_2\n\
               a,1000,20,,,0.05,0.01,0.5,0.1,0.5,25,5,0.05,0.01,0.5,0.1,0.5,25,5\n\
               b,1000,20,,,0.05,0.01,0.5,0.1,0.5,25,5,0.05,0.01,0.5,0.1,0.5,25,5\n";
    fs::write(d.join("instance.csv"), two).unwrap();
    fs::write(d.join("assignment.csv"), "keyword_id,g1,g2\na,0,1\nb,1,1\n").unwrap();
    let out = kwgroup(
        d,
        &[
            "audit",
            "--instance",
            "instance.csv",
            "--adgroups",
            "adgroups.csv",
            "--assignment",
            "assignment.csv",
        ],
    );
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("`b`"), "{}", stderr(&out));
}

#[test]
fn audit_flags_budget_violation() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    write_instance(d, &["a", "b", "c"]);
    write_adgroups(d, 70.0);
    fs::write(d.join("assignment.csv"), "keyword_id,g1\na,1\nb,1\nc,1\n").unwrap();
    let out = kwgroup(
        d,
        &[
            "audit",
            "--instance",
            "instance.csv",
            "--adgroups",
            "adgroups.csv",
            "--assignment",
            "assignment.csv",
            "--samples",
            "0",
        ],
    );
    assert_eq!(code(&out), 1);
    let audit: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(audit["feasible"], false);
    assert_eq!(audit["chance_ok"][0], false);
}

#[test]
fn malformed_csv_is_reported_with_line() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let path = write_instance(d, &["a", "b"]);
    let text = fs::read_to_string(&path).unwrap().replace("b,1000,", "b,lots,");
    fs::write(&path, text).unwrap();
    write_adgroups(d, 70.0);
    let out = kwgroup(
        d,
        &["solve", "--instance", "instance.csv", "--adgroups", "adgroups.csv"],
    );
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("instance.csv:3:"), "{}", stderr(&out));
    assert!(stderr(&out).contains("demand"), "{}", stderr(&out));
}

#[test]
fn usage_errors_exit_one() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&kwgroup(dir.path(), &["solve"])), 1);
    assert_eq!(code(&kwgroup(dir.path(), &["frobnicate"])), 1);
    assert_eq!(code(&kwgroup(dir.path(), &["--help"])), 0);
}

#[test]
fn limit_without_incumbent_exits_two() {
    // Every keyword alone breaks the risk limit, but fractions of them do
    // not, so the root bound is positive and one node cannot settle it.
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    write_instance(d, &["a", "b", "c"]);
    write_adgroups(d, 1000.0);
    let out = kwgroup(
        d,
        &[
            "solve",
            "--instance",
            "instance.csv",
            "--adgroups",
            "adgroups.csv",
            "--theta",
            "0.000001",
            "--node-limit",
            "1",
            "--samples",
            "0",
        ],
    );
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    let out = kwgroup(
        d,
        &[
            "solve",
            "--instance",
            "instance.csv",
            "--adgroups",
            "adgroups.csv",
            "--theta",
            "0.000001",
            "--samples",
            "0",
        ],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
}

#[test]
fn baselines_run_and_unknown_kind_fails() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    write_instance(d, &["a", "b", "c", "d"]);
    write_adgroups(d, 70.0);
    for kind in ["nogrouping", "product", "kcluster", "hierarchy", "profit"] {
        let out = kwgroup(
            d,
            &[
                "baseline",
                "--kind",
                kind,
                "--instance",
                "instance.csv",
                "--adgroups",
                "adgroups.csv",
            ],
        );
        assert_eq!(code(&out), 0, "{kind}: {}", stderr(&out));
        let report: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(d.join("report.json")).unwrap()).unwrap();
        assert_eq!(report["evaluation"]["assigned"], 2, "{kind}");
    }
    let out = kwgroup(
        d,
        &[
            "baseline",
            "--kind",
            "magic",
            "--instance",
            "instance.csv",
            "--adgroups",
            "adgroups.csv",
        ],
    );
    assert_eq!(code(&out), 1);
}

#[test]
fn estimate_from_report() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    fs::write(
        d.join("report.csv"),
        "keyword_id,period,impressions,clicks,conversions,cost,revenue,product_label,hierarchy_label\n\
         shoes,1,1000,30,15,9,240,footwear,footwear/run\n\
         shoes,2,1000,50,15,15,240,footwear,footwear/run\n\
         hats,1,500,0,0,0,0,,\n",
    )
    .unwrap();
    let out = kwgroup(
        d,
        &["estimate", "--report", "report.csv", "--m", "2", "--out", "est.csv"],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = fs::read_to_string(d.join("est.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("shoes,1000,16,footwear,footwear/run,0.04,"));
    assert!(stderr(&out).contains("hats"));
}

#[test]
fn sweep_is_byte_identical_across_runs_and_workers() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let out = kwgroup(
        d,
        &["gen", "--preset", "campaign-a", "--n", "14", "--m", "2", "--seed", "3"],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let run = |workers: &str, name: &str| {
        let out = kwgroup(
            d,
            &[
                "--workers",
                workers,
                "sweep",
                "--instance",
                "instance.csv",
                "--levels",
                "5,10,20,40",
                "--ratios",
                "2,1",
                "--seed",
                "9",
                "--out",
                name,
            ],
        );
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        fs::read(d.join(name)).unwrap()
    };
    let a = run("1", "a.csv");
    assert_eq!(a, run("1", "b.csv"));
    assert_eq!(a, run("4", "c.csv"));
    let text = String::from_utf8(a).unwrap();
    assert_eq!(text.lines().count(), 1 + 4 * 2 * 6);
    assert!(text.starts_with("level,theta,approach,status,expected_profit"));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["seed"], 9);
    assert_eq!(manifest["cells"], 48);
}

#[test]
fn sweep_rejects_zero_budget_level() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    write_instance(d, &["a"]);
    let out = kwgroup(
        d,
        &[
            "sweep",
            "--instance",
            "instance.csv",
            "--levels",
            "0,10",
            "--ratios",
            "1",
        ],
    );
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("budget level"), "{}", stderr(&out));
}

//! End-to-end checks of the config-driven commands: schema errors, output
//! shapes, closure enforcement, and byte-level determinism.

use std::fs;
use std::path::Path;

use demrisk::commands::{cmd_decompose, cmd_project, cmd_simulate, cmd_value, Overrides};
use demrisk::config::RunConfig;

fn write_flat_inputs(dir: &Path) {
    let mut table = String::from("age,qx\n");
    for age in 40..110 {
        table.push_str(&format!("{age},0.01\n"));
    }
    table.push_str("110,1.0\n");
    fs::write(dir.join("table.csv"), table).unwrap();
}

fn config_json(dir: &Path, body: serde_json::Value) -> (RunConfig, serde_json::Value) {
    let path = dir.join("run.json");
    fs::write(&path, serde_json::to_string_pretty(&body).unwrap()).unwrap();
    RunConfig::load(&path).unwrap()
}

fn base_config(out: &Path) -> serde_json::Value {
    serde_json::json!({
        "policy": {
            "kind": "endowment",
            "issue_age": 40,
            "duration": 10,
            "premium_type": "annual",
            "technical_rate": 0.01
        },
        "cohort": {"policyholders": 200, "sum_mean": 1000.0, "sum_cv": 0.8},
        "lifetables": {"first_order": "table.csv", "second_order": "table.csv"},
        "curve": {"flat": 0.01, "maturities": 20},
        "simulation": {"n_sims": 500, "seed": 7, "times": [0, 4, 9]},
        "output": {"dir": out, "formats": ["csv", "json"]}
    })
}

#[test]
fn value_columns_coincide_when_bases_coincide() {
    let dir = tempfile::tempdir().unwrap();
    write_flat_inputs(dir.path());
    let out = dir.path().join("out");
    let (cfg, raw) = config_json(dir.path(), base_config(&out));
    let report = cmd_value(&cfg, &raw, Some(dir.path()), &Overrides::default()).unwrap();
    // q = q* and a flat curve at the technical rate: best estimate, EPV, and
    // the local reserve are the same number.
    for row in &report.rows {
        assert!((row.best_estimate - row.epv).abs() < 1e-12);
        if row.t < 10 {
            assert!((row.best_estimate - row.reserve).abs() < 1e-12);
        }
    }
    // Maturity row shows the full endowment benefit.
    assert_eq!(report.rows.last().unwrap().reserve, 1.0);
    assert_eq!(report.rows.last().unwrap().sum_at_risk, Some(0.0));
    let csv = fs::read_to_string(out.join("value.csv")).unwrap();
    assert!(csv.starts_with("t,gross_premium_rate,pure_premium_rate,reserve_rate"));
    assert_eq!(csv.lines().count(), 12);
}

#[test]
fn project_emits_full_series() {
    let dir = tempfile::tempdir().unwrap();
    write_flat_inputs(dir.path());
    let out = dir.path().join("out");
    let mut body = base_config(&out);
    body["lifetables"]["first_order_scale"] =
        serde_json::json!({"kind": "constant", "factor": 0.85});
    let (cfg, raw) = config_json(dir.path(), body);
    let report = cmd_project(&cfg, &raw, Some(dir.path()), &Overrides::default()).unwrap();
    assert_eq!(report.rows.len(), 10);
    let csv = fs::read_to_string(out.join("expected_profit.csv")).unwrap();
    assert!(csv.starts_with("t,expected_mcv,expected_lg\n"));
    assert_eq!(csv.lines().count(), 11);
}

#[test]
fn decompose_checks_closures_and_zero_columns() {
    let dir = tempfile::tempdir().unwrap();
    write_flat_inputs(dir.path());
    let out = dir.path().join("out");
    let mut body = base_config(&out);
    // Realized asset return equal to the technical rate: financial and
    // residual components must vanish path by path.
    body["asset_return"] = serde_json::json!(0.01);
    body["simulation"]["n_sims"] = serde_json::json!(50);
    let (cfg, raw) = config_json(dir.path(), body);
    let report = cmd_decompose(&cfg, &raw, Some(dir.path()), &Overrides::default()).unwrap();
    assert_eq!(report.rows.len(), 150);
    for row in &report.rows {
        assert!(row.closure_error < 1e-8);
        assert!(row.split_error < 1e-8);
        assert_eq!(row.decomposition.financial, 0.0);
        assert_eq!(row.decomposition.residual, 0.0);
        // No lapse model configured.
        assert_eq!(row.decomposition.lapse, 0.0);
        assert_eq!(row.decomposition.expense, 0.0);
    }
}

#[test]
fn decompose_with_lapses_and_deltas_fills_all_components() {
    let dir = tempfile::tempdir().unwrap();
    write_flat_inputs(dir.path());
    let out = dir.path().join("out");
    let mut body = base_config(&out);
    body["policy"]["surrender"] = serde_json::json!({"vesting_years": 2, "penalty_rate": 0.005});
    body["policy"]["loadings"] =
        serde_json::json!({"acquisition": 0.1, "collection": 0.02, "management": 0.002});
    body["lapse"] = serde_json::json!({"annual_rate": 0.03});
    body["asset_return"] = serde_json::json!(0.025);
    body["expenses_realized"] = serde_json::json!({
        "delta_acquisition": 0.01, "delta_collection": -0.002, "delta_management": 0.0005
    });
    body["simulation"]["n_sims"] = serde_json::json!(40);
    let (cfg, raw) = config_json(dir.path(), body);
    let report = cmd_decompose(&cfg, &raw, Some(dir.path()), &Overrides::default()).unwrap();
    for row in &report.rows {
        assert!(row.closure_error < 1e-8, "path {}", row.path);
        if row.time >= 2 {
            assert!(row.decomposition.lapse != 0.0);
        }
        assert!(row.decomposition.expense != 0.0);
        assert!(row.decomposition.financial != 0.0);
    }
}

#[test]
fn simulate_is_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    write_flat_inputs(dir.path());
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    let (cfg, raw) = config_json(dir.path(), base_config(&out_a));
    cmd_simulate(&cfg, &raw, Some(dir.path()), &Overrides::default()).unwrap();
    let ov = Overrides {
        out_dir: Some(out_b.clone()),
        ..Overrides::default()
    };
    cmd_simulate(&cfg, &raw, Some(dir.path()), &ov).unwrap();
    for name in ["mcv_results.csv", "lg_results.csv", "run.json"] {
        let a = fs::read(out_a.join(name)).unwrap();
        let b = fs::read(out_b.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between runs");
    }
}

#[test]
fn simulate_report_layout() {
    let dir = tempfile::tempdir().unwrap();
    write_flat_inputs(dir.path());
    let out = dir.path().join("out");
    let (cfg, raw) = config_json(dir.path(), base_config(&out));
    let report = cmd_simulate(&cfg, &raw, Some(dir.path()), &Overrides::default()).unwrap();
    assert_eq!(report.columns.len(), 3);
    let csv = fs::read_to_string(out.join("mcv_results.csv")).unwrap();
    let labels: Vec<&str> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap())
        .collect();
    assert_eq!(
        labels,
        vec![
            "expected_theoretical",
            "expected_simulated",
            "expected_on_sums",
            "std_dev",
            "skewness",
            "scr",
            "scr_on_sums"
        ]
    );
    let lg = fs::read_to_string(out.join("lg_results.csv")).unwrap();
    let lg_labels: Vec<&str> = lg
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap())
        .collect();
    assert_eq!(
        lg_labels,
        vec![
            "expected_theoretical",
            "std_dev_theoretical",
            "skewness_theoretical",
            "scr",
            "scr_on_sums"
        ]
    );
    // Config echo lands in the JSON document.
    let run: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("run.json")).unwrap()).unwrap();
    assert_eq!(run["command"], "simulate");
    assert_eq!(run["config"]["policy"]["issue_age"], 40);
    assert_eq!(run["seed"], 7);
}

#[test]
fn seed_override_wins_over_config() {
    let dir = tempfile::tempdir().unwrap();
    write_flat_inputs(dir.path());
    let out = dir.path().join("out");
    let (cfg, raw) = config_json(dir.path(), base_config(&out));
    let ov = Overrides {
        seed: Some(12345),
        ..Overrides::default()
    };
    cmd_simulate(&cfg, &raw, Some(dir.path()), &ov).unwrap();
    let run: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("run.json")).unwrap()).unwrap();
    assert_eq!(run["seed"], 12345);
}

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use proptest::prelude::*;
use serde_json::Value;

use mdm_cli::RunConfig;

const QUARTIC: &str = r#"{"problem": {"name": "quadratic", "lambda": {"kind": "power", "p": 4}}"#;

fn mdm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mdm"))
        .args(args)
        .env_remove("MDM_THREADS")
        .output()
        .expect("spawn mdm")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn stdout_json(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn quartic_integrate_is_accurate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        &format!("{QUARTIC}, \"epsilon\": 1e-3}}"),
    );
    let report = stdout_json(&mdm(&["integrate", "--config", cfg.to_str().unwrap()]));
    let oracle = stdout_json(&mdm(&["oracle", "--config", cfg.to_str().unwrap()]));
    let est = report["estimate"].as_f64().unwrap();
    let exact = oracle["value"].as_f64().unwrap();
    assert!((est - exact).abs() <= 1e-3, "{est} vs {exact}");
}

#[test]
fn integrate_writes_out_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        &format!("{QUARTIC}, \"epsilon\": 1e-2}}"),
    );
    let out = dir.path().join("r.json");
    let csv = dir.path().join("t.csv");
    let o = mdm(&[
        "integrate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--csv",
        csv.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let report: Value = serde_json::from_str(&std::fs::read_to_string(out).unwrap()).unwrap();
    let table = std::fs::read_to_string(csv).unwrap();
    assert!(table.starts_with("indices,cardinality,h,n,kappa"));
    assert_eq!(
        table.lines().count(),
        report["rows"].as_array().unwrap().len() + 1
    );
}

#[test]
fn same_seed_same_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        &format!("{QUARTIC}, \"epsilon\": 1e-2, \"backend\": \"lattice\", \"seed\": 7}}"),
    );
    let a = mdm(&[
        "integrate",
        "--config",
        cfg.to_str().unwrap(),
        "--threads",
        "1",
    ]);
    let b = mdm(&[
        "integrate",
        "--config",
        cfg.to_str().unwrap(),
        "--threads",
        "3",
    ]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let c = mdm(&[
        "integrate",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "8",
    ]);
    assert!(c.status.success());
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn incompatible_backend_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        &format!("{QUARTIC}, \"epsilon\": 1e-2, \"backend\": \"smolyak-exp-weighted\"}}"),
    );
    let o = mdm(&["integrate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("backend"));
}

#[test]
fn missing_problem_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"epsilon": 0.1}"#);
    let o = mdm(&["plan", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("problem"));
}

#[test]
fn hat_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"problem": {"name": "hat"}, "epsilon": 0.1}"#,
    );
    let o = mdm(&["integrate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("dominated convergence"));
}

#[test]
fn evaluation_cap_exits_1_with_partial_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        &format!("{QUARTIC}, \"epsilon\": 1e-3, \"max_evaluations\": 10}}"),
    );
    let o = mdm(&["integrate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let report: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(report["failure"].is_string());
}

#[test]
fn huge_epsilon_plans_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        &format!("{QUARTIC}, \"epsilon\": 100.0}}"),
    );
    let plan = stdout_json(&mdm(&["plan", "--config", cfg.to_str().unwrap()]));
    assert!(plan["subsets"].as_array().unwrap().is_empty());
}

#[test]
fn plan_lists_allocation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        &format!("{QUARTIC}, \"epsilon\": 1e-2}}"),
    );
    let plan = stdout_json(&mdm(&["plan", "--config", cfg.to_str().unwrap()]));
    let subsets = plan["subsets"].as_array().unwrap();
    assert!(!subsets.is_empty());
    for s in subsets {
        for key in ["indices", "cb", "b", "h", "n", "kappa", "predicted_error"] {
            assert!(s.get(key).is_some(), "missing {key}");
        }
    }
}

#[test]
fn sweep_has_one_row_per_epsilon() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        &format!("{QUARTIC}, \"eps_list\": [1e-1, 3e-2, 1e-2, 3e-3]}}"),
    );
    let o = mdm(&["sweep", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 5);
    assert!(lines[0].starts_with("epsilon,estimate,reference,achieved_error"));
}

#[test]
fn single_epsilon_sweep_matches_integrate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        &format!("{QUARTIC}, \"eps_list\": [1e-2]}}"),
    );
    let report = stdout_json(&mdm(&["integrate", "--config", cfg.to_str().unwrap()]));
    let o = mdm(&["sweep", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    let est: f64 = row[1].parse().unwrap();
    assert_eq!(est, report["estimate"].as_f64().unwrap());
}

#[test]
fn increasing_eps_list_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        &format!("{QUARTIC}, \"eps_list\": [1e-3, 1e-2]}}"),
    );
    let o = mdm(&["sweep", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn oracle_for_builtins() {
    let dir = tempfile::tempdir().unwrap();
    // sum of lambda_j / 12 with lambda_j = 2^-j
    let cfg = write(
        dir.path(),
        "q.json",
        r#"{"problem": {"name": "quadratic", "lambda": {"kind": "geometric", "r": 0.5}}, "tolerance": 1e-8}"#,
    );
    let r = stdout_json(&mdm(&["oracle", "--config", cfg.to_str().unwrap()]));
    let v = r["value"].as_f64().unwrap();
    assert!((v - 1.0 / 12.0).abs() <= 1e-8, "{v}");

    let cfg = write(
        dir.path(),
        "h.json",
        r#"{"problem": {"name": "hat"}, "tolerance": 1e-8}"#,
    );
    assert_eq!(
        mdm(&["oracle", "--config", cfg.to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );
    let cfg = write(
        dir.path(),
        "m.json",
        r#"{"problem": {"name": "motivating"}, "tolerance": 1e-3}"#,
    );
    let r = stdout_json(&mdm(&["oracle", "--config", cfg.to_str().unwrap()]));
    assert!(r["value"].as_f64().unwrap().is_finite());
}

fn arb_config() -> impl Strategy<Value = RunConfig> {
    let base = RunConfig::parse(&format!("{QUARTIC}, \"epsilon\": 0.01}}")).unwrap();
    (
        1e-6f64..1.0,
        prop::option::of(1.1f64..4.0),
        any::<u64>(),
        prop::option::of(2usize..16),
        any::<bool>(),
        prop::option::of(1usize..64),
        prop_oneof![Just(false), Just(true)],
    )
        .prop_map(
            move |(eps, alpha, seed, shifts, antithetic, threads, lattice)| {
                let mut c = base.clone();
                c.epsilon = Some(eps);
                c.alpha = alpha;
                c.seed = seed;
                c.shifts = shifts;
                c.antithetic = antithetic;
                c.threads = threads;
                if lattice {
                    c.backend = mdm_cli::BackendName::Lattice;
                    c.q = Some(0.75);
                }
                c
            },
        )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn config_round_trips(cfg in arb_config()) {
        let text = serde_json::to_string(&cfg).unwrap();
        let back = RunConfig::parse(&text).unwrap();
        prop_assert_eq!(back, cfg);
    }
}

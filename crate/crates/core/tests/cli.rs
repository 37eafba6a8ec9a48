use std::path::Path;
use std::process::Command;

use prefopt::cli::{run, EXIT_FAILURE, EXIT_OK, EXIT_USAGE};

fn invoke(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = run(std::iter::once("prefopt").chain(args.iter().copied()), &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

const QUICK: [&str; 6] = ["--set", "seeds=1,2,3", "--set", "max_steps=200", "--set", "eval_states=200"];

fn run_quick(env: &str, dir: &Path, extra: &[&str]) -> (i32, String, String) {
    let mut args = vec!["run", "--env", env, "--out", dir.to_str().unwrap()];
    args.extend(QUICK);
    args.extend(extra);
    invoke(&args)
}

#[test]
fn run_writes_artifacts_and_records_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out, err) = run_quick("linear-flipped", dir.path(), &["--set", "m=400"]);
    assert_eq!(code, EXIT_OK, "{err}");
    assert!(out.contains("method=rmb_po_plus"));
    assert!(out.lines().any(|l| l.starts_with("seed=1 reward_acc=")));
    for f in ["results.csv", "summary.csv", "summary.json", "config.cfg", "figures/gaps.svg"] {
        assert!(dir.path().join(f).exists(), "missing {f}");
    }
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(json["config"]["m"], serde_json::json!([400]));
}

#[test]
fn unknown_key_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, err) = run_quick("linear-matched", dir.path(), &["--set", "betta=0.1"]);
    assert_eq!(code, EXIT_USAGE);
    assert!(err.contains("betta"), "{err}");
    assert!(!dir.path().join("results.csv").exists());
}

#[test]
fn config_file_errors_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "[experiment]\nn = 20\nbeta = lots\n").unwrap();
    let (code, _, err) = invoke(&["run", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code, EXIT_USAGE);
    assert!(err.contains("line 3"), "{err}");
}

#[test]
fn out_env_var_overrides_flag() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("from_env");
    let flag = dir.path().join("from_flag");
    let status = Command::new(env!("CARGO_BIN_EXE_prefopt"))
        .args(["run", "--env", "linear-matched", "--out", flag.to_str().unwrap()])
        .args(QUICK)
        .args(["--set", "methods=dpo"])
        .env("PREFOPT_OUT", &target)
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    assert!(target.join("results.csv").exists());
    assert!(!flag.exists());
}

#[test]
fn sweep_requires_and_uses_m_list() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let mut args = vec!["sweep", "--env", "linear-matched", "--out", d, "--m", "10,30"];
    args.extend(QUICK);
    args.extend(["--set", "methods=rmb_po_plus"]);
    let (code, out, err) = invoke(&args);
    assert_eq!(code, EXIT_OK, "{err}");
    assert!(out.contains("rmb_po_plus(m=10)") && out.contains("rmb_po_plus(m=30)"));
    assert!(dir.path().join("figures/gap_vs_m.svg").exists());
    let (code, _, _) = invoke(&["sweep", "--env", "linear-matched", "--out", d]);
    assert_eq!(code, EXIT_USAGE);
}

#[test]
fn gradcheck_passes_and_detects_fault() {
    let (code, out, _) = invoke(&["gradcheck", "--instances", "3"]);
    assert_eq!(code, EXIT_OK);
    for s in ["nn", "bt_loss", "dpo_loss", "rmb_objective"] {
        assert!(out.lines().any(|l| l.starts_with(&format!("PASS {s} "))), "{out}");
    }
    let (code, out, _) = invoke(&["gradcheck", "--instances", "3", "--inject-fault", "dpo-loss"]);
    assert_eq!(code, EXIT_FAILURE);
    assert!(out.lines().any(|l| l.starts_with("FAIL dpo_loss")), "{out}");
    assert!(out.lines().any(|l| l.starts_with("PASS nn")));
}

#[test]
fn prop1_small_campaign_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let (code, first, _) = invoke(&["prop1", "--size", "200", "--seed", "5", "--out", d]);
    assert_eq!(code, EXIT_OK);
    assert!(first.contains("instances=200"));
    assert!(first.contains("violations=0"));
    let summary = std::fs::read_to_string(dir.path().join("prop1_summary.json")).unwrap();
    let (_, second, _) = invoke(&["prop1", "--size", "200", "--seed", "5", "--out", d]);
    assert_eq!(first, second);
    assert_eq!(summary, std::fs::read_to_string(dir.path().join("prop1_summary.json")).unwrap());
}

#[test]
fn replay_reproduces_run() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, err) = run_quick("linear-matched", dir.path(), &["--set", "methods=dpo,rmb_po"]);
    assert_eq!(code, EXIT_OK, "{err}");
    let (code, out, err) = invoke(&["replay", "--run", dir.path().to_str().unwrap()]);
    assert_eq!(code, EXIT_OK, "{err}");
    assert!(out.contains("replay identical"));

    let csv = dir.path().join("results.csv");
    let tampered = std::fs::read_to_string(&csv).unwrap().replacen("dpo,1", "dpo,99", 1);
    std::fs::write(&csv, tampered).unwrap();
    let (code, out, _) = invoke(&["replay", "--run", dir.path().to_str().unwrap()]);
    assert_eq!(code, EXIT_FAILURE);
    assert!(out.contains("replay differs"));
}

#[test]
fn profile_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["profile", "--env", "linear-matched", "--out", dir.path().to_str().unwrap()];
    args.extend(QUICK);
    let (code, _, err) = invoke(&args);
    assert_eq!(code, EXIT_OK, "{err}");
    assert!(dir.path().join("profile.csv").exists());
    assert!(dir.path().join("action_profile.svg").exists());
    let (code, _, _) = invoke(&["profile", "--env", "neural", "--out", dir.path().to_str().unwrap()]);
    assert_ne!(code, EXIT_OK);
}

#[test]
fn bad_subcommand_is_usage_error() {
    assert_eq!(invoke(&["frobnicate"]).0, EXIT_USAGE);
    assert_eq!(invoke(&["run", "--env", "quadratic"]).0, EXIT_USAGE);
}

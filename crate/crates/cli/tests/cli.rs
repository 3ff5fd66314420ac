use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_courierlab"))
        .args(args)
        .output()
        .expect("binary runs");
    assert!(
        out.status.success(),
        "courierlab {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn read(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn bench_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        run(&[
            "bench", "--scenario", "desk", "--policy", "random,ghav,ghep,mbm",
            "--instances", "3", "--seed", "17", "--out", out.to_str().unwrap(),
        ]);
    }
    for f in ["bench_rows.csv", "bench_summary.csv", "config.json"] {
        assert_eq!(read(&a.join(f)), read(&b.join(f)), "{f} differs");
    }
    let summary = String::from_utf8(read(&a.join("bench_summary.csv"))).unwrap();
    assert_eq!(summary.lines().count(), 5);
    assert!(summary.starts_with("scenario,policy,instances,mean_score,std_err\n"));
}

#[test]
fn stdout_table_lists_every_cell() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "bench", "--scenario", "desk", "--policy", "ghav,random",
        "--instances", "2", "--out", dir.path().to_str().unwrap(),
    ]);
    let table = String::from_utf8(out.stdout).unwrap();
    assert!(table.contains("ghav") && table.contains("random"));
    assert_eq!(table.lines().count(), 4);
}

#[test]
fn gen_writes_loadable_instances() {
    let dir = tempfile::tempdir().unwrap();
    run(&["gen", "--scenario", "desk,low_dyn", "--instances", "2", "--out", dir.path().to_str().unwrap()]);
    for name in ["desk_000.json", "desk_001.json", "low_dyn_001.json"] {
        let inst = courierlab::scenario::load_instance(&dir.path().join(name)).unwrap();
        assert!(!inst.requests.is_empty());
    }
}

#[test]
fn train_eval_export_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = |s: &str| dir.path().join(s).to_str().unwrap().to_string();
    run(&[
        "train", "--scenario", "desk", "--policy", "marl-b", "--episodes", "2",
        "--instances", "2", "--seed", "3", "--out", &d("train"),
    ]);
    let curve = String::from_utf8(read(&dir.path().join("train/learning_curve.csv"))).unwrap();
    assert_eq!(curve.lines().count(), 3);
    assert!(curve.starts_with("episode,train_score,eval_score,value_loss,mean_entropy"));

    let ck = d("train/checkpoint.json");
    for out in ["e1", "e2"] {
        run(&["eval", "--scenario", "desk", "--checkpoint", &ck, "--instances", "2", "--out", &d(out)]);
    }
    assert_eq!(read(&dir.path().join("e1/eval_rows.csv")), read(&dir.path().join("e2/eval_rows.csv")));
    let rows = String::from_utf8(read(&dir.path().join("e1/eval_rows.csv"))).unwrap();
    assert!(rows.lines().skip(1).all(|l| l.starts_with("desk,marl-b,")));

    run(&[
        "export", "--scenario", "desk", "--policy", "ghep,marl-b", "--checkpoint", &ck,
        "--out", &d("export"),
    ]);
    let doc: serde_json::Value =
        serde_json::from_slice(&read(&dir.path().join("export/trajectories.json"))).unwrap();
    let policies = doc["policies"].as_array().unwrap();
    assert_eq!(policies.len(), 2);
    assert_eq!(policies[1]["policy"], "marl-b");
    assert!(dir.path().join("export/heat.csv").exists());
}

#[test]
fn bad_invocations_fail_cleanly() {
    let fails = |args: &[&str]| {
        let out = Command::new(env!("CARGO_BIN_EXE_courierlab")).args(args).output().unwrap();
        assert!(!out.status.success(), "{args:?} should fail");
        String::from_utf8(out.stderr).unwrap()
    };
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert!(fails(&["bench", "--scenario", "atlantis", "--out", out]).contains("atlantis"));
    assert!(fails(&["bench", "--policy", "marl-b", "--out", out]).contains("checkpoint"));
    assert!(fails(&["eval", "--out", out]).contains("checkpoint"));
    assert!(fails(&["train", "--policy", "ghav", "--out", out]).contains("marl"));
}

#[test]
fn config_file_is_honoured_and_echoed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("in.json");
    let c = courierlab::experiments::LabConfig {
        scenario: courierlab::ScenarioConfig::preset("desk").unwrap(),
        instances: 2,
        seed: 99,
        ..Default::default()
    };
    c.save(&cfg).unwrap();
    let out = dir.path().join("out");
    run(&["bench", "--policy", "ghav", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    let echoed = courierlab::experiments::LabConfig::load(&out.join("config.json")).unwrap();
    assert_eq!(echoed, c);
    let rows = String::from_utf8(read(&out.join("bench_rows.csv"))).unwrap();
    assert_eq!(rows.lines().count(), 3);
}

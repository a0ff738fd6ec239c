use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_combsearch"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn generate_then_solve_routing() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("vrp.json");
    ok(&["generate", "cvrp", "--n", "8", "--capacity", "20", "--seed", "4", "--out", p(&inst)]);
    let text = fs::read_to_string(&inst).unwrap();
    assert!(text.contains("\"customers\""));
    let out = dir.path().join("sol.json");
    let stdout = ok(&["solve", "--instance", p(&inst), "--policy", "savings", "--out", p(&out)]);
    assert!(stdout.starts_with("objective "));
    let sol: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert!(sol["objective"].as_f64().unwrap() > 0.0);
    let stdout = ok(&["solve", "--instance", p(&inst), "--policy", "mcts:nearest", "--rollouts", "200"]);
    assert!(stdout.starts_with("objective "));
}

#[test]
fn generate_then_solve_scheduling_online() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("pmsp.json");
    ok(&[
        "generate", "pmsp", "--m", "2", "--c", "3", "--mode", "online", "--intervals", "3",
        "--interval-length", "50", "--expected-jobs", "6", "--seed", "1", "--out", p(&inst),
    ]);
    ok(&["solve", "--instance", p(&inst), "--policy", "wspt"]);
    ok(&["solve", "--instance", p(&inst), "--policy", "mcts", "--heuristic", "wspt", "--rollouts", "50", "--k", "3"]);
}

#[test]
fn import_liao_file() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("tiny.txt");
    fs::write(&src, "2 1 2\n10 20\n3 1\n1 2\n0 5\n7 0\n").unwrap();
    let out = dir.path().join("tiny.json");
    ok(&["import", "--input", p(&src), "--out", p(&out)]);
    // WSPT runs job 1 (ratio 10/3) before job 2 (ratio 25): 3*10 + 1*35.
    let stdout = ok(&["solve", "--instance", p(&out), "--policy", "wspt"]);
    assert_eq!(stdout.trim(), "objective 65");
    assert!(!run(&["import", "--input", p(&src), "--format", "liao-v9", "--out", p(&out)]).status.success());
}

#[test]
fn bench_is_repeatable_and_report_matches() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        ok(&[
            "bench", "--suite", "cvrp:10:20", "--suite", "pmsp:6:2:2", "--policy", "random", "--policy",
            "mcts:random", "--seeds", "3", "--rollouts", "100", "--reference", "random", "--out", p(out),
        ]);
    }
    let ra = fs::read(a.join("results.csv")).unwrap();
    assert_eq!(ra, fs::read(b.join("results.csv")).unwrap());
    assert!(a.join("timings.csv").exists());
    let report = dir.path().join("report.json");
    ok(&["report", "--input", p(&a.join("results.csv")), "--reference", "random", "--out", p(&report)]);
    assert_eq!(fs::read(report).unwrap(), fs::read(a.join("summary.json")).unwrap());
}

#[test]
fn failed_instances_give_nonzero_exit() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["bench", "--suite", "pmsp:4:2:2", "--policy", "savings", "--seeds", "1", "--out", p(dir.path())]);
    assert!(!out.status.success());
    let csv = fs::read_to_string(dir.path().join("results.csv")).unwrap();
    assert!(csv.contains("failed"));
}

#[test]
fn train_writes_a_loadable_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("dqn.json");
    fs::write(&cfg, r#"{"learning_starts": 20, "initial_random_steps": 20, "eval_every": 50, "eval_episodes": 2, "batch_size": 8}"#).unwrap();
    let ckpt = dir.path().join("net.bin");
    let metrics = dir.path().join("metrics.csv");
    ok(&[
        "train", "--problem", "cvrp", "--n", "4", "--capacity", "15", "--hidden", "8", "--total-steps", "100",
        "--config", p(&cfg), "--out", p(&ckpt), "--metrics", p(&metrics),
    ]);
    assert!(fs::read_to_string(&metrics).unwrap().starts_with("step,loss,epsilon,eval_return"));
    let inst = dir.path().join("vrp.json");
    ok(&["generate", "cvrp", "--n", "4", "--capacity", "15", "--out", p(&inst)]);
    let spec = format!("greedy:qnet:{}", p(&ckpt));
    ok(&["solve", "--instance", p(&inst), "--policy", &spec]);
    fs::write(&cfg, r#"{"no_such_setting": 1}"#).unwrap();
    assert!(!run(&["train", "--problem", "cvrp", "--config", p(&cfg), "--out", p(&ckpt)]).status.success());
}

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coordscope")).current_dir(dir).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn simulate_test_reconstruct() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let o = run(dir, &["simulate", "--T", "10", "--seed", "3", "--out", "d.json", "--emit-truth", "truth.json", "--csv", "d.csv"]);
    assert!(o.status.success(), "{o:?}");
    let d = read_json(&dir.join("d.json"));
    assert_eq!((d["N"].as_u64(), d["M"].as_u64(), d["T"].as_u64()), (Some(2), Some(3), Some(10)));
    assert_eq!(fs::read_to_string(dir.join("d.csv")).unwrap().lines().count(), 11);
    assert!(dir.join("truth.json").exists());

    let o = run(dir, &["test", "d.json", "--emit-witness", "w.json"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("coordinating"));

    let o = run(dir, &["reconstruct", "d.json", "--witness", "w.json", "--out", "rec", "--grid", "20"]);
    assert!(o.status.success(), "{o:?}");
    for i in 1..=3 {
        let cert = read_json(&dir.join(format!("rec/certificate_agent{i}.json")));
        assert_eq!(cert["u"].as_array().unwrap().len(), 10);
        let csv = fs::read_to_string(dir.join(format!("rec/contour_agent{i}.csv"))).unwrap();
        assert_eq!(csv.lines().count(), 401);
    }
    assert!(dir.join("rec/manifest.json").exists());
}

#[test]
fn simulation_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    for name in ["a.json", "b.json"] {
        assert!(run(dir, &["simulate", "--T", "6", "--seed", "11", "--out", name]).status.success());
    }
    assert_eq!(fs::read(dir.join("a.json")).unwrap(), fs::read(dir.join("b.json")).unwrap());
}

#[test]
fn rejected_data_and_bad_input() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let cycle = r#"{"version":"1","N":2,"M":1,"T":2,"observations":[
        {"alpha":[2.0,1.0],"beta":[0.0,2.0],"beta_hat":[[0.0,2.0]]},
        {"alpha":[1.0,0.1],"beta":[0.9,0.0],"beta_hat":[[0.9,0.0]]}]}"#;
    fs::write(dir.join("cycle.json"), cycle).unwrap();
    let o = run(dir, &["test", "cycle.json"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("not-coordinating"));

    let o = run(dir, &["pipeline", "cycle.json", "--out", "p"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(read_json(&dir.join("p/verdict.json"))["decision"], "not-coordinating");

    fs::write(dir.join("broken.json"), &cycle[..40]).unwrap();
    let o = run(dir, &["test", "broken.json"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("error"));
}

#[test]
fn exhausted_budget_is_undecided() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    assert!(run(dir, &["simulate", "--T", "10", "--seed", "1", "--out", "d.json"]).status.success());
    let o = run(dir, &["test", "d.json", "--node-budget", "0"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).starts_with("undecided"));
}

#[test]
fn independent_truth_is_refused() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(tmp.path(), &["simulate", "--independent", "3", "--T", "4", "--seed", "1", "--out", "d.json", "--emit-truth", "t.json"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn montecarlo_writes_a_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let o = run(dir, &["montecarlo", "--mode", "coordinated", "--T", "5", "--trials", "4", "--seed", "9", "--out", "mc"]);
    assert_eq!(o.status.code(), Some(0), "{o:?}");
    assert!(stdout(&o).starts_with("4 trials: 4 coordinating"));
    let summary = read_json(&dir.join("mc/summary.json"));
    assert_eq!(summary["results"].as_array().unwrap().len(), 4);
    assert_eq!(fs::read_to_string(dir.join("mc/summary.csv")).unwrap().lines().count(), 5);

    fs::write(dir.join("c.json"), r#"{"mode":"independent","T":4,"trials":3,"seed":1}"#).unwrap();
    let o = run(dir, &["montecarlo", "--config", "c.json"]);
    assert!(stdout(&o).starts_with("3 trials"), "{o:?}");

    let o = run(dir, &["montecarlo", "--T", "4"]);
    assert_eq!(o.status.code(), Some(1));
}

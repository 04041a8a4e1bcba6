use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn rsp_game(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rsp-game"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn write_config(dir: &Path, name: &str, json: &str) -> String {
    fs::write(dir.join(name), json).unwrap();
    name.to_string()
}

const SMALL: &str = r#"{"cluster": {"n": 2, "capacity": 30.0}}"#;

#[test]
fn solve_writes_solution_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", SMALL);
    let out = rsp_game(&["solve", "--config", &cfg, "--q", "0.5", "--out", "res"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["instance.json", "solution.json", "solution.csv"] {
        assert!(dir.path().join("res").join(f).exists(), "{f}");
    }
    assert!(stdout(&out).contains("equilibrium"));
}

#[test]
fn sweep_then_verify_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", SMALL);
    let out = rsp_game(&["sweep", "--config", &cfg, "--q", "0.3,0.5", "--out", "a"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let again = rsp_game(&["sweep", "--config", &cfg, "--q", "0.3,0.5", "--out", "b"], dir.path());
    assert_eq!(again.status.code(), Some(0));
    let a = fs::read(dir.path().join("a/sweep.csv")).unwrap();
    assert_eq!(a, fs::read(dir.path().join("b/sweep.csv")).unwrap());
    assert!(String::from_utf8(a)
        .unwrap()
        .starts_with("q,t,segment,stat,p1,p2,pm,d1,d2,profit1,profit2"));

    let verify = rsp_game(
        &[
            "verify",
            "--config",
            &cfg,
            "--q",
            "0.5",
            "--solution",
            "a/gne_q0.5.json",
            "--out",
            "v",
        ],
        dir.path(),
    );
    assert_eq!(verify.status.code(), Some(0), "{}", stdout(&verify));
    assert!(stdout(&verify).contains("verification passed"));

    // the same file checked against another instance is rejected
    let wrong = rsp_game(
        &[
            "verify",
            "--config",
            &cfg,
            "--q",
            "0.3",
            "--solution",
            "a/gne_q0.5.json",
            "--out",
            "v",
        ],
        dir.path(),
    );
    assert_eq!(wrong.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&wrong.stderr).contains("different instance"));
}

fn edit_first(path: &Path, table: &str, value: f64) {
    let mut doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
    let map = doc[table].as_object_mut().unwrap();
    let key = map.keys().next().unwrap().clone();
    map.insert(key, serde_json::json!(value));
    fs::write(path, doc.to_string()).unwrap();
}

#[test]
fn verify_names_the_violated_constraint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", SMALL);
    let out = rsp_game(&["solve", "--config", &cfg, "--q", "0.5", "--out", "s"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let solution = dir.path().join("s/solution.json");
    for (table, value, name) in [
        ("prices", 1.5, "price bounds"),
        ("routing", -0.5, "routing nonnegativity"),
    ] {
        let edited = dir.path().join(format!("{table}.json"));
        fs::copy(&solution, &edited).unwrap();
        edit_first(&edited, table, value);
        let out = rsp_game(
            &[
                "verify",
                "--config",
                &cfg,
                "--q",
                "0.5",
                "--solution",
                edited.to_str().unwrap(),
                "--out",
                "v",
            ],
            dir.path(),
        );
        assert_eq!(out.status.code(), Some(2));
        assert!(stdout(&out).contains(&format!("FAIL {name}")), "{}", stdout(&out));
    }
}

#[test]
fn exit_codes_separate_validation_and_solver_failures() {
    let dir = tempfile::tempdir().unwrap();
    let out = rsp_game(&["sweep", "--q", "0.7"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let out = rsp_game(&["solve", "--q", "0.1,0.2"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let out = rsp_game(&["verify", "--q", "0.5"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let bad = write_config(
        dir.path(),
        "bad.json",
        r#"{"cluster": {"n": 2}, "settings": {"max_iterations": 2, "polish": false}}"#,
    );
    let out = rsp_game(&["solve", "--config", &bad, "--q", "0.3"], dir.path());
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn compare_monopoly_and_stochastic_modes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{"cluster": {"n": 2, "capacity": 30.0}, "scenarios": [{"factor": 1.0, "weight": 0.5}, {"factor": 2.0, "weight": 0.5}]}"#,
    );
    let out = rsp_game(&["compare", "--config", &cfg, "--q", "0.5", "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("o/compare.json")).unwrap()).unwrap();
    assert_eq!(report["verdict"], serde_json::json!(false));

    let out = rsp_game(&["monopoly", "--config", &cfg, "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert!(dir.path().join("o/monopoly.csv").exists());

    let out = rsp_game(&["stochastic", "--config", &cfg, "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("o/stochastic.json")).unwrap()).unwrap();
    assert_eq!(doc["scenario_weights"], serde_json::json!([0.5, 0.5]));
}

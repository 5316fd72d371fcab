use std::io::Write;
use std::path::PathBuf;
use std::process::{Command, Output, Stdio};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_pmlkit"));
    c.env_remove("PMLKIT_SEED");
    c
}

fn config(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn with_stdin(mut cmd: Command, input: &str) -> Output {
    let mut child = cmd.stdin(Stdio::piped()).stdout(Stdio::piped()).stderr(Stdio::piped()).spawn().unwrap();
    child.stdin.take().unwrap().write_all(input.as_bytes()).unwrap();
    child.wait_with_output().unwrap()
}

fn json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn help_documents_seed_variable_and_exit_codes() {
    let out = bin().arg("--help").output().unwrap();
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("PMLKIT_SEED"));
    assert!(text.contains("5 unstable system"));
}

#[test]
fn config_from_stdin() {
    let mut cmd = bin();
    cmd.args(["pml-eval", "--y", "0"]);
    let out = with_stdin(
        cmd,
        r#"{"joint": {"sigma_xx": 1, "sigma_xy": 1, "sigma_yy": 2}, "budget": {"epsilon": 6, "delta": 0.001}}"#,
    );
    let v = json(&out);
    assert!((v["result"]["leakage"].as_f64().unwrap() - 0.6931471805599453).abs() < 1e-12);
}

#[test]
fn negative_observation_flag() {
    let out = bin()
        .args(["pml-eval", "--y", "-1.5", "--config"])
        .arg(config("scalar_joint.json"))
        .output()
        .unwrap();
    assert_eq!(json(&out)["result"]["y"][0].as_f64().unwrap(), -1.5);
}

#[test]
fn exit_codes() {
    let cases = [
        (vec!["pml-eval"], r#"{"joint": {"sigma_xx": 1, "sigma_xy": 1, "sigma_yy": 2}}"#, 2),
        (vec!["pml-eval"], "not json", 2),
        (vec!["design"], r#"{"system": {"A": 0.75, "C": 1, "Q": 0.4}, "budget": {"epsilon": 1, "delta": 0.001}}"#, 4),
        (vec!["kalman"], r#"{"system": {"A": 1.0, "C": 1, "Q": 0.4, "Theta": 1}}"#, 5),
        (
            vec!["aggregate"],
            r#"{"network": {"subsystems": [{"A": 0.5, "C": 1, "Q": 1, "epsilon": 6, "delta": 0.001}]}}"#,
            2,
        ),
        (vec!["pml-eval"], r#"{"joint": {"sigma_xx": 1, "sigma_xy": 1, "sigma_yy": 1}, "budget": {"epsilon": 6, "delta": 0.001}}"#, 3),
    ];
    for (args, input, code) in cases {
        let mut cmd = bin();
        cmd.args(&args);
        let out = with_stdin(cmd, input);
        assert_eq!(out.status.code(), Some(code), "{args:?} {input}: {}", String::from_utf8_lossy(&out.stderr));
        assert!(out.stdout.is_empty());
    }
}

#[test]
fn infeasible_message_cites_the_condition() {
    let mut cmd = bin();
    cmd.arg("design");
    let out = with_stdin(cmd, r#"{"system": {"A": 0.75, "C": 1, "Q": 0.4}, "budget": {"epsilon": 1, "delta": 0.001}}"#);
    assert!(String::from_utf8_lossy(&out.stderr).contains("½F⁻¹(1−δ) < ε"));
}

#[test]
fn kalman_csv_header_and_length() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("traj.csv");
    let out = bin().args(["kalman", "--csv"]).arg(&csv).arg("--config").arg(config("kalman_scalar.json")).output().unwrap();
    let v = json(&out);
    assert!((v["result"]["p"][0][0].as_f64().unwrap() - 0.38041494320154423).abs() < 1e-9);
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("k,x,y,xhat,p"));
    assert_eq!(lines.count(), 200);
}

#[test]
fn aggregate_writes_both_series() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin().args(["aggregate", "--out"]).arg(dir.path()).arg("--config").arg(config("network.json")).output().unwrap();
    let v = json(&out);
    let thetas: Vec<f64> = (0..3).map(|i| v["result"]["subsystems"][i]["theta"][0][0].as_f64().unwrap()).collect();
    assert!(thetas[0] > thetas[1] && thetas[1] > thetas[2]);
    let text = std::fs::read_to_string(dir.path().join("aggregate.csv")).unwrap();
    assert!(text.starts_with("k,true,private\n"));
}

#[test]
fn seed_sources() {
    let run = |env: Option<&str>, flag: Option<&str>| {
        let mut cmd = bin();
        if let Some(e) = env {
            cmd.env("PMLKIT_SEED", e);
        }
        cmd.args(["verify", "--samples", "2000"]);
        if let Some(s) = flag {
            cmd.args(["--seed", s]);
        }
        let out = with_stdin(
            cmd,
            r#"{"mechanism": {"sigma_xx": 1, "c": 1, "theta": 1}, "budget": {"epsilon": 6, "delta": 0.001}, "sim": {}}"#,
        );
        json(&out)["provenance"]["seed"].as_u64().unwrap()
    };
    assert_eq!(run(None, None), 0);
    assert_eq!(run(Some("42"), None), 42);
    assert_eq!(run(Some("42"), Some("3")), 3);
}

#[test]
fn convert_examples() {
    let out = bin().args(["convert", "--from", "dp", "--to", "pml", "--config"]).arg(config("convert_dp.json")).output().unwrap();
    let eps = json(&out)["result"]["pml"]["epsilon"].as_f64().unwrap();
    assert!((eps - 2.613876590907007).abs() < 1e-8);
    let out = bin().args(["convert", "--from", "pml", "--to", "mi", "--config"]).arg(config("convert_pml.json")).output().unwrap();
    let mi = json(&out)["result"]["mi"]["epsilon_mi"].as_f64().unwrap();
    assert!((mi - 0.2931084573343168).abs() < 1e-12);
}

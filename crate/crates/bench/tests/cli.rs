use std::path::Path;
use std::process::{Command, Output};

fn sgn_opt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sgn-opt"))
        .args(args)
        .output()
        .expect("spawn sgn-opt")
}

fn write_config(dir: &Path, json: &str) -> String {
    let path = dir.join("config.json");
    std::fs::write(&path, json).unwrap();
    path.to_string_lossy().into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn unknown_method_exits_2_and_lists_valid_names() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"problem": "quadratic_toy", "methods": ["sgn", "newtonish"]}"#,
    );
    let out = dir.path().join("out");
    let o = sgn_opt(&["optimize", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("newtonish"), "{err}");
    for name in ["sgn", "dgn", "bgn", "cg_gn", "lbfgs_sgn", "sqp"] {
        assert!(err.contains(name), "missing {name} in: {err}");
    }
}

#[test]
fn malformed_config_exits_2_with_location() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "{\n  \"problem\": {\"spring_bar\": {\"nw\": \"wide\"}}\n}",
    );
    let o = sgn_opt(&[
        "optimize",
        "--config",
        &cfg,
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("line 2"), "{err}");
    assert!(err.contains("problem.spring_bar.nw"), "{err}");
}

#[test]
fn unknown_field_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"problem": {"car": {}}, "max_iter": 3}"#);
    let o = sgn_opt(&[
        "optimize",
        "--config",
        &cfg,
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("max_iter"));
}

#[test]
fn missing_config_file_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    let o = sgn_opt(&[
        "scaling",
        "--config",
        missing.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn usage_error_exits_2() {
    let o = sgn_opt(&["optimize"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn optimize_writes_traces_with_header() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"problem": {"spring_bar": {"nw": 8, "nh": 4}}, "methods": ["sgn", "dgn"], "max_iters": 20}"#,
    );
    let out = dir.path().join("out");
    let o = sgn_opt(&[
        "optimize",
        "--config",
        &cfg,
        "--out",
        out.to_str().unwrap(),
        "--jobs",
        "2",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    for m in ["sgn", "dgn"] {
        let text = std::fs::read_to_string(out.join(m).join("convergence.csv")).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "iter,f,grad_norm,step_len,dir_time_s,fwd_time_s,elapsed_s,lin_rel_residual"
        );
        assert!(text.lines().count() >= 2);
    }
    assert!(out.join("summary.json").exists());
}

#[test]
fn kkt_dump_writes_matrix_market() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"problem": {"spring_bar": {"nw": 4, "nh": 2}}}"#,
    );
    let out = dir.path().join("out");
    let o = sgn_opt(&["kkt-dump", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let mtx = std::fs::read_to_string(out.join("kkt.mtx")).unwrap();
    assert!(mtx.starts_with("%%MatrixMarket"));
    let stats: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("stats.json")).unwrap()).unwrap();
    let (n_x, n_p) = (
        stats["n_x"].as_u64().unwrap(),
        stats["n_p"].as_u64().unwrap(),
    );
    assert_eq!(stats["dimension"].as_u64().unwrap(), 2 * n_x + n_p);
    assert_eq!(stats["symmetric"], serde_json::Value::Bool(true));
}

#[test]
fn injected_sign_fault_fails_verify() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"verify": {"random_instances": 10, "iterates": 2, "spring_bar": [6, 2], "car_steps": 20,
            "cloth_side": 3, "cloth_steps": 3, "newton_points": 4, "fd_points": 1}}"#,
    );
    let out = dir.path().join("out");
    let o = sgn_opt(&[
        "verify",
        "--config",
        &cfg,
        "--out",
        out.to_str().unwrap(),
        "--inject-fault",
        "sgn-sign",
    ]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("FAILED sgn_vs_dgn"), "{err}");
    assert!(err.contains("worst discrepancy"), "{err}");
}

#[test]
fn unknown_fault_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = sgn_opt(&[
        "verify",
        "--out",
        dir.path().to_str().unwrap(),
        "--inject-fault",
        "everything",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

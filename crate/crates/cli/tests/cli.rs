use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_planeflow")).args(args).output().unwrap()
}

fn stderr_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stderr).unwrap()
}

#[test]
fn json_output_is_byte_identical_across_runs() {
    for args in [
        &["links", "catalog:hopf_normal_form"][..],
        &["simulate", "catalog:s3_gradient"],
        &["contact-check", "catalog:s3_tight_form"],
    ] {
        let a = run(args);
        let b = run(args);
        assert!(a.status.success(), "{args:?}");
        assert_eq!(a.stdout, b.stdout, "{args:?}");
    }
}

#[test]
fn exported_scene_reproduces_the_catalog_run() {
    let dir = tempfile::tempdir().unwrap();
    let export = run(&["export", "catalog:sn_normal_form", "--param", "a=0.5"]);
    assert!(export.status.success());
    let path = dir.path().join("scene.json");
    std::fs::write(&path, &export.stdout).unwrap();
    let from_file = run(&["links", path.to_str().unwrap()]);
    let from_catalog = run(&["links", "catalog:sn_normal_form", "--param", "a=0.5"]);
    assert!(from_file.status.success());
    let strip = |o: &Output| {
        let mut v: Value = serde_json::from_slice(&o.stdout).unwrap();
        v.as_object_mut().unwrap().remove("scene");
        v
    };
    assert_eq!(strip(&from_file)["curves"], strip(&from_catalog)["curves"]);
}

#[test]
fn out_directory_receives_all_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["links", "catalog:s3_gradient", "--out", dir.path().to_str().unwrap(), "--format", "svg"]);
    assert!(out.status.success());
    assert!(String::from_utf8(out.stdout).unwrap().starts_with("<svg"));
    for ext in ["json", "csv", "svg"] {
        assert!(dir.path().join(format!("links.{ext}")).is_file(), "{ext}");
    }
    let csv = std::fs::read_to_string(dir.path().join("links.csv")).unwrap();
    assert!(csv.lines().count() > 10);
}

#[test]
fn validation_errors_exit_with_code_two() {
    for args in [
        &["links", "catalog:no_such_system"][..],
        &["links", "catalog:sn_normal_form", "--param", "a=0"],
        &["links", "catalog:s3_gradient", "--axes", "0,9"],
        &["rhd", "preset:nope"],
        &["knots", "--enumerate", "--nodes", "1", "--coeff", "0"],
    ] {
        let out = run(args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        let err = stderr_json(&out);
        assert_eq!(err["class"], "validation", "{args:?}");
        assert!(err["error"].is_string() && err["message"].is_string());
    }
}

#[test]
fn malformed_scene_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, r#"{"chart": {"kind": "sphere"}, "one_form": ["1"], "potential": "x1", "bogus": 1}"#).unwrap();
    let out = run(&["links", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn invalid_rhd_lists_violations() {
    let dir = tempfile::tempdir().unwrap();
    let rhd = planeflow::handles::preset("t3", &Default::default()).unwrap();
    let mut broken = serde_json::to_value(&rhd).unwrap();
    broken["handles"].as_array_mut().unwrap().retain(|h| h["index"] != 0);
    let path = dir.path().join("broken.json");
    std::fs::write(&path, serde_json::to_string(&broken).unwrap()).unwrap();
    let out = run(&["rhd", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_json(&out);
    assert_eq!(err["error"], "InvalidRHD");
    assert!(!err["detail"].as_array().unwrap().is_empty());
}

#[test]
fn knots_round_trip_through_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("k.json");
    std::fs::write(
        &path,
        r#"{"kind": "sum", "terms": [{"kind": "unknot"}, {"kind": "cable", "p": 2, "q": 3, "of": {"kind": "unknot"}}]}"#,
    )
    .unwrap();
    let out = run(&["knots", "--canonicalize", path.to_str().unwrap()]);
    assert!(out.status.success());
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["canonical"]["expr"]["kind"], "cable");
    let listed: Value = serde_json::from_slice(&run(&["knots", "--enumerate", "--nodes", "1", "--coeff", "2"]).stdout).unwrap();
    assert_eq!(listed["count"], 10);
}

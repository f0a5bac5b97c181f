use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use statemorph::io::state_set_json;
use statemorph::suites::{instance_rng, pure_instance};
use tempfile::TempDir;

const ZERO_PLUS: &str = r#"{"dim": 2, "states": [
    {"kind": "pure", "data": [[1, 0], [0, 0]]},
    {"kind": "pure", "data": [[0.7071067811865476, 0], [0.7071067811865476, 0]]}
]}"#;

const ORTHONORMAL: &str = r#"{"dim": 2, "states": [
    {"kind": "pure", "data": [[1, 0], [0, 0]]},
    {"kind": "pure", "data": [[0, 0], [1, 0]]}
]}"#;

const OVERLAP_09: &str = r#"{"dim": 2, "states": [
    {"kind": "pure", "data": [[1, 0], [0, 0]]},
    {"kind": "pure", "data": [[0.9, 0], [0.4358898943540674, 0]]}
]}"#;

fn statemorph(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_statemorph"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).expect("report is JSON")
}

struct Files(TempDir);

impl Files {
    fn new() -> Self {
        Files(tempfile::tempdir().unwrap())
    }

    fn put(&self, name: &str, text: &str) -> String {
        let p = self.0.path().join(name);
        std::fs::write(&p, text).unwrap();
        p.display().to_string()
    }

    fn path(&self, name: &str) -> PathBuf {
        self.0.path().join(name)
    }
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn identical_files_are_feasible() {
    let f = Files::new();
    let a = f.put("a.json", ZERO_PLUS);
    let b = f.put("b.json", ZERO_PLUS);
    let o = statemorph(&["check", &a, &b]);
    assert_eq!(code(&o), 0);
    assert_eq!(json(&o)["verdict"], "feasible");
}

#[test]
fn lower_target_fidelity_is_infeasible() {
    let f = Files::new();
    let a = f.put("a.json", ZERO_PLUS);
    let b = f.put("b.json", ORTHONORMAL);
    let o = statemorph(&["check", &a, &b]);
    assert_eq!(code(&o), 1);
    let r = json(&o);
    assert_eq!(r["verdict"], "infeasible");
    assert_eq!(r["witness"]["kind"], "violating-pair");
    assert!(r["diagnostics"][0].as_str().unwrap().contains("never decrease fidelity"));
}

#[test]
fn verify_flag_adds_oracle_cross_check() {
    let f = Files::new();
    let a = f.put("a.json", ORTHONORMAL);
    let b = f.put("b.json", ZERO_PLUS);
    let o = statemorph(&["check", &a, &b, "--verify"]);
    let r = json(&o);
    assert_eq!(code(&o), 0);
    assert_eq!(r["cross_check"]["oracle"]["verdict"], "feasible");
    assert!(r.get("wall_time_s").is_none());
    let timed = json(&statemorph(&["check", &a, &b, "--timing"]));
    assert!(timed["wall_time_s"].is_number());
}

#[test]
fn pure_and_choi_methods_agree_on_exit_codes() {
    let f = Files::new();
    let mut compared = 0;
    for i in 0..30 {
        let (a, b) = pure_instance(&mut instance_rng(99, 1, i));
        let pa = f.put("a.json", &state_set_json(&a).to_string());
        let pb = f.put("b.json", &state_set_json(&b).to_string());
        let pure = statemorph(&["check", &pa, &pb, "--method", "pure"]);
        let choi = statemorph(&["check", &pa, &pb, "--method", "choi"]);
        let (rp, rc) = (json(&pure), json(&choi));
        if rp["boundary"] == true || rc["verdict"] == "indeterminate" {
            continue;
        }
        assert_eq!(code(&pure), code(&choi), "instance {i}: {rp} vs {rc}");
        compared += 1;
    }
    assert!(compared >= 10);
}

#[test]
fn gram_matrices() {
    let f = Files::new();
    let o = statemorph(&["gram", &f.put("o.json", ORTHONORMAL)]);
    assert_eq!(code(&o), 0);
    let g = json(&o);
    assert_eq!(g, serde_json::json!([[[1, 0], [0, 0]], [[0, 0], [1, 0]]]));
    let o = statemorph(&["gram", &f.put("zp.json", ZERO_PLUS)]);
    assert!(stdout(&o).contains("0.707106781187"));
}

#[test]
fn canonical_gram_ignores_global_phases() {
    let f = Files::new();
    let plain = f.put("p.json", ZERO_PLUS);
    let phased = f.put(
        "q.json",
        r#"{"dim": 2, "states": [
            {"kind": "pure", "data": [[0, 1], [0, 0]]},
            {"kind": "pure", "data": [[-0.7071067811865476, 0], [-0.7071067811865476, 0]]}
        ]}"#,
    );
    let x = statemorph(&["gram", &plain, "--canonical"]);
    let y = statemorph(&["gram", &phased, "--canonical"]);
    assert_eq!(code(&x), 0);
    assert_eq!(x.stdout, y.stdout);
    let bad = f.put(
        "bad.json",
        r#"{"dim": 2, "states": [
            {"kind": "pure", "data": [[1, 0], [0, 0]]},
            {"kind": "pure", "data": [[0, 0], [1, 0]]},
            {"kind": "pure", "data": [[0.6, 0], [0.8, 0]]}
        ]}"#,
    );
    let o = statemorph(&["gram", &bad, "--canonical"]);
    assert_eq!(code(&o), 3);
    assert!(!o.stderr.is_empty());
}

#[test]
fn gram_rejects_mixed_members() {
    let f = Files::new();
    let m = f.put(
        "m.json",
        r#"{"dim": 2, "states": [{"kind": "mixed", "data": [[[0.5, 0], [0, 0]], [[0, 0], [0.5, 0]]]}]}"#,
    );
    assert_eq!(code(&statemorph(&["gram", &m])), 3);
}

#[test]
fn helstrom_examples() {
    let f = Files::new();
    let orth = f.put("o.json", ORTHONORMAL);
    let same = f.put(
        "s.json",
        r#"{"dim": 2, "states": [
            {"kind": "pure", "data": [[1, 0], [0, 0]]},
            {"kind": "pure", "data": [[1, 0], [0, 0]]}
        ]}"#,
    );
    let zp = f.put("zp.json", ZERO_PLUS);
    assert_eq!(stdout(&statemorph(&["helstrom", &orth, "--priors", "0.5", "0.5"])), "0\n");
    assert_eq!(stdout(&statemorph(&["helstrom", &same, "--priors", "0.3", "0.7"])), "0.3\n");
    assert_eq!(stdout(&statemorph(&["helstrom", &zp, "--priors", "0.5", "0.5"])), "0.146446609407\n");
    assert_eq!(code(&statemorph(&["helstrom", &zp, "--priors", "0.6", "0.6"])), 3);
    assert_eq!(code(&statemorph(&["helstrom", &zp, "--priors", "-0.5", "1.5"])), 3);
}

#[test]
fn input_errors_exit_3() {
    let f = Files::new();
    let good = f.put("g.json", ZERO_PLUS);
    let broken = f.put("b.json", r#"{"dim": 2, "states": [{"kind": "pure", "data": [[1, 0]"#);
    let o = statemorph(&["check", &good, &broken]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("b.json"));
    assert_eq!(code(&statemorph(&["check", &good, "/nonexistent/file.json"])), 3);
    assert_eq!(code(&statemorph(&["check", &good, &good, "--method", "magic"])), 3);
    assert_eq!(code(&statemorph(&["frobnicate"])), 3);
    assert_eq!(code(&statemorph(&["--help"])), 0);
    let three = f.put(
        "t.json",
        r#"{"dim": 2, "states": [
            {"kind": "pure", "data": [[1, 0], [0, 0]]},
            {"kind": "pure", "data": [[0, 0], [1, 0]]},
            {"kind": "pure", "data": [[0.6, 0], [0.8, 0]]}
        ]}"#,
    );
    assert_eq!(code(&statemorph(&["check", &good, &three])), 3);
}

#[test]
fn construct_identity_and_reverify() {
    let f = Files::new();
    let a = f.put("a.json", ZERO_PLUS);
    let out = f.path("channel.json");
    let o = statemorph(&["construct", &a, &a, "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let ch: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(ch["kind"], "channel");
    let kraus = ch["kraus"].as_array().unwrap();
    assert_eq!(kraus.len(), 1);
    for (i, row) in kraus[0].as_array().unwrap().iter().enumerate() {
        for (j, z) in row.as_array().unwrap().iter().enumerate() {
            let (re, im) = (z[0].as_f64().unwrap(), z[1].as_f64().unwrap());
            let expect = if i == j { 1.0 } else { 0.0 };
            assert!((re - expect).abs() < 1e-9 && im.abs() < 1e-9);
        }
    }
    let v = statemorph(&["verify", &a, &a, "--witness", s(&out)]);
    assert_eq!(code(&v), 0);
    assert_eq!(json(&v)["passed"], true);
    let other = f.put("o.json", ORTHONORMAL);
    assert_eq!(code(&statemorph(&["verify", &a, &other, "--witness", s(&out)])), 1);
}

#[test]
fn construct_refuses_infeasible_instances() {
    let f = Files::new();
    let a = f.put("a.json", ZERO_PLUS);
    let b = f.put("b.json", ORTHONORMAL);
    let out = f.path("never.json");
    assert_eq!(code(&statemorph(&["construct", &a, &b, "--out", s(&out)])), 1);
    assert!(!out.exists());
}

#[test]
fn unambiguous_instrument() {
    let f = Files::new();
    let a = f.put("a.json", OVERLAP_09);
    let b = f.put("b.json", ORTHONORMAL);
    let probs = f.put("p.json", r#"{"matrix": [[0.1], [0.1]]}"#);
    let out = f.path("inst.json");
    let o = statemorph(&["construct", &a, &b, "--probs", &probs, "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let inst: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(inst["kind"], "instrument");
    assert_eq!(inst["probabilities"], serde_json::json!([[0.1], [0.1]]));
    assert_eq!(inst["outcomes"].as_array().unwrap().len(), 1);
    assert_eq!(code(&statemorph(&["verify", &a, &b, "--witness", s(&out)])), 0);

    let r = json(&statemorph(&["multiprob", &a, &b, "--probs", &probs]));
    assert_eq!(r["verdict"], "feasible");
    assert_eq!(r["mode"], "subnormalized");
    let too_much = f.put("q.json", r#"{"matrix": [[0.2], [0.2]]}"#);
    assert_eq!(code(&statemorph(&["multiprob", &a, &b, "--probs", &too_much])), 1);
}

#[test]
fn selftest_with_no_instances() {
    let o = statemorph(&["selftest", "--instances", "0"]);
    assert_eq!(code(&o), 0);
    let r = json(&o);
    assert_eq!(r["passed"], true);
    for suite in r["suites"].as_array().unwrap() {
        assert_eq!(suite["checked"], 0);
    }
}

#[test]
fn selftest_is_deterministic() {
    let x = statemorph(&["selftest", "--seed", "5", "--instances", "8"]);
    let y = statemorph(&["selftest", "--seed", "5", "--instances", "8"]);
    assert_eq!(code(&x), 0);
    assert_eq!(x.stdout, y.stdout);
}

use std::fs;
use std::process::{Command, Output};

use serde_json::Value;

fn corrlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_corrlab"))
        .args(args)
        .env_remove("CORRLAB_TOL_PROFILE")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).expect("utf-8")
}

fn machine(args: &[&str]) -> (Value, i32) {
    let mut full = vec!["--format", "machine"];
    full.extend_from_slice(args);
    let o = corrlab(&full);
    let v = serde_json::from_str(stdout(&o).trim()).expect("one JSON record");
    (v, o.status.code().unwrap())
}

#[test]
fn analyze_chsh() {
    let (r, code) = machine(&["analyze", "chsh"]);
    assert_eq!(code, 0);
    assert_eq!(r["membership"]["member"], true);
    assert_eq!(r["extremality"]["status"], "Extreme");
    assert_eq!(r["exposedness"]["status"], "Exposed");
    assert_eq!(r["locality"]["local"], false);
    assert_eq!(r["self_test"], true);
    assert!(r["tolerances"]["rank_rel"].is_f64());
    assert!(r["timings"]["membership"].as_f64().unwrap() >= 0.0);
}

#[test]
fn analyze_inline_expressions_match_named() {
    let (a, _) = machine(&[
        "analyze",
        "[[1/sqrt(2), 1/sqrt(2)], [1/sqrt(2), -1/sqrt(2)]]",
    ]);
    let (b, _) = machine(&["analyze", "chsh"]);
    let entries = |v: &Value| -> Vec<f64> {
        v["input"]["c"]
            .as_array()
            .unwrap()
            .iter()
            .map(|x| x.as_f64().unwrap())
            .collect()
    };
    for (x, y) in entries(&a).iter().zip(entries(&b)) {
        assert!((x - y).abs() <= f64::EPSILON);
    }
    assert_eq!(a["extremality"]["status"], b["extremality"]["status"]);
}

#[test]
fn analyze_zero_is_local_and_not_extreme() {
    let (r, code) = machine(&["analyze", "[[0,0],[0,0]]"]);
    assert_eq!(code, 0);
    assert_eq!(r["membership"]["member"], true);
    assert_eq!(r["extremality"]["status"], "NotExtreme");
    assert_eq!(r["locality"]["local"], true);
    assert!(r["exposedness"].is_null());
}

#[test]
fn analyze_pr_box_exits_3_with_violated_cycle() {
    let o = corrlab(&["analyze", "[[1,1],[1,-1]]"]);
    assert_eq!(o.status.code(), Some(3));
    let text = stdout(&o);
    assert!(text.contains("not a member"));
    assert!(
        text.contains("violated: θ[1,1] + θ[1,2] + θ[2,1] - θ[2,2] >= 0"),
        "{text}"
    );
    let (r, code) = machine(&["analyze", "pr_box"]);
    assert_eq!(code, 3);
    assert_eq!(r["membership"]["violated"].as_array().unwrap().len(), 1);
}

#[test]
fn parse_errors_exit_2() {
    for bad in ["[[1,2]", "[[2,0],[0,0]]", "[[1,foo]]", "no_such_instance"] {
        let o = corrlab(&["analyze", bad]);
        assert_eq!(o.status.code(), Some(2), "{bad}");
        assert!(o.stdout.is_empty());
        assert!(!o.stderr.is_empty());
    }
    assert_eq!(
        corrlab(&["analyze", "mayers_yao", "--method", "analytic"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        corrlab(&["analyze", "chsh", "--rank-tol", "-1"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(corrlab(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn tolerance_profile_from_environment() {
    let o = Command::new(env!("CARGO_BIN_EXE_corrlab"))
        .args(["--format", "machine", "analyze", "chsh"])
        .env("CORRLAB_TOL_PROFILE", "strict")
        .output()
        .unwrap();
    let r: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(r["tolerances"]["rank_rel"], 1e-9);
    let o = Command::new(env!("CARGO_BIN_EXE_corrlab"))
        .args(["analyze", "chsh"])
        .env("CORRLAB_TOL_PROFILE", "lenient")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    let (r, _) = machine(&[
        "analyze",
        "chsh",
        "--tight-tol",
        "1e-9",
        "--gap-tol",
        "1e-10",
    ]);
    assert_eq!(r["tolerances"]["tight_abs"], 1e-9);
    assert_eq!(r["tolerances"]["sdp_gap"], 1e-10);
}

#[test]
fn machine_output_reserializes_idempotently() {
    for input in [
        "chsh",
        "mayers_yao",
        "tilted_example3",
        "[[0.3,0.1,0],[0.2,-0.4,0.5]]",
    ] {
        let o = corrlab(&["--format", "machine", "analyze", input]);
        let line = stdout(&o);
        assert_eq!(line.lines().count(), 1);
        let v: Value = serde_json::from_str(&line).unwrap();
        let once = serde_json::to_string(&v).unwrap();
        let w: Value = serde_json::from_str(&once).unwrap();
        assert_eq!(v, w);
        assert_eq!(serde_json::to_string(&w).unwrap(), once);
    }
}

#[test]
fn matrix_files() {
    let dir = tempfile::tempdir().unwrap();
    let ws = dir.path().join("m.txt");
    fs::write(&ws, "0.5 0.5\n0.5 -1\n").unwrap();
    let rec = dir.path().join("m.json");
    fs::write(&rec, r#"{"n":2,"m":2,"c":[0.5,0.5,0.5,-1]}"#).unwrap();
    let (a, code) = machine(&["analyze", ws.to_str().unwrap()]);
    assert_eq!(code, 0);
    let (b, _) = machine(&["analyze", rec.to_str().unwrap()]);
    assert_eq!(a["input"], b["input"]);
    assert_eq!(a["extremality"]["status"], "Extreme");
    assert_eq!(a["self_test"], true);
}

#[test]
fn generate_is_deterministic() {
    let a = stdout(&corrlab(&["generate", "--count", "3", "--seed", "42"]));
    let b = stdout(&corrlab(&["generate", "--count", "3", "--seed", "42"]));
    assert_eq!(a, b);
    assert_eq!(a.lines().count(), 3);
    let c = stdout(&corrlab(&["generate", "--count", "3", "--seed", "43"]));
    assert_ne!(a, c);
    for line in a.lines() {
        let v: Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["n"], 2);
        assert_eq!(v["c"].as_array().unwrap().len(), 4);
    }
}

#[test]
fn generate_rejects_zero_and_bad_paths() {
    assert_eq!(
        corrlab(&["generate", "--count", "0"]).status.code(),
        Some(2)
    );
    let o = corrlab(&[
        "generate",
        "--count",
        "1",
        "--out",
        "/nonexistent/dir/x.jsonl",
    ]);
    assert_eq!(o.status.code(), Some(5));
}

#[test]
fn batch_over_generated_instances() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.jsonl");
    let o = corrlab(&[
        "generate",
        "--count",
        "200",
        "--seed",
        "7",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let p = path.to_str().unwrap();

    let o = corrlab(&["--format", "machine", "batch", p]);
    assert_eq!(o.status.code(), Some(0));
    let lines: Vec<Value> = stdout(&o)
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let (summary, records) = lines.split_last().unwrap();
    assert_eq!(records.len(), 200);
    for (k, r) in records.iter().enumerate() {
        assert_eq!(r["index"], k);
        assert_eq!(r["line"], k + 1);
    }
    assert_eq!(summary["counts"]["Extreme"], 200);
    assert_eq!(summary["counts"]["Inconclusive"], 0);

    let o = corrlab(&["--format", "machine", "batch", p, "--mode", "exposedness"]);
    let last = stdout(&o).lines().last().unwrap().to_string();
    let summary: Value = serde_json::from_str(&last).unwrap();
    assert!(summary["counts"]["Exposed"].as_u64().unwrap() >= 198);
}

#[test]
fn batch_counts_match_verdicts_and_skip_malformed() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("b.txt");
    fs::write(
        &path,
        "{\"n\":2}\n\n[[0.5,0.5],[0.5,-1]]\n[[1,1],[1,-1]]\n[[0,0],[0,0]]\nnot a matrix\n",
    )
    .unwrap();
    let o = corrlab(&["--format", "machine", "batch", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(
        String::from_utf8_lossy(&o.stderr)
            .matches("warning")
            .count(),
        2
    );
    let lines: Vec<Value> = stdout(&o)
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let (summary, records) = lines.split_last().unwrap();
    assert_eq!(summary["skipped"], 2);
    assert_eq!(summary["total"], 3);
    let verdicts: Vec<&str> = records
        .iter()
        .map(|r| r["verdict"].as_str().unwrap())
        .collect();
    assert_eq!(verdicts, ["Extreme", "NotMember", "NotExtreme"]);
    let counts = summary["counts"].as_object().unwrap();
    for (k, v) in counts {
        let n = verdicts.iter().filter(|x| *x == k).count();
        assert_eq!(v.as_u64().unwrap() as usize, n, "{k}");
    }
}

#[test]
fn batch_empty_and_missing_files() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.txt");
    fs::write(&path, "").unwrap();
    let o = corrlab(&["batch", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("total 0, skipped 0, Extreme 0, Inconclusive 0, NotExtreme 0"));
    assert_eq!(
        corrlab(&["batch", "/nonexistent/file"]).status.code(),
        Some(5)
    );
}

#[test]
fn support_values() {
    let (r, code) = machine(&["support", "[[1,1],[1,-1]]"]);
    assert_eq!(code, 0);
    assert!((r["value"].as_f64().unwrap() - 2.0 * 2f64.sqrt()).abs() < 1e-6);
    let (r, _) = machine(&["support", "[[0,0],[0,0]]"]);
    assert!(r["value"].as_f64().unwrap().abs() < 1e-8);
    let (r, _) = machine(&[
        "support",
        "[[-12*sqrt(2), 4, -4*sqrt(2)], [4, -12*sqrt(2), -4*sqrt(2)], [-4*sqrt(2), -4*sqrt(2), 2*(2-3*sqrt(2))]]",
    ]);
    let want = 6.0 * (5.0 * 2f64.sqrt() + 2.0);
    assert!((r["value"].as_f64().unwrap() - want).abs() < 1e-5);
    // Coefficients outside [-1, 1] are fine for functionals.
    let (r, _) = machine(&["support", "[[3]]"]);
    assert!((r["value"].as_f64().unwrap() - 3.0).abs() < 1e-7);
}

#[test]
fn complete_prints_completion_and_interval() {
    let o = corrlab(&["complete", "tilted_example3"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("completion (Unique, unique true)"));
    assert!(text.contains("interval:"));
    let (r, _) = machine(&["complete", "[[0,0],[0,0]]"]);
    let i = &r["interval"];
    assert!(i["lo"].as_f64().unwrap().abs() < 1e-12);
    assert!((i["hi"].as_f64().unwrap() - std::f64::consts::PI).abs() < 1e-12);
    assert_eq!(corrlab(&["complete", "pr_box"]).status.code(), Some(3));
}

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn oosr2(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_oosr2"))
        .args(args)
        .current_dir(dir)
        .env_remove("OOSR2_THREADS")
        .output()
        .expect("spawn oosr2")
}

fn write_data(dir: &Path, noise: f64) {
    let mut s = String::from("y,x1,x2\n");
    for i in 0..40 {
        let a = ((i * 37) % 17) as f64 / 17.0 - 0.5;
        let b = ((i * 11) % 13) as f64 / 13.0 - 0.5;
        let e = noise * (((i * 29) % 23) as f64 / 23.0 - 0.5);
        s.push_str(&format!("{},{a},{b}\n", 1.0 + 2.0 * a - b + e));
    }
    std::fs::write(dir.join("data.csv"), s).unwrap();
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn analyze_writes_a_report() {
    let dir = tempfile::tempdir().unwrap();
    write_data(dir.path(), 1.0);
    let out = oosr2(&["analyze", "data.csv", "--outcome", "y", "--repeats", "5", "--format", "json"], dir.path());
    let v = json(&out);
    let r2 = v["r2"].as_f64().unwrap();
    let (lo, hi) = (v["ci"]["lower"].as_f64().unwrap(), v["ci"]["upper"].as_f64().unwrap());
    assert!(r2 > 0.5 && r2 < 1.0, "{r2}");
    assert!(lo < r2 && r2 < hi);
    assert_eq!(v["n"], 40);
    assert_eq!(v["p"], 2);
}

#[test]
fn noiseless_outcome_gives_r2_one() {
    let dir = tempfile::tempdir().unwrap();
    write_data(dir.path(), 0.0);
    let out = oosr2(&["analyze", "data.csv", "--outcome", "0", "--repeats", "3", "--format", "json"], dir.path());
    let v = json(&out);
    assert!((v["r2"].as_f64().unwrap() - 1.0).abs() < 1e-9);
}

#[test]
fn output_is_reproducible_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    write_data(dir.path(), 1.0);
    let run = |t: &str| {
        let out = oosr2(
            &["--threads", t, "analyze", "data.csv", "--outcome", "y", "--repeats", "4", "--rho", "npboot", "--format", "json"],
            dir.path(),
        );
        assert!(out.status.success());
        out.stdout
    };
    assert_eq!(run("1"), run("3"));
}

#[test]
fn comparing_a_report_with_itself() {
    let dir = tempfile::tempdir().unwrap();
    write_data(dir.path(), 1.0);
    let out = oosr2(&["analyze", "data.csv", "--outcome", "y", "--repeats", "3", "--format", "json"], dir.path());
    std::fs::write(dir.path().join("a.json"), &out.stdout).unwrap();
    let v = json(&oosr2(&["compare", "--across", "a.json", "a.json", "--format", "json"], dir.path()));
    assert_eq!(v["difference"].as_f64(), Some(0.0));
    assert_eq!(v["p_two_sided"].as_f64(), Some(1.0));
}

#[test]
fn bad_inputs_exit_with_status_two() {
    let dir = tempfile::tempdir().unwrap();
    write_data(dir.path(), 1.0);
    std::fs::write(dir.path().join("bad.json"), "{\"r2\": 0.3}").unwrap();
    std::fs::write(dir.path().join("short.csv"), "y,x\n1,2\n3,4\n").unwrap();
    std::fs::write(dir.path().join("text.csv"), "y,x\n1,2\n3,abc\n4,5\n6,7\n").unwrap();
    let cases: &[&[&str]] = &[
        &["compare", "--across", "bad.json", "bad.json"],
        &["analyze", "missing.csv", "--outcome", "y"],
        &["analyze", "short.csv", "--outcome", "y"],
        &["analyze", "text.csv", "--outcome", "y"],
        &["analyze", "data.csv", "--outcome", "nope"],
        &["analyze", "data.csv", "--outcome", "y", "--folds", "1"],
        &["analyze", "data.csv", "--outcome", "y", "--alpha", "1.5"],
        &["--threads", "0", "analyze", "data.csv", "--outcome", "y"],
    ];
    for args in cases {
        let out = oosr2(args, dir.path());
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        assert!(!out.stderr.is_empty());
    }
}

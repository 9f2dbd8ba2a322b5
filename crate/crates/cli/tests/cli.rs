use serde_json::Value;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn benchmark() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../models/benchmark.json")
}

fn qefsynth(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qefsynth")).args(args).env_remove("QEFSYNTH_THREADS").output().unwrap()
}

fn report(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

fn matrix(v: &Value) -> Vec<Vec<f64>> {
    let rows = v["rows"].as_u64().unwrap() as usize;
    let cols = v["cols"].as_u64().unwrap() as usize;
    let data: Vec<Vec<f64>> = v["data"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect())
        .collect();
    assert_eq!(data.len(), rows);
    assert!(data.iter().all(|r| r.len() == cols));
    data
}

fn frobenius(m: &[Vec<f64>]) -> f64 {
    m.iter().flatten().map(|x| x * x).sum::<f64>().sqrt()
}

#[test]
fn validate_benchmark() {
    let out = qefsynth(&["validate", benchmark().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    assert_eq!(r["status"], "ok");
    assert!(r["pr_residual"].as_f64().unwrap() < 1e-12);
    assert_eq!(r["hurwitz"], true);
    assert_eq!(r["spectral_condition"]["admissible"], true);
    assert_eq!(r["dims"]["r"], 4);
}

#[test]
fn analyze_requires_positive_theta() {
    let out = qefsynth(&["analyze", benchmark().to_str().unwrap(), "--theta", "0"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(report(&out)["reason"], "usage");
    let out = qefsynth(&["analyze", benchmark().to_str().unwrap(), "--theta", "-1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn analyze_mean_square_and_routes() {
    let model = benchmark();
    let ms = report(&qefsynth(&["analyze", model.to_str().unwrap(), "--mean-square"]));
    let star = ms["upsilon_star"].as_f64().unwrap();
    assert!(star > 0.0);
    let r = report(&qefsynth(&["analyze", model.to_str().unwrap()]));
    let (u, ud) = (r["upsilon"].as_f64().unwrap(), r["upsilon_d"].as_f64().unwrap());
    assert!((u - ud).abs() <= 1e-8 * u.abs());
    assert_eq!(r["upsilon_star"].as_f64().unwrap(), star);
    assert!(u > 0.2 * star);
}

#[test]
fn analyze_csv_matches_help() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("nodes.csv");
    let out = qefsynth(&["analyze", benchmark().to_str().unwrap(), "--csv", csv.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let help = String::from_utf8(qefsynth(&["analyze", "--help"]).stdout).unwrap();
    for col in &header {
        assert!(help.contains(col), "{col} undocumented");
    }
    let mut prev = f64::NEG_INFINITY;
    let mut rows = 0;
    for line in lines {
        let v: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        assert_eq!(v.len(), header.len());
        assert!(v.iter().all(|x| x.is_finite()));
        assert!(v[0] > prev);
        assert!(v[3] > 0.0);
        prev = v[0];
        rows += 1;
    }
    assert!(rows > 10 && rows % 2 == 0);
}

#[test]
fn grad_report_is_consistent() {
    let r = report(&qefsynth(&["grad", benchmark().to_str().unwrap()]));
    let d_r2 = matrix(&r["dR2"]);
    for i in 0..d_r2.len() {
        for j in 0..d_r2.len() {
            assert_eq!(d_r2[i][j], d_r2[j][i]);
        }
    }
    let sum = frobenius(&d_r2) + frobenius(&matrix(&r["dM2"])) + frobenius(&matrix(&r["dL2"]));
    assert!((sum - r["residual"].as_f64().unwrap()).abs() < 1e-12);
    assert_eq!(matrix(&r["chi"]["A"]).len(), 4);
    assert_eq!(matrix(&r["chi"]["B"])[0].len(), 4);
    assert_eq!(matrix(&r["chi"]["C"]).len(), 4);
}

#[test]
fn crosscheck_benchmark_passes() {
    let out = qefsynth(&["crosscheck", benchmark().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    assert_eq!(r["pass"], true);
    for b in ["A", "B", "C"] {
        assert!(r["blocks"][b]["scaled_delta"].as_f64().unwrap() < 1e-5);
    }
}

#[test]
fn optimize_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let run = |sub: &str| {
        let out_dir = dir.path().join(sub);
        let out = qefsynth(&[
            "optimize",
            benchmark().to_str().unwrap(),
            "--max-iters",
            "6",
            "--seed",
            "3",
            "--out",
            out_dir.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        (
            std::fs::read(out_dir.join("trace.jsonl")).unwrap(),
            std::fs::read(out_dir.join("model.json")).unwrap(),
            out_dir,
        )
    };
    let (ta, ma, da) = run("a");
    let (tb, mb, _) = run("b");
    assert_eq!(ta, tb);
    assert_eq!(ma, mb);
    let lines: Vec<Value> = String::from_utf8(ta).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let risk: Vec<&Value> = lines.iter().filter(|l| l["stage"] == "risk").collect();
    assert_eq!(risk.len(), 7);
    for w in risk.windows(2) {
        assert!(w[1]["cost"].as_f64().unwrap() <= w[0]["cost"].as_f64().unwrap());
        assert!(w[1]["margin"].as_f64().unwrap() > 0.0);
    }
    let v = qefsynth(&["validate", da.join("model.json").to_str().unwrap()]);
    assert_eq!(v.status.code(), Some(0));
}

#[test]
fn optimize_weighted_scheme() {
    let dir = tempfile::tempdir().unwrap();
    let out = qefsynth(&[
        "optimize",
        benchmark().to_str().unwrap(),
        "--scheme",
        "weighted",
        "--outer",
        "2",
        "--max-iters",
        "20",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(&out);
    assert_eq!(r["outer_steps"], 2);
    let trace = std::fs::read_to_string(dir.path().join("trace.jsonl")).unwrap();
    assert_eq!(trace.lines().filter(|l| l.contains("\"weighted\"")).count(), 2);
}

#[test]
fn error_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{ not json").unwrap();
    let out = qefsynth(&["validate", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(report(&out)["reason"], "parse_error");
    assert_eq!(qefsynth(&["validate", dir.path().join("missing.json").to_str().unwrap()]).status.code(), Some(2));

    let out = qefsynth(&["analyze", benchmark().to_str().unwrap(), "--theta", "5"]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(report(&out)["reason"], "spectral_condition");

    let mut m: Value = serde_json::from_str(&std::fs::read_to_string(benchmark()).unwrap()).unwrap();
    let zero = serde_json::json!({ "rows": 2, "cols": 2, "data": [[0.0, 0.0], [0.0, 0.0]] });
    m["controller_init"]["M2"] = zero.clone();
    m["controller_init"]["L2"] = zero;
    let unstable = dir.path().join("unstable.json");
    std::fs::write(&unstable, m.to_string()).unwrap();
    let out = qefsynth(&["validate", unstable.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(report(&out)["reason"], "not_hurwitz");

    m["weights"]["N"] = serde_json::json!({ "rows": 1, "cols": 2, "data": [[1.0, 0.0]] });
    let wrong = dir.path().join("wrong.json");
    std::fs::write(&wrong, m.to_string()).unwrap();
    assert_eq!(qefsynth(&["validate", wrong.to_str().unwrap()]).status.code(), Some(3));
}

#[test]
fn thread_environment_overrides_flag() {
    let model = benchmark();
    let base = report(&qefsynth(&["analyze", model.to_str().unwrap()]));
    let out = Command::new(env!("CARGO_BIN_EXE_qefsynth"))
        .args(["--threads", "0", "analyze", model.to_str().unwrap()])
        .env("QEFSYNTH_THREADS", "2")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(report(&out)["upsilon"], base["upsilon"]);
    assert_eq!(qefsynth(&["--threads", "0", "analyze", model.to_str().unwrap()]).status.code(), Some(2));
}

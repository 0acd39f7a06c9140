use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn monodromy(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_monodromy")).args(args).output().expect("binary runs")
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn without_timestamp(mut v: Value) -> Value {
    v.as_object_mut().unwrap().remove("timestamp");
    v
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn champagne_example_writes_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    let o = monodromy(&[
        "monodromy", "--system", "champagne", "--center", "0,0", "--radius", "0.15", "--method", "both",
        "--samples", "256", "--out", s(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(String::from_utf8_lossy(&o.stdout).trim(), "k = -1");
    let r = read_json(&out);
    assert_eq!(r["k"], -1);
    assert_eq!(r["agreement"], true);
    for key in ["system", "params", "loop", "method", "k", "residues", "variation", "diagnostics", "timestamp", "version"]
    {
        assert!(r.get(key).is_some(), "missing {key}");
    }
    for key in ["s", "v", "branch", "value", "certificate"] {
        assert!(r["residues"][0].get(key).is_some(), "residue missing {key}");
    }
    for key in ["var_theta", "var_phi", "jumps"] {
        assert!(r["variation"].get(key).is_some());
    }
    for key in ["form_checks", "drift", "tolerances"] {
        assert!(r["diagnostics"].get(key).is_some());
    }
}

#[test]
fn series_csv_has_the_documented_columns() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("r.csv");
    let out = dir.path().join("r.json");
    let o = monodromy(&["monodromy", "--preset", "paper-champagne", "--samples", "64", "--csv", s(&csv), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0));
    let mut rd = csv::Reader::from_path(&csv).unwrap();
    let head: Vec<String> = rd.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(head, ["s", "h", "j", "theta", "phi", "defect", "flags"]);
    let rows: Vec<csv::StringRecord> = rd.records().map(|r| r.unwrap()).collect();
    assert!(rows.len() >= 64);
    assert!(rows.iter().any(|r| &r[6] == "phi-undefined"));
}

#[test]
fn scattering_example() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s.json");
    let o = monodromy(&["scattering", "--system", "focus-focus", "--m", "2,4,8,16", "--radius", "0.5", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = read_json(&out);
    assert_eq!(r["k"], -1);
    assert_eq!(r["stable"], true);
    assert_eq!(r["variation"].as_array().unwrap().len(), 4);
}

#[test]
fn pendulum_scan_example() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("scan.csv");
    let out = dir.path().join("scan.json");
    let o = monodromy(&[
        "scan", "--system", "pendulum", "--box", "-1.5,3,-2,2", "--grid", "200x200", "--csv", s(&csv), "--out", s(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = read_json(&out);
    // both rays lie on j = 0 and together cover h >= -1
    let loci = r["scan"]["polar_image"].as_array().unwrap();
    assert_eq!(loci.len(), 2);
    let mut lo = f64::INFINITY;
    for l in loci {
        for p in l["points"].as_array().unwrap() {
            assert_eq!(p["j"].as_f64().unwrap(), 0.0);
            lo = lo.min(p["h"].as_f64().unwrap());
        }
    }
    assert_eq!(lo, -1.0);
    let (dh, dj) = (4.5 / 200.0, 4.0 / 200.0);
    let mut rd = csv::Reader::from_path(&csv).unwrap();
    let mut on = 0;
    for rec in rd.records() {
        let rec = rec.unwrap();
        if &rec[2] == "on-polar-image" {
            let (h, j): (f64, f64) = (rec[0].parse().unwrap(), rec[1].parse().unwrap());
            assert!(j.abs() <= 0.5 * dj + 1e-12 && h >= -1.0 - 0.5 * dh, "{h} {j}");
            on += 1;
        }
    }
    assert!(on > 100, "{on}");
}

#[test]
fn scan_loci_of_the_other_systems() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("c.json");
    let o = monodromy(&["scan", "--system", "champagne", "--box", "-0.5,2,-1,1", "--grid", "32x32", "--no-theta", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0));
    let loci = read_json(&out)["scan"]["polar_image"].clone();
    let pts = loci[0]["points"].as_array().unwrap();
    assert_eq!(pts.first().unwrap()["h"], 0.0);
    assert!(pts.iter().all(|p| p["j"] == 0.0));

    let o = monodromy(&["scan", "--system", "hydrogen", "--box", "-2,2,-3,3", "--grid", "32x32", "--no-theta", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0));
    let loci = read_json(&out)["scan"]["polar_image"].clone();
    let ext: Vec<(f64, f64, f64)> = loci
        .as_array()
        .unwrap()
        .iter()
        .map(|l| {
            let p = l["points"].as_array().unwrap();
            let js: Vec<f64> = p.iter().map(|x| x["j"].as_f64().unwrap()).collect();
            (p[0]["h"].as_f64().unwrap(), js.iter().cloned().fold(f64::INFINITY, f64::min), js.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
        })
        .collect();
    assert_eq!(ext, vec![(1.0, 0.0, 2.0), (-1.0, -2.0, 0.0)]);
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(monodromy(&["monodromy", "--bogus"]).status.code(), Some(1));
    assert_eq!(monodromy(&["monodromy", "--system", "champagne"]).status.code(), Some(1));
    assert_eq!(monodromy(&["monodromy", "--system", "nope", "--center", "0,0", "--radius", "0.1"]).status.code(), Some(1));
    assert_eq!(monodromy(&["frobnicate"]).status.code(), Some(1));
    let e = monodromy(&["monodromy", "--preset", "paper-champagne", "--samples", "8"]);
    assert_eq!(e.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&e.stderr).contains("--help"));
}

#[test]
fn numerical_failures_exit_with_two_and_keep_the_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("e.json");
    let o = monodromy(&["monodromy", "--preset", "paper-champagne", "--samples", "64", "--max-time", "0.5", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    let r = read_json(&out);
    assert!(r["error"]["message"].as_str().unwrap().len() > 5);
    assert!(String::from_utf8_lossy(&o.stderr).contains(r["error"]["message"].as_str().unwrap()));
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(
        &cfg,
        r#"{ "system": "pendulum", "loop": { "shape": "circle", "center": { "h": 1.0, "j": 0.0 }, "radius": 0.2 },
             "samples": 64, "tolerances": { "rel_tol": 1e-9 } }"#,
    )
    .unwrap();
    let out = dir.path().join("r.json");
    let o = monodromy(&["monodromy", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = read_json(&out);
    assert_eq!(r["system"], "pendulum");
    assert_eq!(r["k"], -1);
    assert_eq!(r["variation"]["samples"], 64);
    assert_eq!(r["diagnostics"]["tolerances"]["integrator"]["rel_tol"], 1e-9);
    let o = monodromy(&[
        "monodromy", "--config", s(&cfg), "--samples", "96", "--rel-tol", "1e-10", "--center", "0.5,0.4", "--radius",
        "0.1", "--out", s(&out),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let r = read_json(&out);
    assert_eq!(r["variation"]["samples"], 96);
    assert_eq!(r["diagnostics"]["tolerances"]["integrator"]["rel_tol"], 1e-10);
    assert_eq!(r["k"], 0);
    // unknown keys in the file are a usage error
    std::fs::write(&cfg, r#"{ "sytem": "pendulum" }"#).unwrap();
    assert_eq!(monodromy(&["monodromy", "--config", s(&cfg)]).status.code(), Some(1));
}

#[test]
fn reports_are_deterministic_and_thread_independent() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    let c = dir.path().join("c.json");
    let base = ["monodromy", "--preset", "paper-pendulum", "--samples", "128"];
    let run = |extra: &[&str], out: &Path| {
        let mut v: Vec<&str> = base.to_vec();
        v.extend_from_slice(extra);
        v.extend_from_slice(&["--out", s(out)]);
        assert_eq!(monodromy(&v).status.code(), Some(0));
    };
    run(&["--threads", "1"], &a);
    run(&["--threads", "1"], &b);
    run(&["--threads", "4"], &c);
    let (ra, rb, rc) = (without_timestamp(read_json(&a)), without_timestamp(read_json(&b)), without_timestamp(read_json(&c)));
    assert_eq!(serde_json::to_string(&ra).unwrap(), serde_json::to_string(&rb).unwrap());
    assert_eq!(serde_json::to_string(&ra).unwrap(), serde_json::to_string(&rc).unwrap());
}

#[test]
fn other_subcommands_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o.json");
    let o = monodromy(&["rotation", "--system", "pendulum", "--at", "1.2,0.1", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = read_json(&out);
    assert!(r.to_string().contains("theta"));

    let o = monodromy(&["local", "--preset", "paper-ff", "--samples", "128", "--control", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = read_json(&out);
    assert_eq!(r["k"], -1);
    assert_eq!(r["doubled_ball"]["k"], -1);
    assert!(r["du_control"]["refusal"].as_str().unwrap().contains("not transversal"));

    let o = monodromy(&["diagnose", "--system", "hydrogen", "--probes", "100", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0));
    let r = read_json(&out);
    assert_eq!(r["diagnostics"]["form_checks"]["transversal"], true);

    let o = monodromy(&["diagnose", "--system", "focus-focus", "--form", "du", "--probes", "50", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(read_json(&out)["diagnostics"]["form_checks"]["polar_rank"], 0);
}

#[test]
fn run_returns_exit_codes_in_process() {
    assert_eq!(monodromy_cli::run(["monodromy", "--help"]), 0);
    assert_eq!(monodromy_cli::run(["monodromy", "monodromy", "--nope"]), 1);
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.json");
    let code = monodromy_cli::run([
        "monodromy", "monodromy", "--preset", "paper-hydrogen", "--samples", "64", "--out", s(&out),
    ]);
    assert_eq!(code, 0);
    assert_eq!(read_json(&out)["k"], -2);
}

#[test]
fn bare_flags_default_to_the_monodromy_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("p.json");
    let o = monodromy(&["--preset", "paper-champagne", "--method", "both", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = read_json(&out);
    assert_eq!(r["command"], "monodromy");
    assert_eq!(r["k"], -1);
    assert_eq!(monodromy(&["--help"]).status.code(), Some(0));
}

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use hyperctrl::cli::parse_scan;
use hyperctrl::config;
use hyperctrl::data::Source;
use serde_json::Value;

fn hyperctrl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hyperctrl"))
        .args(args)
        .env_remove("HYPERCTRL_THREADS")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn exit_codes() {
    assert_eq!(code(&hyperctrl(&["frobnicate"])), 1);
    assert_eq!(code(&hyperctrl(&[])), 1);
    assert_eq!(code(&hyperctrl(&["info"])), 1);
    assert_eq!(code(&hyperctrl(&["info", "--preset", "kmm1-ref", "--system", "x.json"])), 1);
    assert_eq!(code(&hyperctrl(&["--help"])), 0);
    assert_eq!(code(&hyperctrl(&["--version"])), 0);

    let o = hyperctrl(&["info", "--system", "/no/such/dir/system.json"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("/no/such/dir/system.json"));

    let o = hyperctrl(&["info", "--preset", "nope"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("kmm1-ref"));

    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let small = ["simulate", "--preset", "kmm1-ref", "--T", "1", "--nt", "8", "--out", out];
    assert_eq!(code(&hyperctrl(&small)), 2);
    let neg = ["simulate", "--preset", "kmm1-ref", "--T=-1", "--out", out];
    assert_eq!(code(&hyperctrl(&neg)), 2);
    let omega = ["omega", "--preset", "k1m2-zero", "--horizon", "2", "--out", out];
    assert_eq!(code(&hyperctrl(&omega)), 2);
    let cx = ["counterexample", "--preset", "coupled-pair", "--out", out];
    assert_eq!(code(&hyperctrl(&cx)), 2);
    let st2 = ["duality", "--preset", "kmm1-ref", "--check", "st2", "--T", "3", "--out", out];
    assert_eq!(code(&hyperctrl(&st2)), 2);

    // output path is a file
    let file = dir.path().join("plain");
    fs::write(&file, "x").unwrap();
    let o = hyperctrl(&["simulate", "--preset", "kmm1-ref", "--T", "1", "--out", file.to_str().unwrap()]);
    assert_eq!(code(&o), 2);

    let hum = [
        "hum", "--preset", "coupled-pair", "--T", "2.2", "--nt", "24", "--nx", "24", "--cg-max-iter", "1", "--out", out,
    ];
    let o = hyperctrl(&hum);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(dir.path().join("hum_report.json").exists());
}

#[test]
fn info_reports_times_and_classes() {
    let o = hyperctrl(&["info", "--preset", "thm1-ref"]);
    assert_eq!(code(&o), 0);
    let s = stdout(&o);
    assert!(s.contains("n = 3, k = 1, m = 2"), "{s}");
    assert!(s.contains("tau = [1, 1, 0.5]"), "{s}");
    assert!(s.contains("T_opt = 1.5"), "{s}");
    assert!(s.contains("= 2\n"), "{s}");
    assert!(s.contains("B generic class: yes"), "{s}");

    let s = stdout(&hyperctrl(&["info", "--preset", "k2m2-zero"]));
    assert!(s.contains("B row condition i = 2"), "{s}");
}

#[test]
fn config_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    for name in config::preset_names() {
        let dumped = hyperctrl(&["info", "--preset", name, "--dump"]);
        assert_eq!(code(&dumped), 0);
        let path = dir.path().join(format!("{name}.json"));
        fs::write(&path, stdout(&dumped)).unwrap();
        assert_eq!(config::load(&path).unwrap(), config::preset(name).unwrap());
        let a = stdout(&hyperctrl(&["info", "--preset", name]));
        let b = stdout(&hyperctrl(&["info", "--system", path.to_str().unwrap()]));
        assert_eq!(a.lines().skip(1).collect::<Vec<_>>(), b.lines().skip(1).collect::<Vec<_>>());
    }
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"k": 1, "m": 1, "speeds": [], "B": [[1.0]]}"#).unwrap();
    assert_eq!(code(&hyperctrl(&["info", "--system", bad.to_str().unwrap()])), 2);
    fs::write(&bad, r#"{"k": 1, "m": 1, "speeds": [], "B": [[1.0]], "extra": 1}"#).unwrap();
    assert_eq!(code(&hyperctrl(&["info", "--system", bad.to_str().unwrap()])), 2);
}

#[test]
fn flow_csv() {
    let o = hyperctrl(&["flow", "--preset", "kmm1-ref", "--i", "2", "--s", "0", "--xi", "1", "--t", "1", "--samples", "4"]);
    assert_eq!(code(&o), 0);
    let s = stdout(&o);
    let lines: Vec<_> = s.lines().collect();
    assert_eq!(lines[0], "t,x");
    assert_eq!(lines.len(), 6);
    let last: Vec<f64> = lines[5].split(',').map(|v| v.parse().unwrap()).collect();
    assert!((last[0] - 1.0).abs() < 1e-15 && last[1].abs() < 1e-12);
    assert_eq!(code(&hyperctrl(&["flow", "--preset", "kmm1-ref", "--i", "3", "--s", "0", "--xi", "1", "--t", "1"])), 2);
}

fn run_simulate(out: &Path, threads: &str) {
    let o = hyperctrl(&[
        "--threads", threads, "simulate", "--preset", "coupled-pair", "--T", "1", "--u0", "bump", "--control", "sin:1",
        "--nt", "40", "--nx", "40", "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).starts_with("simulate:"));
}

#[test]
fn simulate_outputs_are_deterministic() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_simulate(a.path(), "1");
    run_simulate(b.path(), "1");
    for f in ["field.csv", "picard_report.json"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    let text = fs::read_to_string(a.path().join("field.csv")).unwrap();
    assert!(text.starts_with("t,x,u_1,u_2\n"));
    assert_eq!(text.lines().count(), 1 + 41 * 41);

    let raw = fs::read_to_string(a.path().join("picard_report.json")).unwrap();
    assert!(raw.contains("\"T\": 1.0000000000000000e0"), "{raw}");
    let rep = json(&a.path().join("picard_report.json"));
    assert_eq!(rep["schema_version"], 1);
    assert_eq!(rep["command"], "simulate");
    assert_eq!(rep["config"]["source"], "preset:coupled-pair");
    assert_eq!(rep["provenance"]["crate_version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(rep["provenance"]["threads"], 1);
    assert_eq!(rep["result"]["picard"]["converged"], true);
    assert!(rep["result"]["picard"]["max_contraction"].as_f64().unwrap() <= 0.5);
}

#[test]
fn results_do_not_depend_on_threads() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for (dir, threads) in [(&a, "1"), (&b, "3")] {
        let o = hyperctrl(&[
            "--threads", threads, "hum", "--preset", "coupled-pair", "--T", "2.2", "--nt", "24", "--nx", "24", "--out",
            dir.path().to_str().unwrap(),
        ]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let ca = fs::read(a.path().join("control.csv")).unwrap();
    assert_eq!(ca, fs::read(b.path().join("control.csv")).unwrap());
    assert!(String::from_utf8(ca).unwrap().starts_with("t,c_1\n"));
    let rep = json(&a.path().join("hum_report.json"));
    assert_eq!(rep["result"]["converged"], true);
}

#[test]
fn infinite_constant_is_a_string() {
    let dir = tempfile::tempdir().unwrap();
    let o = hyperctrl(&[
        "observability", "--preset", "kmm1-ref", "--scan", "1.5:2.5:3", "--step", "0.05", "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rows = json(&dir.path().join("observability_report.json"))["result"]["rows"].clone();
    let rows = rows.as_array().unwrap();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0]["null_constant"], 0.0);
    assert_eq!(rows[0]["verdict"], "degenerate");
    assert_eq!(rows[2]["null_constant"], "inf");
    assert_eq!(rows[2]["verdict"], "controllable");
    let scan = fs::read_to_string(dir.path().join("scan.csv")).unwrap();
    assert!(scan.starts_with("T,constant\n"));
    assert_eq!(scan.lines().count(), 4);
}

#[test]
fn duality_report() {
    let dir = tempfile::tempdir().unwrap();
    let o = hyperctrl(&[
        "duality", "--preset", "coupled-pair", "--check", "st2", "--T", "0.5", "--samples", "3", "--nt", "60", "--nx",
        "60", "--out", dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = json(&dir.path().join("duality_report.json"))["result"].clone();
    assert_eq!(r["pass"], true);
    assert!(r["defect"].as_f64().unwrap() < 1e-3);
    assert_eq!(r["defects"].as_array().unwrap().len(), 3);
}

#[test]
fn counterexample_report() {
    let dir = tempfile::tempdir().unwrap();
    let o = hyperctrl(&[
        "counterexample", "--samples", "200", "--field-points", "11", "--out", dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = json(&dir.path().join("counterexample_report.json"))["result"].clone();
    for key in ["obs_norm", "initial_norm", "identity_defects", "pass"] {
        assert!(!r[key].is_null(), "{key}");
    }
    assert_eq!(r["pass"], true);
    let field = fs::read_to_string(dir.path().join("witness_field.csv")).unwrap();
    assert!(field.starts_with("t,x,v_1,v_2,v_3\n"));
    assert_eq!(field.lines().count(), 1 + 121);
    let o = hyperctrl(&["counterexample", "--eps", "0.7", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}

#[test]
fn spectrum_trivial_without_coupling() {
    let dir = tempfile::tempdir().unwrap();
    let o = hyperctrl(&[
        "spectrum", "--preset", "k1m2-zero", "--scan", "0:0.5:2", "--step", "0.05", "--out", dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = json(&dir.path().join("spectrum_report.json"))["result"].clone();
    let rows = r["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|row| row["dim"] == 0));
    let o = hyperctrl(&[
        "spectrum", "--preset", "k1m2-zero", "--scan", "0:0.5:2", "--basis", "--out", dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 2);
}

#[test]
fn scan_parsing() {
    assert_eq!(parse_scan("1:2:3").unwrap(), vec![1.0, 1.5, 2.0]);
    assert_eq!(parse_scan("1:2:1").unwrap(), vec![1.0]);
    for bad in ["1:2", "1:2:0", "a:2:3", "1:2:3:4"] {
        assert!(parse_scan(bad).is_err(), "{bad}");
    }
}

#[test]
fn data_sources() {
    assert_eq!(Source::parse("zero", "x").unwrap(), Source::Zero);
    assert_eq!(Source::parse("const:2.5", "x").unwrap(), Source::Const(2.5));
    assert_eq!(Source::parse("random:7", "x").unwrap(), Source::Random(7));
    assert!(Source::parse("const:", "x").is_err());
    assert!(Source::parse("random:-1", "x").is_err());
    assert!(Source::parse("/no/such.csv", "x").is_err());

    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("u0.csv");
    fs::write(&p, "x,u_1,u_2\n0,0,1\n1,2,3\n").unwrap();
    let s = Source::parse(p.to_str().unwrap(), "x").unwrap();
    assert_eq!(s.value(0, 0.5), 1.0);
    assert_eq!(s.value(1, 0.25), 1.5);
    assert!(Source::parse(p.to_str().unwrap(), "t").is_err());
    fs::write(&p, "x,u_1\n0,1\n0,2\n").unwrap();
    assert!(Source::parse(p.to_str().unwrap(), "x").is_err());
    fs::write(&p, "x,u_1\n0,1,3\n").unwrap();
    assert!(Source::parse(p.to_str().unwrap(), "x").is_err());
}

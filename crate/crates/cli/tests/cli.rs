use std::path::Path;
use std::process::{Command, Output};

fn brt(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_brt"))
        .current_dir(dir)
        .env("BRT_LOG", "quiet")
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_json(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stdout).expect("one-line JSON summary on stdout")
}

fn stderr_json(o: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&o.stderr);
    let line = text.lines().last().expect("a diagnostic on stderr");
    serde_json::from_str(line).expect("diagnostic is JSON")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn read_json(p: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn verify_constants_writes_report_and_table() {
    let tmp = tempfile::tempdir().unwrap();
    let o = brt(tmp.path(), &["verify", "constants", "--out", "o"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let s = stdout_json(&o);
    assert_eq!(s["passed"], true);
    assert_eq!(s["C(3,2)"], "7/5");
    assert!(tmp.path().join("o/verify_constants.json").exists());
    let table = std::fs::read_to_string(tmp.path().join("o/constants_table.csv")).unwrap();
    assert!(table.lines().count() > 100);
}

#[test]
fn malformed_config_exits_2_without_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cases = [
        ("syntax.json", "{ \"seed\": "),
        ("unknown.json", "{ \"sede\": 3 }"),
        ("range.json", "{ \"gauge\": { \"rays\": 0 } }"),
        ("geometry.json", r#"{ "geometry": { "outer": { "circle": { "center": [0, 0], "radius": -1.0 } } } }"#),
    ];
    for (name, text) in cases {
        let cfg = write(tmp.path(), name, text);
        let o = brt(tmp.path(), &["trace", "--config", &cfg, "--out", "o"]);
        assert_eq!(o.status.code(), Some(2), "{name}");
        let d = stderr_json(&o);
        assert_eq!(d["level"], "error");
        assert_eq!(d["kind"], "config", "{name}: {d}");
        assert!(o.stdout.is_empty());
        assert!(!tmp.path().join("o").exists(), "{name} created outputs");
    }
}

#[test]
fn malformed_dataset_exits_2_without_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let data = write(tmp.path(), "d.csv", "ray_id,x0,y0,theta0,value\n0,2.0,0.0,3.1,abc\n");
    let o = brt(tmp.path(), &["reconstruct", "--data", &data, "--out", "o"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr_json(&o)["kind"], "data");
    assert!(!tmp.path().join("o").exists());
}

#[test]
fn usage_errors_exit_2_with_json_diagnostic() {
    let tmp = tempfile::tempdir().unwrap();
    for args in [&["frobnicate"][..], &["verify", "nothing"], &["trace", "--threads", "x"]] {
        let o = brt(tmp.path(), args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        assert_eq!(stderr_json(&o)["kind"], "usage");
    }
}

#[test]
fn gauge_test_rank_2_is_below_tolerance() {
    let tmp = tempfile::tempdir().unwrap();
    let o = brt(tmp.path(), &["gauge-test", "--rank", "2", "--out", "o"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let s = stdout_json(&o);
    assert!(s["max_abs"].as_f64().unwrap() < 1e-6, "{s}");
    let r = read_json(&tmp.path().join("o/gauge_test.json"));
    assert_eq!(r["rank"], 2);
    assert_eq!(r["failed_rays"], 0);
}

#[test]
fn every_output_carries_the_config_hash() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.json", r#"{ "fan": { "random": { "count": 40 } } }"#);
    for cmd in [&["trace"][..], &["transform"], &["u-field"], &["check-geometry"], &["reconstruct"]] {
        let mut args = cmd.to_vec();
        args.extend(["--config", &cfg, "--out", "o"]);
        let o = brt(tmp.path(), &args);
        assert_eq!(o.status.code(), Some(0), "{cmd:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let hash = read_json(&tmp.path().join("o/rays.json"))["config_hash"].as_str().unwrap().to_string();
    assert_eq!(hash.len(), 64);
    let mut n = 0;
    for e in std::fs::read_dir(tmp.path().join("o")).unwrap() {
        let p = e.unwrap().path();
        let text = std::fs::read_to_string(&p).unwrap();
        let first = text.lines().next().unwrap();
        match p.extension().and_then(|x| x.to_str()) {
            Some("csv") => assert_eq!(first, format!("# config_hash={hash}"), "{}", p.display()),
            Some("svg") => assert_eq!(first, format!("<!-- config_hash={hash} -->"), "{}", p.display()),
            Some("json") => assert_eq!(read_json(&p)["config_hash"], hash.as_str(), "{}", p.display()),
            _ => panic!("unexpected output {}", p.display()),
        }
        n += 1;
    }
    assert!(n >= 10, "only {n} outputs");
}

#[test]
fn seed_changes_the_hash_and_out_does_not() {
    let tmp = tempfile::tempdir().unwrap();
    let hash = |args: &[&str]| {
        let o = brt(tmp.path(), args);
        assert_eq!(o.status.code(), Some(0));
        let dir = args[args.iter().position(|a| *a == "--out").unwrap() + 1];
        read_json(&tmp.path().join(dir).join("admissibility.json"))["config_hash"].clone()
    };
    let a = hash(&["check-geometry", "--out", "a"]);
    let b = hash(&["check-geometry", "--out", "b"]);
    let c = hash(&["check-geometry", "--out", "c", "--seed", "7"]);
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn outputs_are_identical_across_thread_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.json", r#"{ "fan": { "random": { "count": 120 } } }"#);
    for threads in ["1", "3"] {
        for cmd in ["trace", "transform", "reconstruct"] {
            let o = brt(tmp.path(), &[cmd, "--config", &cfg, "--threads", threads, "--out", threads]);
            assert_eq!(o.status.code(), Some(0));
        }
    }
    let names: Vec<_> = std::fs::read_dir(tmp.path().join("1")).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert!(names.len() >= 8);
    for n in names {
        let a = std::fs::read(tmp.path().join("1").join(&n)).unwrap();
        let b = std::fs::read(tmp.path().join("3").join(&n)).unwrap();
        assert!(a == b, "{n:?} differs between thread counts");
    }
}

#[test]
fn reconstruct_accepts_transform_output() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.json", r#"{ "fan": { "random": { "count": 60 } } }"#);
    let o = brt(tmp.path(), &["transform", "--config", &cfg, "--out", "t"]);
    assert_eq!(o.status.code(), Some(0));
    let o = brt(tmp.path(), &["reconstruct", "--config", &cfg, "--data", "t/dataset.csv", "--out", "r"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = read_json(&tmp.path().join("r/reconstruct.json"));
    assert_eq!(r["summary"]["rays"], 60);
    assert!(tmp.path().join("r/field.csv").exists());
}

#[test]
fn failing_checks_exit_3() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.json", r#"{ "verify": { "commproj": { "tol": 1e-30 } } }"#);
    let o = brt(tmp.path(), &["verify", "commproj", "--config", &cfg, "--out", "o"]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(stdout_json(&o)["passed"], false);
    assert_eq!(stderr_json(&o)["kind"], "assertion");
    assert!(tmp.path().join("o/verify_commproj.json").exists());
}

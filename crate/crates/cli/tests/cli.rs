use std::path::Path;
use std::process::{Command, Output};

use petersson_core::moments::MomentReport;

fn petersson(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_petersson"))
        .args(args)
        .env_remove("PETERSSON_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn csv_rows(o: &Output) -> Vec<csv::StringRecord> {
    csv::Reader::from_reader(o.stdout.as_slice()).records().map(|r| r.unwrap()).collect()
}

#[test]
fn kloosterman_example() {
    let o = petersson(&["kloosterman", "--m", "1", "--n", "1", "--c", "5"]);
    assert!(o.status.success());
    let rows = csv_rows(&o);
    assert_eq!(rows.len(), 1);
    let v: f64 = rows[0][3].parse().unwrap();
    // x = 2, 3 contribute 1 each; x = 1, 4 contribute cos(4 pi / 5).
    let expected = 2.0 + 2.0 * (4.0 * std::f64::consts::PI / 5.0).cos();
    assert!((v - expected).abs() < 1e-12, "{v}");
    assert!(stdout(&o).starts_with("m,n,c,value,tail,weil_bound\n"));
}

#[test]
fn delta_star_example() {
    let o = petersson(&["delta-star", "--k", "6", "--p", "3", "--nu", "4", "--m", "1", "--n", "1", "--tol", "1e-10"]);
    assert!(o.status.success());
    assert!(stdout(&o).starts_with("k,p,nu,m,n,value,tail,main_term,budget\n"));
    let r = &csv_rows(&o)[0];
    let (value, tail, main, budget): (f64, f64, f64, f64) =
        (r[5].parse().unwrap(), r[6].parse().unwrap(), r[7].parse().unwrap(), r[8].parse().unwrap());
    assert_eq!(main, 2.0 / 3.0);
    assert!((value - 2.0 / 3.0).abs() <= tail + budget);
}

#[test]
fn grids_expand_in_order() {
    let o = petersson(&["delta-star", "--k", "6", "--p", "3", "--nu", "3..4", "--m", "1,2", "--n", "1..2", "--tol", "1e-8"]);
    let keys: Vec<(String, String, String)> =
        csv_rows(&o).iter().map(|r| (r[2].to_string(), r[3].to_string(), r[4].to_string())).collect();
    let want: Vec<(String, String, String)> = [3, 4]
        .iter()
        .flat_map(|nu| [(1, 1), (1, 2), (2, 1), (2, 2)].map(|(m, n)| (nu.to_string(), m.to_string(), n.to_string())))
        .collect();
    assert_eq!(keys, want);
}

#[test]
fn verify_quick_passes() {
    let o = petersson(&["verify", "--quick"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let out = stdout(&o);
    assert!(out.lines().count() >= 10);
    assert!(out.lines().all(|l| l.starts_with("PASS ")));
}

#[test]
fn usage_errors_exit_2() {
    for args in [
        &["m2", "--k", "6", "--p", "3", "--nu", "4", "--tol", "1e-3"][..],
        &["m2", "--k", "6", "--p", "3", "--nu", "4", "--tol", "1e-15"],
        &["delta-star", "--k", "6", "--p", "3"],
        &["frobnicate"],
        &["kloosterman", "--m", "1", "--n", "x", "--c", "5"],
        &["tu", "--k", "6", "--p", "3", "--nu", "4", "--y", "1", "--format", "xml"],
        &["tu", "--k", "6", "--p", "3", "--nu", "4", "--y", "1", "--threads", "0"],
    ] {
        let o = petersson(args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn numeric_errors_exit_3() {
    for args in [
        &["m2", "--k", "6", "--p", "3", "--nu", "2"][..],
        &["delta-star", "--k", "6", "--p", "4", "--nu", "2"],
        &["delta-star", "--k", "5", "--p", "3", "--nu", "2"],
        &["kloosterman", "--m", "1", "--n", "1", "--c", "0"],
        &["delta", "--k", "6", "--p", "3", "--nu", "2", "--level-exp", "3"],
    ] {
        let o = petersson(args);
        assert_eq!(o.status.code(), Some(3), "{args:?}");
        assert!(!o.stderr.is_empty());
    }
}

#[test]
fn thread_count_from_environment() {
    let base = ["tu", "--k", "6", "--p", "3", "--nu", "4", "--y", "0.01,1,10"];
    let one = Command::new(env!("CARGO_BIN_EXE_petersson")).args(base).env("PETERSSON_THREADS", "1").output().unwrap();
    assert!(one.status.success());
    let bad = Command::new(env!("CARGO_BIN_EXE_petersson")).args(base).env("PETERSSON_THREADS", "none").output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
    let many = petersson(&[&base[..], &["--threads", "3"]].concat());
    assert_eq!(one.stdout, many.stdout);
}

fn schema() -> jsonschema::JSONSchema {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("schema/moment_report.schema.json");
    let schema: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    jsonschema::JSONSchema::compile(&schema).unwrap()
}

#[test]
fn json_reports_validate_and_round_trip() {
    let schema = schema();
    let runs = [
        petersson(&["m2", "--k", "6", "--p", "3", "--nu", "3,4", "--m", "1,2", "--tol", "1e-7", "--format", "json"]),
        petersson(&["m3", "--k", "6", "--p", "3", "--nu", "3", "--tol", "1e-4", "--format", "json"]),
    ];
    let mut lines = 0;
    for o in &runs {
        assert!(o.status.success());
        for line in stdout(o).lines() {
            let doc: serde_json::Value = serde_json::from_str(line).unwrap();
            if let Err(errors) = schema.validate(&doc) {
                panic!("{line}: {:?}", errors.map(|e| e.to_string()).collect::<Vec<_>>());
            }
            let report: MomentReport = serde_json::from_str(line).unwrap();
            assert_eq!(serde_json::to_string(&report).unwrap(), line);
            lines += 1;
        }
    }
    assert_eq!(lines, 5);
}

#[test]
fn schema_rejects_malformed_reports() {
    let schema = schema();
    let o = petersson(&["m2", "--k", "6", "--p", "3", "--nu", "3", "--tol", "1e-6", "--format", "json"]);
    let good: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert!(schema.is_valid(&good));
    let mut wrong_version = good.clone();
    wrong_version["schema_version"] = 2.into();
    let mut missing = good.clone();
    missing.as_object_mut().unwrap().remove("constants");
    let mut negative_tail = good.clone();
    negative_tail["computed"]["tail"] = (-1.0).into();
    for bad in [wrong_version, missing, negative_tail] {
        assert!(!schema.is_valid(&bad));
    }
}

#[test]
fn text_and_bound_output() {
    let o = petersson(&["constants", "--k", "6", "--p", "3", "--nu", "5", "--format", "text"]);
    let line = stdout(&o);
    assert!(line.starts_with("k=6 p=3 nu=5 q_hat="), "{line}");
    assert!(line.contains("A3=0.666666666666666"));
    let o = petersson(&["bound", "--k", "6", "--p", "3", "--nu", "3", "--tol", "1e-5"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = &csv_rows(&o)[0];
    let bound: f64 = r[7].parse().unwrap();
    assert!(bound > 0.0 && bound < 1.0);
}

#[test]
fn cache_persists_and_survives_corruption() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("kloosterman.bin");
    let p = path.to_str().unwrap();
    let args = ["delta-star", "--k", "6", "--p", "3", "--nu", "4", "--m", "1,2", "--n", "1,5", "--tol", "1e-9"];
    let fresh = petersson(&args);

    let first = petersson(&[&args[..], &["--cache", p]].concat());
    assert!(first.status.success());
    let size = std::fs::metadata(&path).unwrap().len();
    assert!(size > 1000);
    let second = petersson(&[&args[..], &["--cache", p]].concat());
    assert!(second.stderr.is_empty(), "{}", String::from_utf8_lossy(&second.stderr));
    assert_eq!(fresh.stdout, first.stdout);
    assert_eq!(fresh.stdout, second.stdout);

    let mut bytes = std::fs::read(&path).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x40;
    std::fs::write(&path, bytes).unwrap();
    let third = petersson(&[&args[..], &["--cache", p]].concat());
    assert!(third.status.success());
    assert!(String::from_utf8_lossy(&third.stderr).contains("corrupt"));
    assert_eq!(fresh.stdout, third.stdout);
    // The rewritten file is valid again.
    let fourth = petersson(&[&args[..], &["--cache", p]].concat());
    assert!(fourth.stderr.is_empty());
}

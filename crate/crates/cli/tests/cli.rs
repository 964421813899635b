use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn scratch(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("levyou-cli-{tag}-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn levyou(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_levyou")).args(args).output().unwrap()
}

fn run(cmd: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![cmd, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    levyou(&args)
}

#[test]
fn verify_kinetic_fixture_passes() {
    let dir = scratch("verify");
    let out = dir.join("report.json");
    let res = run("verify", &fixture("kinetic_fp.json"), &out, &[]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stdout));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(report["failed"], 0);
    assert_eq!(report["checks"].as_array().unwrap().len(), levyou::verify::registry().len());
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn verify_exits_one_on_failure() {
    let dir = scratch("coarse");
    let cfg = dir.join("coarse.json");
    std::fs::write(
        &cfg,
        r#"{"d": 1, "Q": [2.0], "B": [-1.0], "pi": {"type": "Null"}, "grid": {"halfwidth": [1.5], "n": [8]}}"#,
    )
    .unwrap();
    let res = run("verify", &cfg, &dir.join("r.csv"), &[]);
    assert_eq!(res.status.code(), Some(1));
    let csv = std::fs::read_to_string(dir.join("r.csv")).unwrap();
    assert!(csv.lines().any(|l| l.contains(",fail,")));
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn registry_covers_all_modules() {
    let reg = levyou::verify::registry();
    assert_eq!(reg.len(), 24);
    for module in ["matops", "levy", "density", "polyspec", "spectrum", "simulate"] {
        assert!(reg.iter().any(|i| i.module == module), "{module}");
    }
}

#[test]
fn diagnose_stable_reports_noncompactness() {
    let dir = scratch("diagnose");
    let out = dir.join("diag.json");
    let res = run("diagnose", &fixture("stable1d.json"), &out, &[]);
    assert_eq!(res.status.code(), Some(0));
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.contains("NonCompactNecessaryFail"));
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["assumptions"]["polynomial"]["holds"], false);
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn malformed_configs_exit_two() {
    let dir = scratch("bad");
    let cases = [
        (r#"{"d": 1, "Q": [1.0], "pi": {"type": "Null"}}"#, "`B`"),
        (r#"{"d": 1, "Q": [1.0], "B": [-1.0], "pi": {"type": "Null"}, "seeed": 1}"#, "seeed"),
        (r#"{"d": 1, "Q": [1.0], "B": [0.5], "pi": {"type": "Null"}}"#, "assumption (2)"),
        (r#"{"d": 2, "Q": [1, 0, 0, 0], "B": [-1, 0, 0, -2], "pi": {"type": "Null"}}"#, "assumption (1)"),
    ];
    for (k, (text, needle)) in cases.iter().enumerate() {
        let cfg = dir.join(format!("c{k}.json"));
        std::fs::write(&cfg, text).unwrap();
        let res = run("spectrum", &cfg, &dir.join("o.json"), &[]);
        assert_eq!(res.status.code(), Some(2), "{text}");
        let err = String::from_utf8_lossy(&res.stderr);
        assert!(err.contains(needle), "{err}");
    }
    let res = run("eigen", &fixture("stable1d.json"), &dir.join("o.json"), &["--n", "2"]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("assumption polynomial"));
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn reruns_are_byte_identical() {
    let dir = scratch("idem");
    let jobs: [(&str, &str, &[&str]); 4] = [
        ("simulate", "cp1d.json", &["--t", "1", "--x", "0.5", "--N", "20000"]),
        ("density", "kinetic_fp.json", &["--deriv", "1,0"]),
        ("eigen", "cp1d.json", &["--n", "0;1;2"]),
        ("spectrum", "kinetic_fp.json", &[]),
    ];
    for (cmd, fix, extra) in jobs {
        for format in ["csv", "json"] {
            let read = |tag: &str| {
                let out = dir.join(format!("{cmd}-{tag}.{format}"));
                let mut args = extra.to_vec();
                args.extend(["--format", format]);
                let res = run(cmd, &fixture(fix), &out, &args);
                assert_eq!(res.status.code(), Some(0), "{cmd}: {}", String::from_utf8_lossy(&res.stderr));
                let mut bytes = std::fs::read(&out).unwrap();
                let mut side = out.into_os_string();
                side.push(".json");
                if let Ok(extra) = std::fs::read(&side) {
                    bytes.extend(extra);
                }
                bytes
            };
            assert_eq!(read("a"), read("b"), "{cmd} {format}");
        }
    }
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn simulate_writes_sidecar_with_hash() {
    let dir = scratch("sidecar");
    let out = dir.join("x.csv");
    let res = run("simulate", &fixture("kinetic_fp.json"), &out, &["--t", "0.5", "--x", "1,-1", "--N", "10"]);
    assert_eq!(res.status.code(), Some(0));
    let csv = std::fs::read_to_string(&out).unwrap();
    assert_eq!(csv.lines().next(), Some("x1,x2"));
    assert_eq!(csv.lines().count(), 11);
    let side: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.join("x.csv.json")).unwrap()).unwrap();
    assert_eq!(side["N"], 10);
    assert_eq!(side["seed"], 7);
    assert_eq!(side["model_hash"].as_str().unwrap().len(), 64);
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn mehler_series_matches_closed_form() {
    let dir = scratch("mehler");
    let out = dir.join("m.json");
    let res = run("mehler", &fixture("gauss1d.json"), &out, &["--t", "3", "--x", "-0.5", "--y", "0.75", "--N", "20"]);
    assert_eq!(res.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let (s, c) = (v["series"].as_f64().unwrap(), v["closedForm"].as_f64().unwrap());
    assert!((s - c).abs() < 1e-6);
    let res = run("mehler", &fixture("cp1d.json"), &out, &["--t", "3", "--x", "0", "--y", "0"]);
    assert_eq!(res.status.code(), Some(2));
    std::fs::remove_dir_all(dir).unwrap();
}

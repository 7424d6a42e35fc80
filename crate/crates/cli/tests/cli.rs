use std::path::Path;
use std::process::{Command, Output};

fn qex(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qex"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .env_remove("QEX_SEED")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap()
}

#[test]
fn usage_errors_exit_64() {
    let t = tempfile::tempdir().unwrap();
    assert_eq!(code(&qex(&["ratio", "--rho", "2^-4"], t.path())), 64);
    assert_eq!(code(&qex(&["ratio", "--r", "0.5,0.1", "--rho", "2^-4"], t.path())), 64);
    assert_eq!(code(&qex(&["nonsense"], t.path())), 64);
    assert_eq!(code(&qex(&["ratio", "--r", "0.25", "--rho", "0.0625", "--n", "2.5"], t.path())), 64);
    assert_eq!(code(&qex(&["--help"], t.path())), 0);
}

#[test]
fn failed_checks_exit_1() {
    let t = tempfile::tempdir().unwrap();
    let consts = t.path().join("strict.toml");
    std::fs::write(&consts, "c_vol = 0.1\n").unwrap();
    let args = ["tower", "--d", "3", "--kind", "knapp", "--rho", "2^-6", "--n", "1e5"];
    assert_eq!(code(&qex(&args, t.path())), 0);
    let mut strict = args.to_vec();
    strict.extend(["--constants", consts.to_str().unwrap()]);
    let o = qex(&strict, t.path());
    assert_eq!(code(&o), 1);
    assert!(read(t.path(), "tower.manifest.toml").contains("status = \"failed\""));
}

#[test]
fn csv_is_identical_across_reruns_and_workers() {
    let (a, b, c) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let args = ["sweep", "--d", "3", "--family", "grid", "--rho-list", "2^-5", "--levels", "2", "--n", "2e4", "--seed", "3"];
    let run = |dir: &Path, workers: &str| {
        let mut v = args.to_vec();
        v.extend(["--workers", workers]);
        let o = qex(&v, dir);
        assert!(code(&o) <= 1, "{}", String::from_utf8_lossy(&o.stderr));
        read(dir, "sweep.csv")
    };
    let first = run(a.path(), "2");
    assert!(first.lines().count() > 2);
    assert_eq!(first, run(b.path(), "2"));
    assert_eq!(first, run(c.path(), "1"));
}

#[test]
fn flags_beat_config_and_config_beats_env() {
    let t = tempfile::tempdir().unwrap();
    let cfg = t.path().join("run.toml");
    std::fs::write(&cfg, "seed = 5\n[ratio]\nr = \"0.25\"\nrho = \"2^-4\"\nn = 1000\n").unwrap();
    let c = cfg.to_str().unwrap();

    let o = Command::new(env!("CARGO_BIN_EXE_qex"))
        .args(["ratio", "--config", c, "--out"])
        .arg(t.path())
        .env("QEX_SEED", "9")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let m = read(t.path(), "ratio.manifest.toml");
    assert!(m.contains("seed = \"5\""), "{m}");
    assert!(m.contains("n = \"1000\""), "{m}");

    let o = qex(&["ratio", "--config", c, "--n", "2000", "--seed", "11"], t.path());
    assert_eq!(code(&o), 0);
    let m = read(t.path(), "ratio.manifest.toml");
    assert!(m.contains("seed = \"11\"") && m.contains("n = \"2000\""), "{m}");

    let o = Command::new(env!("CARGO_BIN_EXE_qex"))
        .args(["ratio", "--r", "0.25", "--rho", "2^-4", "--n", "1000", "--out"])
        .arg(t.path())
        .env("QEX_SEED", "9")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert!(read(t.path(), "ratio.manifest.toml").contains("seed = \"9\""));
}

#[test]
fn manifest_lists_outputs_and_constants() {
    let t = tempfile::tempdir().unwrap();
    let o = qex(&["ratio", "--r", "0.25", "--rho", "2^-4", "--n", "1000"], t.path());
    assert_eq!(code(&o), 0);
    let m: toml::Table = read(t.path(), "ratio.manifest.toml").parse().unwrap();
    let run = m["run"].as_table().unwrap();
    assert_eq!(run["command"].as_str(), Some("ratio"));
    assert_eq!(run["status"].as_str(), Some("ok"));
    assert!(run["files"].as_array().unwrap().iter().any(|f| f.as_str() == Some("ratio.csv")));
    assert!(m["constants"].as_table().unwrap().contains_key("c0_d2"));
    let csv = read(t.path(), "ratio.csv");
    assert!(!csv.contains("unix"));
    assert_eq!(csv.lines().count(), 2);
}

use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = "[grid]\nnx = 12\nny = 12\n[physics]\nmodel = \"B\"\n[scheme]\ndt = 1e-3\nmax_steps = 20\nreport_interval = 5\nseed = 3\n";

fn dynbc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dynbc")).args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_owned()
}

#[test]
fn run_succeeds_and_writes_timeseries() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "a.cfg", SMALL);
    let out = tmp.path().join("out");
    let o = dynbc(&["run", "--config", &cfg, "--out", out.to_str().unwrap(), "--quiet"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(o.stderr.is_empty());
    let ts = std::fs::read_to_string(out.join("timeseries.csv")).unwrap();
    assert_eq!(ts.lines().count(), 6);
    assert!(out.join("phi_t0.020000.pgm").exists());
}

#[test]
fn seed_flag_reaches_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "a.cfg", SMALL);
    let out = tmp.path().join("out");
    let o = dynbc(&["run", "--config", &cfg, "--out", out.to_str().unwrap(), "--seed", "77"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stderr).contains("finished 20 steps"));
    let resolved = std::fs::read_to_string(out.join("config.toml")).unwrap();
    assert!(resolved.contains("seed = 77"));
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = write(tmp.path(), "bad.cfg", "[physics]\nmodel = \"Q\"\n");
    let out = tmp.path().join("bad_out");
    let o = dynbc(&["run", "--config", &bad, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());

    let alpha0 = write(tmp.path(), "a0.cfg", "[grid]\nnx = 8\nny = 8\n[physics]\nmodel = \"A\"\nalpha = 0.0\n");
    let o = dynbc(&["check", "--config", &alpha0]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stdout).contains("[FAIL] alpha_positive"));

    let cfg = write(tmp.path(), "a.cfg", SMALL);
    let o = dynbc(&["sweep", "--config", &cfg, "--out", tmp.path().join("s").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));

    assert_ne!(dynbc(&["run"]).status.code(), Some(0));
}

#[test]
fn sweep_with_jobs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "s.cfg", &format!("{SMALL}[sweep]\nbeta = [0.5, 2.0]\nseed = [1, 2]\n"));
    let out = tmp.path().join("s");
    let o = dynbc(&["sweep", "--config", &cfg, "--out", out.to_str().unwrap(), "--jobs", "2", "--quiet"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    assert!(summary.starts_with("point,beta,seed,status,steps,"));
    assert_eq!(summary.lines().count(), 5);
    assert!(out.join("p003_beta=2_seed=2").join("config.toml").exists());
}

#[test]
fn bundled_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let text = std::fs::read_to_string(&path).unwrap();
        dynbc::io::RunConfig::from_toml_str(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        n += 1;
    }
    assert!(n >= 5);
}

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn edpauli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_edpauli")).args(args).env("EDPAULI_THREADS", "1").output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

const SMALL_PACKET: &str = "scenario = \"free_packet\"\n\
    [grid]\npoints = [256]\nextents = [20.0]\n\
    [params]\ndt = 0.01\nsteps = 40\n\
    [initial]\nmomentum = 0.5\n\
    [sampler]\nwalkers = 2000\nseed = 11\n\
    [output]\nstride = 10\n";

#[test]
fn validate_accepts_and_rejects() {
    let dir = tempfile::tempdir().unwrap();
    let good = write(dir.path(), "good.toml", SMALL_PACKET);
    let out = edpauli(&["validate", &good]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("valid free_packet"));

    let bad = write(dir.path(), "bad.toml", "scenario = \"stern_gerlach\"\n[params]\nm = -1.0\nwarp = 9\n");
    let out = edpauli(&["validate", &bad]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("params.m"), "{err}");
    assert!(err.contains("warp"), "{err}");
    assert!(err.contains("b_gradient"), "{err}");

    let out = edpauli(&["validate", dir.path().join("missing.toml").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn invalid_run_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.toml", "scenario = \"larmor\"\n[params]\ndt = -0.1\n");
    let target = dir.path().join("out");
    let out = edpauli(&["run", &bad, "--out", target.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!target.exists());
}

#[test]
fn rotation_demo_prints_the_quarter_turn() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "rot.toml",
        "scenario = \"rotation_demo\"\n[params]\nsteps = 2\n\
         [rotation]\naxis = [0.0, 1.0, 0.0]\nangle = 1.5707963267948966\nspatial = false\n",
    );
    let target = dir.path().join("rot");
    let out = edpauli(&["run", &cfg, "--out", target.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("initial spinor (1.0000+0.0000i, 0.0000+0.0000i)"), "{text}");
    assert!(text.contains("rotated spinor (0.7071+0.0000i, 0.7071+0.0000i)"), "{text}");
    assert!(text.contains("k probabilities (0.5000, 0.5000)"), "{text}");
    for f in ["observables.csv", "continuity.csv", "summary.json", "README.txt", "snapshot_initial_psi.bin"] {
        assert!(target.join(f).exists(), "{f} missing");
    }
}

#[test]
fn tolerance_failure_exits_four() {
    // ω·dt = 0.4 under plain Crank–Nicolson misses the frequency by about 0.3%
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "larmor.toml",
        "scenario = \"larmor\"\n[params]\ndt = 0.4\nsteps = 63\nintegrator = \"crank_nicolson\"\n",
    );
    let target = dir.path().join("larmor");
    let out = edpauli(&["run", &cfg, "--out", target.to_str().unwrap(), "--quiet"]);
    assert_eq!(out.status.code(), Some(4));
    assert!(out.stdout.is_empty());
    let summary: String = fs::read_to_string(target.join("summary.json")).unwrap();
    assert!(summary.contains("\"status\": \"failed\""), "{summary}");
}

#[test]
fn runs_are_reproducible_and_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "packet.toml", SMALL_PACKET);
    let run = |name: &str, seed: Option<&str>| {
        let target = dir.path().join(name);
        let mut args = vec!["run", cfg.as_str(), "--out", target.to_str().unwrap(), "--quiet"];
        if let Some(s) = seed {
            args.extend(["--seed", s]);
        }
        let out = edpauli(&args);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        (fs::read(target.join("observables.csv")).unwrap(), fs::read(target.join("ensemble_L1.csv")).unwrap())
    };
    let a = run("a", None);
    let b = run("b", None);
    let c = run("c", Some("12"));
    assert_eq!(a, b);
    assert_eq!(a.0, c.0);
    assert_ne!(a.1, c.1);
}

#[test]
fn oracle_reports_each_problem() {
    let out = edpauli(&["oracle", "--count", "3", "--seed", "1"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(text.lines().filter(|l| l.starts_with("pass")).count(), 3, "{text}");
    assert!(text.contains("3 of 3 problems within tolerance"));
}

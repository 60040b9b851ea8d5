use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use satchain_cli::certfile::CertificateFile;
use satchain_cli::config::CONFIG_DIR_ENV;

fn satchain(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_satchain"))
        .args(args)
        .env_remove(CONFIG_DIR_ENV)
        .output()
        .expect("spawn")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

// One synthesized n = 2 certificate shared by every test.
fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let out = satchain(&["synthesize", "--n", "2", "--out", root.join("cert.json").to_str().unwrap()]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        Fixture { _dir: dir, root }
    })
}

fn cert_path() -> PathBuf {
    fixture().root.join("cert.json")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn synthesis_failures_use_their_exit_codes() {
    let degenerate = satchain(&["synthesize", "--n", "1"]);
    assert_eq!(code(&degenerate), 2);
    assert!(String::from_utf8_lossy(&degenerate.stderr).contains("n >= 2"));
    assert_eq!(code(&satchain(&["synthesize", "--n", "2", "--sat", "cubic"])), 1);
}

#[test]
fn certificate_round_trips_and_rejects_other_schemas() {
    let text = std::fs::read_to_string(cert_path()).unwrap();
    let file = CertificateFile::from_json(&text).unwrap();
    assert_eq!(file.n, 2);
    assert_eq!(file.to_json().unwrap().trim_end(), text.trim_end());
    assert_eq!(CertificateFile::from_json(&file.to_json().unwrap()).unwrap(), file);

    let bumped = text.replacen("\"version\": 1", "\"version\": 99", 1);
    assert_ne!(bumped, text);
    let err = CertificateFile::from_json(&bumped).unwrap_err();
    assert_eq!(err.exit_code(), 1);
    let renamed = text.replacen("satchain-certificate", "other-certificate", 1);
    assert!(CertificateFile::from_json(&renamed).is_err());

    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.json", &bumped);
    let scn = write(dir.path(), "s.toml", "system = \"sign-loop\"\nx0 = [1.0, 0.0]\nhorizon = 1.0\n");
    assert_eq!(code(&satchain(&["simulate", "--scenario", &scn, "--certificate", &bad])), 1);
}

#[test]
fn malformed_scenarios_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cert = cert_path();
    let cert = cert.to_str().unwrap();
    for (name, text) in [
        ("short.toml", "system = \"hybrid-loop\"\nx0 = [1.0]\nhorizon = 5.0\n"),
        ("typo.toml", "system = \"hybrid-loop\"\nx0 = [1.0, 0.0]\nhorizon = 5.0\nhorizn = 2.0\n"),
        ("mismatch.toml", "system = \"hybrid-loop\"\nx0 = [1.0, 0.0]\nhorizon = 5.0\n[d_n]\nkind = \"sinusoid\"\namplitude = 1.0\nfreq = 1.0\n"),
    ] {
        let scn = write(dir.path(), name, text);
        let out = satchain(&["simulate", "--scenario", &scn, "--certificate", cert]);
        assert_eq!(code(&out), 1, "{name}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let missing = dir.path().join("absent.toml");
    assert_eq!(code(&satchain(&["simulate", "--scenario", missing.to_str().unwrap(), "--certificate", cert])), 1);
}

#[test]
fn simulate_writes_the_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let scn = write(dir.path(), "s.toml", "system = \"sign-loop\"\nx0 = [1.0, 1.0]\nhorizon = 15.0\n");
    let out = satchain(&["simulate", "--scenario", &scn, "--certificate", cert_path().to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let csv = String::from_utf8(out.stdout).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,x1,x2,u,sat_in,V0,Vn,W"));
    let last: Vec<f64> = lines.last().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(last[0], 15.0);
    assert!(last[1].abs() < 1e-6 && last[2].abs() < 1e-6);
}

#[test]
fn config_directory_supplies_relative_files() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "s.toml", "system = \"hybrid-loop\"\nx0 = [0.5, 0.0]\nhorizon = 2.0\n");
    std::fs::copy(cert_path(), dir.path().join("c.json")).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_satchain"))
        .args(["simulate", "--scenario", "s.toml", "--certificate", "c.json"])
        .env(CONFIG_DIR_ENV, dir.path())
        .current_dir(std::env::temp_dir())
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn corrupted_decay_rate_fails_certification() {
    let dir = tempfile::tempdir().unwrap();
    let mut file = CertificateFile::load(&cert_path()).unwrap();
    file.certificate.c_n *= 10.0;
    let cert = dir.path().join("corrupt.json");
    file.save(&cert).unwrap();
    let cfg = write(dir.path(), "certify.toml", "systems = [\"sign-loop\", \"hybrid-loop\"]\nruns = 1\nhorizon = 10.0\n");
    let report = dir.path().join("report.csv");
    let out = satchain(&[
        "certify",
        "--certificate",
        cert.to_str().unwrap(),
        "--config",
        &cfg,
        "--out",
        report.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 4, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(&report).unwrap();
    let der1 = csv.lines().find(|l| l.starts_with("der1,")).expect("der1 row");
    assert!(der1.ends_with(",false"));

    let good = satchain(&["certify", "--certificate", cert_path().to_str().unwrap(), "--config", &cfg]);
    assert_eq!(code(&good), 0, "{}", String::from_utf8_lossy(&good.stderr));
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "gain.toml", "p = [2.0]\namplitude_points = 3\n");
    let out = satchain(&[
        "gain",
        "--certificate",
        cert_path().to_str().unwrap(),
        "--config",
        &cfg,
        "--out-dir",
        dir.path().join("g").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("amplitude_points"));
}

#[test]
fn gain_writes_reports_and_curves() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "gain.toml", "p = [1.0, inf]\namp_points = 3\nhorizon = 30.0\n");
    let out_dir = dir.path().join("g");
    let out = satchain(&[
        "gain",
        "--certificate",
        cert_path().to_str().unwrap(),
        "--config",
        &cfg,
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["gain_p1.csv", "gain_p1_summary.csv", "gain_pinf.csv", "gain_p1_curve0.dat", "gain_pinf_curve2.dat"] {
        assert!(out_dir.join(name).exists(), "{name}");
    }
}

//! End-to-end checks of the binary: exit codes and byte-stable artifacts.

use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_kleinian"))
}

fn config() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/apollonian.json")
}

fn tmp(name: &str) -> PathBuf {
    std::env::temp_dir().join(format!("kleinian-cli-test-{name}"))
}

#[test]
fn count_is_byte_stable() {
    let out1 = tmp("bends-1.csv");
    let out2 = tmp("bends-2.csv");
    for out in [&out1, &out2] {
        let status = bin()
            .args(["count", "--group"])
            .arg(config())
            .args(["--T", "200", "--max-depth", "120"])
            .arg("--out")
            .arg(out)
            .status()
            .unwrap();
        assert!(status.success());
    }
    let a = std::fs::read(&out1).unwrap();
    let b = std::fs::read(&out2).unwrap();
    assert!(!a.is_empty());
    assert_eq!(a, b, "bends CSV must be byte-identical across runs");
}

#[test]
fn worker_count_does_not_change_output() {
    let out1 = tmp("bends-w1.csv");
    let out8 = tmp("bends-w8.csv");
    for (out, threads) in [(&out1, "1"), (&out8, "8")] {
        let status = bin()
            .args(["count", "--group"])
            .arg(config())
            .args(["--T", "300", "--max-depth", "150", "--threads", threads])
            .arg("--out")
            .arg(out)
            .status()
            .unwrap();
        assert!(status.success());
    }
    assert_eq!(
        std::fs::read(&out1).unwrap(),
        std::fs::read(&out8).unwrap(),
        "worker count changed the CSV bytes"
    );
    // The KLEINIAN_THREADS environment variable is an alternative spelling.
    let out_env = tmp("bends-env.csv");
    let status = bin()
        .args(["count", "--group"])
        .arg(config())
        .args(["--T", "300", "--max-depth", "150"])
        .arg("--out")
        .arg(&out_env)
        .env("KLEINIAN_THREADS", "4")
        .status()
        .unwrap();
    assert!(status.success());
    assert_eq!(
        std::fs::read(&out1).unwrap(),
        std::fs::read(&out_env).unwrap()
    );
}

#[test]
fn verify_haar_seeded_csv_is_stable() {
    let out1 = tmp("haar-1.csv");
    let out2 = tmp("haar-2.csv");
    for out in [&out1, &out2] {
        let status = bin()
            .args(["verify-haar", "--n", "2", "--samples", "100", "--seed", "7"])
            .arg("--out")
            .arg(out)
            .status()
            .unwrap();
        assert!(status.success());
    }
    assert_eq!(std::fs::read(&out1).unwrap(), std::fs::read(&out2).unwrap());
}

#[test]
fn missing_config_exits_2() {
    let status = bin()
        .args(["count", "--group", "/nonexistent/group.json", "--T", "10"])
        .arg("--out")
        .arg(tmp("unused.csv"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn malformed_config_exits_2() {
    let bad = tmp("bad.json");
    std::fs::write(&bad, "{ not json").unwrap();
    let status = bin()
        .args(["count", "--group"])
        .arg(&bad)
        .args(["--T", "10"])
        .arg("--out")
        .arg(tmp("unused2.csv"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn render_produces_svg() {
    let out = tmp("packing.svg");
    let status = bin()
        .args(["render", "--group"])
        .arg(config())
        .args(["--T", "50", "--max-depth", "60"])
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let svg = std::fs::read_to_string(&out).unwrap();
    assert!(svg.starts_with("<svg"));
    assert!(svg.matches("<circle").count() >= 10);
}

#[test]
fn verify_spectral_passes() {
    let status = bin()
        .args(["verify-spectral", "--seed", "3"])
        .status()
        .unwrap();
    assert!(status.success());
}

use std::path::Path;
use std::process::Command;

const SMALL: &str = r#"
schema_version = 1
[rx.equalizer]
fft_size = 256
[run]
symbols = 8192
trials = 1
spans = [1, 2]
mdl_curve_trials = 10
"#;

fn ccmcf(args: &[&str], config: &Path, out: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_ccmcf"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .env("RUST_LOG", "error")
        .output()
        .unwrap()
}

#[test]
fn distance_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.toml");
    std::fs::write(&cfg, SMALL).unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = ccmcf(&["distance", "--seed", "7", "--workers", "2"], &cfg, out);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for file in ["distance.json", "distance_points.csv", "distance.dat"] {
        let x = std::fs::read(a.join(file)).unwrap();
        assert_eq!(x, std::fs::read(b.join(file)).unwrap(), "{file}");
        assert!(String::from_utf8(x).unwrap().contains("seed"));
    }
}

#[test]
fn config_errors_exit_with_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "schema_version = 7\n").unwrap();
    let o = ccmcf(&["distance"], &cfg, dir.path());
    assert_eq!(o.status.code(), Some(1));

    std::fs::write(&cfg, SMALL).unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_ccmcf"))
        .args(["distance", "--config"])
        .arg(&cfg)
        .env("CCMCF_RUN__TRIALS", "0")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn failed_points_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.toml");
    std::fs::write(&cfg, SMALL).unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_ccmcf"))
        .args(["distance", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path())
        .env("CCMCF_RX__EQUALIZER__MU", "500.0")
        .env("RUST_LOG", "off")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("distance_points.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
}

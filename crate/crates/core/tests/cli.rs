use std::path::{Path, PathBuf};
use std::process::Command;

use attrlab::experiment::{self, ExperimentConfig, Manifest};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("exp.toml");
    let text = format!(
        "out = {:?}\n\n[model]\ncheckpoint = {:?}\n\n{body}",
        dir.join("out"),
        fixture("reference.ckpt")
    );
    std::fs::write(&path, text).unwrap();
    path
}

fn attrlab(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_attrlab")).args(args).output().unwrap()
}

const EXPLAIN: &str = r#"
[explain]
index = 0
samples = 50
sampler = { kind = "bernoulli-drop", p = 0.7 }
"#;

#[test]
fn explain_matches_golden_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), EXPLAIN);
    let out = attrlab(&["explain", "--config", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("out/explanation.csv")).unwrap();
    assert_eq!(csv, std::fs::read_to_string(fixture("golden_explanation.csv")).unwrap());
    let png = std::fs::read(dir.path().join("out/explanation.png")).unwrap();
    assert_eq!(png, std::fs::read(fixture("golden_explanation.png")).unwrap());
    assert!(std::fs::read(dir.path().join("out/explanation.pgm")).unwrap().starts_with(b"P5\n28 28\n255\n"));
}

#[test]
fn unknown_key_fails_before_any_work() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!("{EXPLAIN}colour = \"red\"\n"));
    let out = attrlab(&["explain", "--config", cfg.to_str().unwrap()]);
    assert!(!out.status.success());
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert_eq!(stderr.lines().count(), 1, "{stderr}");
    assert!(stderr.starts_with("error category=config "), "{stderr}");
    assert!(!dir.path().join("out").exists());
}

#[test]
fn missing_section_and_bad_values_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), EXPLAIN);
    let out = attrlab(&["bench", "--config", cfg.to_str().unwrap()]);
    assert!(String::from_utf8(out.stderr).unwrap().starts_with("error category=config "));
    let out = attrlab(&["explain", "--config", cfg.to_str().unwrap(), "--p", "1.5"]);
    assert!(String::from_utf8(out.stderr).unwrap().starts_with("error category=parameter "));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn overrides_change_the_run_and_are_echoed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), EXPLAIN);
    let out = attrlab(&[
        "explain",
        "--config",
        cfg.to_str().unwrap(),
        "--p",
        "0.3",
        "--samples",
        "10",
        "--seed",
        "5",
        "--multiply-by-input",
    ]);
    assert!(out.status.success());
    let m = Manifest::read(&dir.path().join("out")).unwrap();
    assert_eq!(m.seed, 5);
    let e = m.config.explain.unwrap();
    assert_eq!((e.samples, e.multiply_by_input), (10, true));
    assert_eq!(e.sampler, attrlab::samplers::SamplerSpec::bernoulli(0.3));
}

#[test]
fn manifest_replay_and_tamper_detection() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), EXPLAIN);
    let first = experiment::run_file(experiment::Command::Explain, &cfg, &Default::default(), None).unwrap();
    let out = dir.path().join("out");
    assert!(experiment::verify_manifest(&out).unwrap().is_empty());

    // the echoed config alone reproduces every artifact
    let mut echoed: ExperimentConfig = ExperimentConfig::parse(&first.config.to_toml().unwrap()).unwrap();
    echoed.out = Some(dir.path().join("replay"));
    let replay = experiment::run(experiment::Command::Explain, &echoed, Path::new("/")).unwrap();
    assert_eq!(first.artifacts, replay.artifacts);

    let mut bytes = std::fs::read(out.join("explanation.csv")).unwrap();
    bytes[0] ^= 1;
    std::fs::write(out.join("explanation.csv"), bytes).unwrap();
    assert_eq!(experiment::verify_manifest(&out).unwrap(), vec!["explanation.csv".to_string()]);
    let v = attrlab(&["verify", out.to_str().unwrap()]);
    assert!(!v.status.success());
}

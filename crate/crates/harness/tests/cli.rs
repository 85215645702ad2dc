use std::process::{Command, Output};

fn tagi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tagi")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn help_exits_zero() {
    for args in [&["--help"][..], &["train", "--help"], &["gan-train", "--help"]] {
        let o = tagi(args);
        assert_eq!(o.status.code(), Some(0), "{args:?}");
        assert!(stdout(&o).contains("Usage"));
    }
    let o = tagi(&["train", "--help"]);
    for flag in ["--config", "--dataset-root", "--seed", "--epochs", "--batch", "--sigma-v0", "--eta", "--norm", "--out"] {
        assert!(stdout(&o).contains(flag), "{flag}");
    }
}

#[test]
fn usage_errors() {
    assert_eq!(tagi(&["train", "--no-such-flag"]).status.code(), Some(2));
    assert_eq!(tagi(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(tagi(&["train", "--norm", "group"]).status.code(), Some(2));
    assert_eq!(tagi(&[]).status.code(), Some(2));
}

#[test]
fn config_and_data_failures_have_distinct_codes() {
    let o = tagi(&["train", "--config", "no-such-preset"]);
    assert_eq!(o.status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let o = tagi(&["train", "--config", "mnist-cnn", "--dataset-root", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("error"));
    let bad = dir.path().join("bad.cfg");
    std::fs::write(&bad, "head: classification 10\ninput 4 - - - -\nfc 3 - - - swish\noutput 10 - - - -\n").unwrap();
    assert_eq!(tagi(&["train", "--config", bad.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn failed_oracle_check_is_a_numeric_failure() {
    let ok = tagi(&["verify-moments", "--samples", "4000", "--cases", "2", "--threshold", "8"]);
    assert_eq!(ok.status.code(), Some(0));
    assert_eq!(stdout(&ok).lines().filter(|l| l.ends_with("\tpass")).count(), 16);
    // nothing sampled agrees to zero standard errors
    let fail = tagi(&["verify-moments", "--samples", "4000", "--cases", "2", "--threshold", "0"]);
    assert_eq!(fail.status.code(), Some(4));
}

#[test]
fn config_file_overrides_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("toy.cfg");
    std::fs::write(&cfg, "family: toy2d\nepochs: 2\nbatch: 8\n").unwrap();
    let out = dir.path().join("run");
    let o = tagi(&["gan-train", "--config", cfg.to_str().unwrap(), "--epochs", "5", "--limit", "5", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let log = std::fs::read_to_string(out.join("gan-log.tsv")).unwrap();
    assert_eq!(log.lines().count(), 3, "header and two epochs:\n{log}");
    assert!(log.lines().nth(1).unwrap().starts_with("1\t5\t"));
}

#[test]
fn generate_reloads_a_trained_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = tagi(&["gan-train", "--config", "toy2d", "--limit", "20", "--seed", "3", "--out", out]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let trained = std::fs::read_to_string(dir.path().join("samples.tsv")).unwrap();
    let o = tagi(&["generate", "--config", "toy2d", "--checkpoint", out, "--seed", "3"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o), trained);
    assert_eq!(trained.lines().count(), 501);
}

#[test]
fn bench_prints_a_fit() {
    let o = tagi(&["bench-scaling", "--widths", "4,8", "--batches", "1", "--repeats", "1"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).lines().last().unwrap().starts_with("fit\t"));
}

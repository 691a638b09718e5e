use std::path::PathBuf;
use std::process::Command;

use convland_core::{netspec_file, ActivationKind};
use convland_harness::cli::run;
use convland_harness::experiments::mnist_cnn_spec;
use convland_harness::report::CsvTable;

fn mnist_netspec_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fig1.netspec")
}

fn call(args: &[&str]) -> (i32, String) {
    let mut out = Vec::new();
    let argv = std::iter::once("convland").chain(args.iter().copied());
    let code = run(argv, &mut out);
    (code, String::from_utf8(out).unwrap())
}

#[test]
fn shipped_netspec_is_mnist_cnn() {
    let text = std::fs::read_to_string(mnist_netspec_path()).unwrap();
    let spec = netspec_file::from_toml(&text).unwrap();
    assert_eq!(spec, mnist_cnn_spec(100, ActivationKind::Sigmoid).unwrap());
    assert_eq!(text, netspec_file::to_toml(&spec));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(call(&[]).0, 2);
    assert_eq!(call(&["no-such-command"]).0, 2);
    assert_eq!(call(&["train", "--bogus"]).0, 2);
    assert_eq!(call(&["construct-zeroloss", "--case", "4"]).0, 2);
    assert_eq!(call(&["width-audit"]).0, 2);
    assert_eq!(call(&["train", "--config", "/nonexistent/cfg.toml"]).0, 2);
    assert_eq!(call(&["--help"]).0, 0);
}

#[test]
fn bad_config_key_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "[train]\nlearning_rat = 1.0\n").unwrap();
    let (code, text) = call(&["train", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code, 2, "{text}");
    assert!(text.contains("learning_rat"));
}

#[test]
fn width_audit_on_mnist_cnn() {
    let spec = mnist_netspec_path();
    let (code, text) = call(&["width-audit", "--spec", spec.to_str().unwrap(), "--n", "60000"]);
    assert_eq!(code, 0, "{text}");
    assert!(text.contains("widths = 784, 67600, 16900, 2880, 720, 100, 10"));
    assert!(text.contains("M=67600 at layer 1"));
    assert!(text.contains("wide_enough=true"));
    let (_, narrow) = call(&["width-audit", "--n", "70000"]);
    assert!(narrow.contains("wide_enough=false"));
}

#[test]
fn zero_loss_cases() {
    for case in ["1", "2", "3"] {
        let (code, text) = call(&["construct-zeroloss", "--case", case, "--seed", "7"]);
        assert_eq!(code, 0, "case {case}: {text}");
        assert!(text.contains("in S_k = true"));
    }
}

#[test]
fn construction_commands_pass() {
    for cmd in ["check-assumptions", "construct-independent", "fit-expressivity"] {
        let (code, text) = call(&[cmd, "--n", "16", "--seed", "3"]);
        assert_eq!(code, 0, "{cmd}: {text}");
    }
    let (code, text) = call(&["construct-independent", "--n", "250"]);
    assert_eq!(code, 2, "{text}");
    assert!(text.contains("width >= N = 250"));
}

#[test]
fn reports_go_to_the_out_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("rank.csv");
    let (code, text) = call(&["rank-genericity", "--n", "16", "--trials", "5", "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0, "{text}");
    assert!(text.contains("full rank 5/5"));
    let (schema, _, rows) = CsvTable::read(&out).unwrap();
    assert_eq!(schema, "convland.rank-genericity/1");
    assert_eq!(rows.len(), 5);

    let out = dir.path().join("bounds.csv");
    let (code, text) = call(&["grad-bounds", "--points", "4", "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0, "{text}");
    assert_eq!(CsvTable::read(&out).unwrap().2.len(), 4);

    let out = dir.path().join("curve.csv");
    let (code, text) = call(&["train", "--n", "8", "--epochs", "3", "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0, "{text}");
    assert_eq!(CsvTable::read(&out).unwrap().2.len(), 4);
}

#[test]
fn sweep_command() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t2.csv");
    let (code, text) = call(&["table2-sweep", "--n", "8", "--t1", "1,2", "--epochs", "1", "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0, "{text}");
    let (schema, header, rows) = CsvTable::read(&out).unwrap();
    assert_eq!(schema, "convland.filter-sweep/1");
    assert_eq!(header[0], "T_1");
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[1][1], "8x1352");
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_convland");
    assert_eq!(Command::new(bin).output().unwrap().status.code(), Some(2));
    let out = Command::new(bin)
        .args(["width-audit", "--n", "60000"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("M=67600"));
}

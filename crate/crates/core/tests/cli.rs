//! End-to-end CLI tests through the compiled binary: subcommand happy
//! paths, exit codes and manifest reconstruction.

mod common;

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_tsnmf")
}

fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().unwrap()
}

fn write_arc_csv(path: &Path, m: usize) {
    let mut text = String::new();
    for j in 0..m {
        let phi = 1.0 * (j as f64) / (m as f64 - 1.0);
        let r = 1.0 + 0.2 * j as f64;
        text.push_str(&format!(
            "{:.6},{:.6},{:.6}\n",
            r * phi.cos(),
            r * phi.sin(),
            0.1 * r
        ));
    }
    std::fs::write(path, text).unwrap();
}

#[test]
fn factorize_writes_the_full_output_set() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("x.csv");
    write_arc_csv(&input, 12);
    let out = dir.path().join("run");
    let output = run(&[
        "factorize",
        "--input",
        input.to_str().unwrap(),
        "--k",
        "2",
        "--epsilon",
        "pi/2",
        "--imax",
        "30",
        "--seed",
        "7",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{output:?}");
    for name in ["W.csv", "H.csv", "trace.csv", "manifest.json"] {
        assert!(out.join(name).exists(), "missing {name}");
    }
    let manifest = tsnmf::io::read_manifest(&out.join("manifest.json")).unwrap();
    assert_eq!(manifest.command, "factorize");
    assert_eq!(manifest.k, 2);
    assert_eq!(manifest.seed, 7);
    let trace = std::fs::read_to_string(out.join("trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 31); // header + one row per iteration
    assert!(trace.starts_with("i,step_tag,alpha,fit,spread\n"));
}

#[test]
fn factorize_is_reconstructible_from_its_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("x.csv");
    write_arc_csv(&input, 10);
    let out = dir.path().join("run");
    assert!(run(&[
        "factorize",
        "--input",
        input.to_str().unwrap(),
        "--k",
        "2",
        "--epsilon",
        "1.1",
        "--imax",
        "25",
        "--seed",
        "13",
        "--out",
        out.to_str().unwrap(),
    ])
    .status
    .success());
    let manifest = tsnmf::io::read_manifest(&out.join("manifest.json")).unwrap();
    // Re-run with the manifest's own parameters into a fresh directory.
    let out2 = dir.path().join("rerun");
    assert!(run(&[
        "factorize",
        "--input",
        &manifest.provenance.source,
        "--k",
        &manifest.k.to_string(),
        "--epsilon",
        &manifest.config.epsilon.to_string(),
        "--imax",
        &manifest.config.i_max.to_string(),
        "--seed",
        &manifest.config.seed.to_string(),
        "--out",
        out2.to_str().unwrap(),
    ])
    .status
    .success());
    for name in ["W.csv", "H.csv", "trace.csv"] {
        let a = std::fs::read(out.join(name)).unwrap();
        let b = std::fs::read(out2.join(name)).unwrap();
        assert_eq!(a, b, "{name} not reconstructible");
    }
}

#[test]
fn sweep_covers_the_figure_grid_epsilons() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("x.csv");
    write_arc_csv(&input, 10);
    let out = dir.path().join("sweep");
    let output = run(&[
        "sweep",
        "--input",
        input.to_str().unwrap(),
        "--k",
        "2",
        "--epsilons",
        "pi/4,pi/2,3pi/4",
        "--imax",
        "10",
        "--seed",
        "3",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{output:?}");
    assert!(out.join("sweep.json").exists());
    assert!(out.join("pareto.csv").exists());
    for i in 0..3 {
        let sub = out.join(format!("eps_{i:02}"));
        assert!(sub.join("W.csv").exists());
        assert!(sub.join("manifest.json").exists());
    }
    let pareto = std::fs::read_to_string(out.join("pareto.csv")).unwrap();
    assert_eq!(pareto.lines().count(), 4); // header + three points
}

#[test]
fn preprocess_ionosphere_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("ionosphere.data");
    std::fs::write(&input, common::synthetic_ionosphere_csv(42)).unwrap();
    let cleaned = dir.path().join("cleaned.csv");
    let output = run(&[
        "preprocess-ionosphere",
        "--input",
        input.to_str().unwrap(),
        "--out",
        cleaned.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{output:?}");
    let text = std::fs::read_to_string(&cleaned).unwrap();
    let first = text.lines().next().unwrap();
    // 32 attributes plus the label.
    assert_eq!(first.split(',').count(), 33);
    assert!(first.ends_with(",g") || first.ends_with(",b"));

    // The cleaned file feeds straight back into factorize.
    let out = dir.path().join("run");
    let output = run(&[
        "factorize",
        "--input",
        cleaned.to_str().unwrap(),
        "--label-column",
        "last",
        "--k",
        "2",
        "--epsilon",
        "pi/4",
        "--imax",
        "5",
        "--seed",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{output:?}");
    assert!(out.join("labels.csv").exists());

    // And scatter data comes out of the finished run.
    let scatter = dir.path().join("scatter.csv");
    let output = run(&[
        "scatter",
        "--result",
        out.to_str().unwrap(),
        "--out",
        scatter.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{output:?}");
    let text = std::fs::read_to_string(&scatter).unwrap();
    assert!(text.starts_with("h1,h2,label\n"));
    assert!(
        text.lines().nth(1).unwrap().ends_with(",g")
            || text.lines().nth(1).unwrap().ends_with(",b")
    );
}

#[test]
fn unknown_flag_exits_with_usage_error() {
    let output = run(&["factorize", "--nonsense"]);
    assert_eq!(output.status.code(), Some(1));
}

#[test]
fn bad_epsilon_exits_with_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("x.csv");
    write_arc_csv(&input, 6);
    let output = run(&[
        "factorize",
        "--input",
        input.to_str().unwrap(),
        "--k",
        "1",
        "--epsilon",
        "banana",
        "--imax",
        "5",
        "--seed",
        "1",
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(1));
}

#[test]
fn missing_input_exits_with_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let output = run(&[
        "factorize",
        "--input",
        dir.path().join("absent.csv").to_str().unwrap(),
        "--k",
        "1",
        "--epsilon",
        "1.0",
        "--imax",
        "5",
        "--seed",
        "1",
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn non_numeric_cell_exits_with_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("x.csv");
    std::fs::write(&input, "1,2\n3,oops\n").unwrap();
    let output = run(&[
        "factorize",
        "--input",
        input.to_str().unwrap(),
        "--k",
        "1",
        "--epsilon",
        "1.0",
        "--imax",
        "5",
        "--seed",
        "1",
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn numerical_failure_exits_with_code_three_and_error_manifest() {
    // Antipodal points have a degenerate mean: a numerical failure, not a
    // parse failure.
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("x.csv");
    std::fs::write(&input, "1,0\n-1,0\n").unwrap();
    let out = dir.path().join("o");
    let output = run(&[
        "factorize",
        "--input",
        input.to_str().unwrap(),
        "--k",
        "1",
        "--epsilon",
        "1.0",
        "--imax",
        "5",
        "--seed",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(3));
    let record = std::fs::read_to_string(out.join("manifest.json")).unwrap();
    let json: serde_json::Value = serde_json::from_str(&record).unwrap();
    assert_eq!(json["status"], "error");
    assert_eq!(json["exit_code"], 3);
}

#[test]
fn zero_column_is_a_data_error_unless_dropped() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("x.csv");
    std::fs::write(&input, "1,0\n0,0\n0.9,0.1\n").unwrap();
    let base_args = |out: &str| {
        vec![
            "factorize".to_string(),
            "--input".to_string(),
            input.to_str().unwrap().to_string(),
            "--k".to_string(),
            "1".to_string(),
            "--epsilon".to_string(),
            "1.0".to_string(),
            "--imax".to_string(),
            "5".to_string(),
            "--seed".to_string(),
            "1".to_string(),
            "--out".to_string(),
            out.to_string(),
        ]
    };
    let out1 = dir.path().join("fail");
    let output = Command::new(bin())
        .args(base_args(out1.to_str().unwrap()))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));

    let out2 = dir.path().join("ok");
    let mut args = base_args(out2.to_str().unwrap());
    args.push("--drop-zero-columns".to_string());
    let output = Command::new(bin()).args(args).output().unwrap();
    assert!(output.status.success(), "{output:?}");
    let manifest = tsnmf::io::read_manifest(&out2.join("manifest.json")).unwrap();
    assert_eq!(manifest.dropped_columns, vec![1]);
}

#[test]
fn scatter_on_wrong_k_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("x.csv");
    // Four-dimensional points so k = 3 is legal for the factorization.
    let mut text = String::new();
    for j in 0..10 {
        let phi = 0.8 * (j as f64) / 9.0;
        text.push_str(&format!(
            "{:.6},{:.6},{:.6},{:.6}\n",
            phi.cos(),
            phi.sin(),
            0.3 + 0.05 * j as f64,
            0.2
        ));
    }
    std::fs::write(&input, text).unwrap();
    let out = dir.path().join("run");
    assert!(run(&[
        "factorize",
        "--input",
        input.to_str().unwrap(),
        "--k",
        "3",
        "--epsilon",
        "pi/2",
        "--imax",
        "5",
        "--seed",
        "1",
        "--out",
        out.to_str().unwrap(),
    ])
    .status
    .success());
    let output = run(&[
        "scatter",
        "--result",
        out.to_str().unwrap(),
        "--out",
        dir.path().join("s.csv").to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(2));
}

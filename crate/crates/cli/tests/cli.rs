use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use loft_cli::RunReport;
use loft_core::dataio::{read_fcov, read_fprj, read_head};
use loft_core::evaluator::MetricsTable;
use tempfile::TempDir;

fn loft(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_loft"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn loft")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = loft(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

/// Synthetic train/test splits, a probe head and uncentered covariances.
fn workspace() -> TempDir {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    ok(
        d,
        &[
            "synth", "--regime", "exact", "--forget", "4,5", "--seed", "2", "--per-class", "60",
            "--out-rm", "rm.fmat", "--out-fg", "fg.fmat", "--test-per-class", "60", "--out-rm-test",
            "rmt.fmat", "--out-fg-test", "fgt.fmat",
        ],
    );
    ok(d, &["probe", "--features", "rm.fmat", "fg.fmat", "--out", "head.bin"]);
    ok(d, &["cov", "--features", "rm.fmat", "--out", "rm.fcov", "--center", "off"]);
    ok(d, &["cov", "--features", "fg.fmat", "--out", "fg.fcov", "--center", "off"]);
    tmp
}

const EVAL_SPLITS: [&str; 8] = [
    "--rm-train", "rm.fmat", "--fg-train", "fg.fmat", "--rm-test", "rmt.fmat", "--fg-test", "fgt.fmat",
];

#[test]
fn pipeline_writes_projector_report_and_metrics() {
    let tmp = workspace();
    let d = tmp.path();
    let stdout = ok(d, &["fit", "--cov-rm", "rm.fcov", "--cov-fg", "fg.fcov", "--out", "p.fprj", "--log", "p.log"]);
    assert!(stdout.contains("params="));

    let u = read_fprj(d.join("p.fprj")).unwrap();
    let report = RunReport::read(&d.join("p.json")).unwrap();
    assert_eq!(report.schema, 1);
    assert_eq!(report.parameters, (u.ambient_dim() * u.subspace_dim()) as u64);
    assert_eq!(report.config.dim_source, "variance-fraction");
    assert_eq!(report.inputs.len(), 2);
    assert_eq!(report.inputs[0].sha256.len(), 64);
    assert!(report.trace.max_orthonormality_error <= 1e-6);
    assert_eq!(fs::read_to_string(d.join("p.log")).unwrap().lines().count(), 51);

    let mut args = vec!["eval", "--head", "head.bin", "--out", "base.json"];
    args.extend(EVAL_SPLITS);
    ok(d, &args);
    let mut args = vec![
        "eval", "--head", "head.bin", "--projector", "p.fprj", "--reference", "base.json", "--report", "p.json",
        "--out", "m.json",
    ];
    args.extend(EVAL_SPLITS);
    let table = ok(d, &args);
    assert!(table.contains("Avg.G."));
    let metrics: MetricsTable = serde_json::from_str(&fs::read_to_string(d.join("m.json")).unwrap()).unwrap();
    assert!(metrics.avg_gap.is_some());
    assert!(metrics.acc_fg_te <= 10.0);
    assert_eq!(RunReport::read(&d.join("p.json")).unwrap().metrics, Some(metrics));
}

#[test]
fn digests_and_projectors_are_stable() {
    let tmp = workspace();
    let d = tmp.path();
    for out in ["a.fprj", "b.fprj"] {
        ok(d, &["fit", "--cov-rm", "rm.fcov", "--cov-fg", "fg.fcov", "--out", out, "--seed", "7", "--init", "random"]);
    }
    assert_eq!(fs::read(d.join("a.fprj")).unwrap(), fs::read(d.join("b.fprj")).unwrap());
    let a = RunReport::read(&d.join("a.json")).unwrap();
    let b = RunReport::read(&d.join("b.json")).unwrap();
    assert_eq!(a.inputs, b.inputs);
    assert_eq!(a.final_value, b.final_value);
}

#[test]
fn explicit_dim_wins_with_a_warning() {
    let tmp = workspace();
    let out = loft(
        tmp.path(),
        &["fit", "--cov-rm", "rm.fcov", "--cov-fg", "fg.fcov", "--out", "p.fprj", "--dim", "3", "--variance-fraction", "0.5"],
    );
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
    assert_eq!(read_fprj(tmp.path().join("p.fprj")).unwrap().subspace_dim(), 3);
}

#[test]
fn merge_pools_by_sample_count() {
    let tmp = workspace();
    let d = tmp.path();
    ok(d, &["cov", "--features", "rm.fmat", "--labels", "0,1", "--out", "a.fcov", "--center", "off"]);
    ok(d, &["cov", "--features", "rm.fmat", "--labels", "2,3", "--out", "b.fcov", "--center", "off"]);
    ok(d, &["cov", "--merge", "a.fcov", "b.fcov", "--out", "ab.fcov", "--center", "off"]);
    let pooled = read_fcov(d.join("ab.fcov")).unwrap();
    let direct = read_fcov(d.join("rm.fcov")).unwrap();
    assert_eq!(pooled.count(), direct.count());
    let diff = pooled.matrix().as_matrix().sub(direct.matrix().as_matrix()).unwrap();
    assert!(diff.max_abs() <= 1e-9 * direct.trace());
}

#[test]
fn absorbed_head_evaluates_like_the_projected_path() {
    let tmp = workspace();
    let d = tmp.path();
    ok(d, &["fit", "--cov-rm", "rm.fcov", "--cov-fg", "fg.fcov", "--out", "p.fprj"]);
    ok(d, &["absorb", "--head", "head.bin", "--projector", "p.fprj", "--out", "abs.bin"]);
    assert_eq!(read_head(d.join("abs.bin")).unwrap().classes(), 6);
    let mut projected = vec!["eval", "--head", "head.bin", "--projector", "p.fprj"];
    projected.extend(EVAL_SPLITS);
    let mut absorbed = vec!["eval", "--head", "abs.bin"];
    absorbed.extend(EVAL_SPLITS);
    assert_eq!(ok(d, &projected), ok(d, &absorbed));
}

#[test]
fn analyze_reports_spectrum_and_errors() {
    let tmp = workspace();
    let d = tmp.path();
    let text = ok(d, &["analyze", "--cov", "rm.fcov", "--top-k", "5", "--variance-fraction", "0.95"]);
    assert_eq!(text.lines().filter(|l| l.trim_start().starts_with(char::is_numeric)).count(), 5);
    ok(d, &["fit", "--cov-rm", "rm.fcov", "--cov-fg", "fg.fcov", "--out", "p.fprj"]);
    ok(
        d,
        &["analyze", "--features", "rm.fmat", "fg.fmat", "--projector", "p.fprj", "--csv", "e.csv", "--json", "e.json"],
    );
    let csv = fs::read_to_string(d.join("e.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("split,index,error,projected_norm"));
    assert_eq!(csv.lines().count(), 1 + 240 + 120);
}

#[test]
fn csv_features_are_accepted() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    fs::write(d.join("x.csv"), "a,b,label\n1,0,0\n0,1,1\n2,0,0\n0,2,1\n").unwrap();
    let text = ok(d, &["cov", "--features", "x.csv", "--out", "x.fcov"]);
    assert!(text.starts_with("n=4 d=2"));
}

#[test]
fn help_documents_head_format() {
    let tmp = TempDir::new().unwrap();
    let text = ok(tmp.path(), &["absorb", "--help"]);
    assert!(text.contains("FMAT1"));
}

#[test]
fn usage_errors_exit_2() {
    let tmp = workspace();
    let d = tmp.path();
    let cases: [&[&str]; 6] = [
        &[],
        &["fit", "--cov-rm", "rm.fcov", "--out", "p.fprj"],
        &["fit", "--cov-rm", "rm.fcov", "--cov-rm", "rm.fcov", "--cov-fg", "fg.fcov", "--out", "p.fprj"],
        &["fit", "--cov-rm", "rm.fcov", "--cov-fg", "fg.fcov", "--out", "p.fprj", "--dim", "0"],
        &["fit", "--cov-rm", "rm.fcov", "--cov-fg", "fg.fcov", "--out", "p.fprj", "--lr", "-1"],
        &["cov", "--features", "rm.fmat", "--out", "x.fcov", "--center", "maybe"],
    ];
    for args in cases {
        assert_eq!(code(&loft(d, args)), 2, "{args:?}");
    }
}

#[test]
fn io_and_format_errors_exit_1_with_path() {
    let tmp = workspace();
    let d = tmp.path();
    let out = loft(d, &["fit", "--cov-rm", "missing.fcov", "--cov-fg", "fg.fcov", "--out", "p.fprj"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.fcov"));

    let bytes = fs::read(d.join("rm.fcov")).unwrap();
    fs::write(d.join("cut.fcov"), &bytes[..bytes.len() - 3]).unwrap();
    let out = loft(d, &["fit", "--cov-rm", "cut.fcov", "--cov-fg", "fg.fcov", "--out", "p.fprj"]);
    assert_eq!(code(&out), 1);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("cut.fcov") && err.contains("offset"), "{err}");
}

#[test]
fn numerical_failures_exit_3() {
    let tmp = workspace();
    let d = tmp.path();
    let mut zeros = b"FMAT1\n".to_vec();
    zeros.extend(3u32.to_le_bytes());
    zeros.extend(32u32.to_le_bytes());
    zeros.push(0);
    zeros.extend(vec![0u8; 3 * 32 * 4]);
    fs::write(d.join("zero.fmat"), zeros).unwrap();
    ok(d, &["cov", "--features", "zero.fmat", "--out", "zero.fcov", "--center", "off"]);
    let out = loft(d, &["fit", "--cov-rm", "rm.fcov", "--cov-fg", "zero.fcov", "--out", "p.fprj"]);
    assert_eq!(code(&out), 3);
    assert!(!PathBuf::from(d.join("p.fprj")).exists());
}

use rkhs_stability::sign_matrix::{self, SignMatrixSpec};
use rkhs_stability::verify::VerifyHooks;
use rkhs_stability::BigUint;
use rkhs_stability_cli::{run, run_with};

fn call(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let mut argv = vec!["rkhs-stability"];
    argv.extend_from_slice(args);
    let code = run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn corrupted(spec: &SignMatrixSpec) -> BigUint {
    sign_matrix::opnorm_inf1_closed(spec) * 2u32
}

#[test]
fn fig1_rows() {
    let (code, out, _) = call(&["fig1", "--p-max", "5"]);
    assert_eq!(code, 0);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "p,n,fig1_bound,gram_ratio_exact");
    assert_eq!(lines[1], "1,8,0.886227,0.666667");
    assert!(lines[2].starts_with("2,32,0.626657,0.533333"));
    assert_eq!(lines.len(), 6);
    let bounds: Vec<f64> = lines[1..].iter().map(|l| l.split(',').nth(2).unwrap().parse().unwrap()).collect();
    assert!(bounds.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn fig1_exact_column() {
    let (code, out, _) = call(&["fig1", "--p-max", "2", "--exact"]);
    assert_eq!(code, 0);
    assert!(out.lines().next().unwrap().ends_with(",gram_ratio_rational"));
    assert!(out.contains(",2/3\n"));
    assert!(out.contains(",8/15\n"));
}

#[test]
fn fig1_far_rows_are_filled() {
    let (code, out, _) = call(&["fig1", "--p-max", "60"]);
    assert_eq!(code, 0);
    let last = out.lines().last().unwrap();
    let cells: Vec<&str> = last.split(',').collect();
    assert_eq!(cells[0], "60");
    assert_eq!(cells[1], "2658455991569831745807614120560689152");
    assert!(!cells[3].is_empty());
}

#[test]
fn csv_is_byte_stable() {
    for args in [
        vec!["fig1", "--p-max", "12", "--exact"],
        vec!["lambda", "--k-max", "4", "--samples", "300", "--seed", "7"],
        vec!["kernel-probe", "stable-spline", "--T", "200", "--seed", "3"],
    ] {
        assert_eq!(call(&args).1, call(&args).1);
    }
}

#[test]
fn norms_and_gram_tables() {
    let (code, out, _) = call(&["norms", "--p-max", "2"]);
    assert_eq!(code, 0);
    assert!(out.contains("\n1,8,3,24,12,"));
    assert!(out.contains("\n2,32,5,160,60,"));
    let (code, out, _) = call(&["gram", "--p-max", "2", "--exact"]);
    assert_eq!(code, 0);
    assert!(out.contains("\n1,8,96,64,0.666667,"));
    assert!(out.contains("\n2,32,1920,1024,0.533333,"));
    assert!(out.trim_end().ends_with("8/15"));
}

#[test]
fn json_lines_rows_parse() {
    let (code, out, _) = call(&["gram", "--p-max", "3", "--format", "json-lines", "--exact"]);
    assert_eq!(code, 0);
    let rows: Vec<serde_json::Value> = out.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0]["opnorm_inf1"], 64);
    assert_eq!(rows[0]["ratio_exact"], "2/3");
}

#[test]
fn lambda_bounds_table() {
    let (code, out, _) = call(&["lambda", "--k-max", "3", "--samples", "200", "--exact"]);
    assert_eq!(code, 0);
    let rows: Vec<Vec<&str>> = out.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows[0].last().unwrap(), &"1");
    assert_eq!(rows[1].last().unwrap(), &"1");
    assert_eq!(rows[2].last().unwrap(), &"2/3");
}

#[test]
fn lambda_evidence_summary() {
    let (code, out, err) = call(&["lambda", "--evidence", "--p-max", "10"]);
    assert_eq!(code, 0);
    assert_eq!(out.lines().count(), 11);
    assert!(err.contains("first p below 0.1: 78"));
    assert!(err.contains("first p below 0.01: 7854"));
}

#[test]
fn kernel_probe_counterexample_s() {
    let (code, out, _) = call(&["kernel-probe", "counterexample-s", "--blocks", "10", "--exact"]);
    assert_eq!(code, 0);
    let l1: Vec<&str> = out
        .lines()
        .filter(|l| l.starts_with("l1_partial"))
        .map(|l| l.rsplit(',').next().unwrap())
        .collect();
    assert_eq!(l1, ["1", "3/2", "11/6", "25/12", "137/60", "49/20", "363/140", "761/280", "7129/2520", "7381/2520"]);
    assert!(out.trim_end().ends_with("verdict,,,,bounded_nonsummable_structural,"));
}

#[test]
fn kernel_probe_verdicts() {
    let (_, out, _) = call(&["kernel-probe", "stable-spline", "--alpha", "0.9", "--T", "800"]);
    assert!(out.contains("summable_certificate"));
    let (_, out, _) = call(&["kernel-probe", "constant", "--c", "1", "--T", "100", "--format", "json-lines"]);
    let last: serde_json::Value = serde_json::from_str(out.lines().last().unwrap()).unwrap();
    assert_eq!(last["verdict"], "divergent_witness");
    assert!(last["notes"][0].as_str().unwrap().contains("cannot decide"));
    let first: serde_json::Value = serde_json::from_str(out.lines().next().unwrap()).unwrap();
    assert_eq!(first["record"], "kernel");
}

#[test]
fn usage_errors_exit_2() {
    let (code, _, err) = call(&["kernel-probe", "gaussian"]);
    assert_eq!(code, 2);
    for name in ["counterexample-v", "counterexample-s", "stable-spline", "constant"] {
        assert!(err.contains(name));
    }
    assert_eq!(call(&["kernel-probe", "stable-spline", "--alpha", "1.0"]).0, 2);
    assert_eq!(call(&["kernel-probe", "constant", "--c", "0"]).0, 2);
    assert_eq!(call(&["fig1", "--p-max", "0"]).0, 2);
    assert_eq!(call(&["lambda", "--k-max", "99"]).0, 2);
    assert_eq!(call(&["lambda", "--evidence", "--p-max", "2"]).0, 2);
    assert_eq!(call(&["frobnicate"]).0, 2);
    assert_eq!(call(&["fig1", "--format", "xml"]).0, 2);
}

#[test]
fn output_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("fig1.csv");
    let (code, out, _) = call(&["fig1", "--p-max", "2", "--output", path.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert!(out.is_empty());
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("p,n,fig1_bound,gram_ratio_exact\n1,8,0.886227,0.666667\n"));
    let bad = dir.path().join("missing").join("x.csv");
    assert_eq!(call(&["fig1", "--output", bad.to_str().unwrap()]).0, 2);
}

#[test]
fn verify_passes() {
    let (code, out, _) = call(&["verify"]);
    assert_eq!(code, 0, "{out}");
    assert!(out.lines().any(|l| l == "Lemma 3 (p=1,2): PASS"));
    assert!(!out.contains("FAIL"));
}

#[test]
fn verify_reports_corrupted_closed_form() {
    let hooks = VerifyHooks {
        opnorm_inf1_closed: corrupted,
    };
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = run_with(["rkhs-stability", "verify"], hooks, &mut out, &mut err);
    let out = String::from_utf8(out).unwrap();
    assert_eq!(code, 1);
    assert!(out.lines().any(|l| l.starts_with("Lemma 3 (p=1,2): FAIL")));
    assert!(out.contains("Lemma 4 (p=10,50): PASS"));

    let mut out = Vec::new();
    let code = run_with(["rkhs-stability", "verify", "--fail-fast"], hooks, &mut out, &mut err);
    let out = String::from_utf8(out).unwrap();
    assert_eq!(code, 1);
    assert!(out.lines().nth(2).unwrap().starts_with("Lemma 3"));
    assert!(!out.contains("Lemma 4"));
    assert!(out.contains("skipped"));
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_rkhs-stability");
    let st = std::process::Command::new(bin).args(["fig1", "--p-max", "1"]).output().unwrap();
    assert_eq!(st.status.code(), Some(0));
    assert_eq!(String::from_utf8(st.stdout).unwrap(), "p,n,fig1_bound,gram_ratio_exact\n1,8,0.886227,0.666667\n");
    let st = std::process::Command::new(bin).args(["kernel-probe", "nope"]).output().unwrap();
    assert_eq!(st.status.code(), Some(2));
}

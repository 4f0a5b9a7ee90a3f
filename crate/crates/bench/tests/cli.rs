use std::path::Path;
use std::process::{Command, Output};

use ltr_bench::report::MethodKind;
use ltr_bench::{read_csv, read_json, run, ExperimentSpec, Method, ProblemSpec, CSV_HEADER};
use ltr_core::EllSchedule;

fn bench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ltr-bench"))
        .args(args)
        .output()
        .expect("spawn ltr-bench")
}

fn same(a: f64, b: f64) -> bool {
    (a.is_nan() && b.is_nan()) || (a - b).abs() <= 1e-15 * a.abs().max(b.abs()).max(1.0)
}

#[test]
fn bad_flags_exit_with_usage_code() {
    assert_eq!(bench(&["--delta", "abc"]).status.code(), Some(2));
    assert_eq!(bench(&["--ell", "0"]).status.code(), Some(2));
    assert_eq!(bench(&["--problem", "synthetic", "--n", "5", "--q", "2"]).status.code(), Some(2));
}

#[test]
fn malformed_spec_file_exits_with_usage_code() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("bad.json");
    std::fs::write(&spec, "{\"problem\": {\"kind\": \"synthetic\", \"n\": 4},\n \"delta\": }").unwrap();
    let out = bench(&["--spec", spec.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

#[test]
fn dense_oracle_refused_above_cap() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("r.json");
    let out = bench(&["--grid-n", "60", "--method", "rtr", "--out", out_path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out_path.exists());
}

#[test]
fn zero_iterations_give_header_only_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("run.csv");
    let out = bench(&[
        "--problem", "synthetic", "--n", "8", "--kmax", "0", "--format", "csv", "--out",
        csv_path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv_path).unwrap();
    assert_eq!(text.trim_end(), CSV_HEADER.join(","));
    assert!(read_csv(&csv_path).unwrap().is_empty());
    let summary = read_json(&dir.path().join("run.summary.json")).unwrap();
    assert_eq!(summary.runs[0].summary.it, 0);
}

#[test]
fn json_and_csv_agree_with_the_library_run() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("nested/r.json");
    let csv = dir.path().join("r.csv");
    let common = ["--problem", "synthetic", "--n", "12", "--delta", "1e-3", "--seed", "2", "--kmax", "8"];
    let mut a: Vec<&str> = common.to_vec();
    a.extend(["--out", json.to_str().unwrap()]);
    assert!(bench(&a).status.success());
    let mut b: Vec<&str> = common.to_vec();
    b.extend(["--format", "csv", "--out", csv.to_str().unwrap()]);
    assert!(bench(&b).status.success());

    let report = read_json(&json).unwrap();
    let rows = read_csv(&csv).unwrap();
    let records = &report.run(MethodKind::Ltr).unwrap().records;
    assert_eq!(rows.len(), records.len());
    assert!(!rows.is_empty());
    for (row, rec) in rows.iter().zip(records) {
        assert_eq!((row.k, row.ell, row.accepted), (rec.k, rec.ell, rec.accepted));
        for (x, y) in [
            (row.delta_k, rec.delta_k),
            (row.lambda_k, rec.lambda_k),
            (row.g_norm, rec.g_norm),
            (row.f, rec.f),
            (row.q_k, rec.q_k),
            (row.pi, rec.pi),
        ] {
            assert!(same(x, y), "{x} vs {y}");
        }
    }

    let mut spec = ExperimentSpec::new(ProblemSpec::Synthetic {
        n: 12,
        spectrum_decay: 0.7,
        nonlinearity_scale: 0.1,
        problem_seed: 0,
    });
    spec.delta = 1e-3;
    spec.seed = 2;
    spec.overrides.k_max = Some(8);
    let direct = run(&spec).unwrap();
    assert_eq!(direct.without_timing(), report.without_timing());
}

#[test]
fn runs_are_deterministic() {
    let mut spec = ExperimentSpec::new(ProblemSpec::ParamIdent {
        grid_n: 8,
        residual_target: 0.1,
        problem_seed: 0,
    });
    spec.delta = 1e-2;
    spec.seed = 7;
    spec.overrides.k_max = Some(10);
    let a = run(&spec).unwrap();
    let b = run(&spec).unwrap();
    assert_eq!(a.without_timing(), b.without_timing());
}

#[test]
fn spec_list_writes_indexed_files() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("s.json");
    std::fs::write(
        &spec,
        r#"[{"problem": {"kind": "synthetic", "n": 6}, "overrides": {"k_max": 3}},
            {"problem": {"kind": "synthetic", "n": 7}, "overrides": {"k_max": 3}, "method": "both", "ell": {"constant": 7}}]"#,
    )
    .unwrap();
    let out = dir.path().join("r.json");
    let status = bench(&["--spec", spec.to_str().unwrap(), "--jobs", "2", "--out", out.to_str().unwrap()]);
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    assert_eq!(read_json(&dir.path().join("r.0.json")).unwrap().n, 6);
    let second = read_json(&dir.path().join("r.1.json")).unwrap();
    assert_eq!(second.runs.len(), 2);
    assert!(Path::new(&dir.path().join("r.1.json")).exists());
}

#[test]
fn both_methods_agree_on_synthetic_problem() {
    let mut spec = ExperimentSpec::new(ProblemSpec::Synthetic {
        n: 20,
        spectrum_decay: 0.7,
        nonlinearity_scale: 0.1,
        problem_seed: 0,
    });
    spec.delta = 1e-3;
    spec.seed = 1;
    spec.method = Method::Both;
    spec.ell = EllSchedule::Constant(20);
    spec.overrides.k_max = Some(20);
    let rep = run(&spec).unwrap();
    assert!(rep.iterate_agreement.unwrap() <= 1e-6);
    let l = rep.run(MethodKind::Ltr).unwrap();
    let r = rep.run(MethodKind::Rtr).unwrap();
    assert_eq!(l.summary.it, r.summary.it);
}

#[test]
fn noise_free_error_decreases() {
    let mut spec = ExperimentSpec::new(ProblemSpec::ParamIdent {
        grid_n: 10,
        residual_target: 0.1,
        problem_seed: 0,
    });
    spec.overrides.k_max = Some(15);
    let rep = run(&spec).unwrap();
    let series = &rep.run(MethodKind::Ltr).unwrap().error_series;
    assert!(series.len() >= 2);
    for w in series.windows(2) {
        assert!(w[1].1 <= w[0].1 * (1.0 + 1e-12), "{:?} -> {:?}", w[0], w[1]);
    }
    assert!(series.last().unwrap().1 < series[0].1);
}

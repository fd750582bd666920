use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pencil_cli::io::{write_json, MatrixJson, PairJson, ProblemJson};
use pencil_cli::Report;
use pencil_core::genpairs::{block, BlockSpec};
use pencil_core::C64;
use pencil_core::{CMat, HermitianMatrix, MatrixPair, ProblemInstance, Tolerances};
use serde_json::Value;
use tempfile::TempDir;

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("data")
        .join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pencil-tracemin"))
        .args(args)
        .env_remove("PENCIL_TRACEMIN_SEED")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

/// Runs with `--json` and parses the report.
fn report(args: &[&str]) -> (i32, Report) {
    let mut all = vec!["--json"];
    all.extend_from_slice(args);
    let o = run(&all);
    let text = String::from_utf8(o.stdout.clone()).unwrap();
    let r: Report = serde_json::from_str(&text).unwrap_or_else(|e| panic!("{e}: {text}"));
    assert_eq!(r.exit_code, code(&o));
    (code(&o), r)
}

fn result(r: &Report) -> &Value {
    r.result.as_ref().expect("result present")
}

fn f(v: &Value) -> f64 {
    v.as_f64().unwrap_or_else(|| panic!("not a number: {v}"))
}

fn diag(d: &[f64]) -> HermitianMatrix {
    HermitianMatrix::from_real_diagonal(d)
}

fn pair(a: HermitianMatrix, b: HermitianMatrix) -> MatrixPair {
    MatrixPair::new(a, b).unwrap()
}

fn write_problem(dir: &TempDir, name: &str, p: MatrixPair, h: MatrixPair) -> String {
    let path = dir.path().join(name);
    let prob = ProblemInstance::new(p, h, Tolerances::default()).unwrap();
    write_json(&path, &ProblemJson::from_problem(&prob)).unwrap();
    path.display().to_string()
}

fn mixed_sign(dir: &TempDir) -> String {
    write_problem(
        dir,
        "mixed.json",
        pair(diag(&[1.0, 2.0]), diag(&[1.0, -1.0])),
        pair(diag(&[-1.0, -2.0]), diag(&[1.0, -1.0])),
    )
}

#[test]
fn analyze_worked_pair() {
    let (rc, r) = report(&["analyze", data("worked_pair.json").to_str().unwrap()]);
    assert_eq!(rc, 0);
    let res = result(&r);
    let iv = &res["definiteness"]["psd_interval"];
    assert!((f(&iv["lo"]) + 2.0).abs() < 1e-6);
    assert!((f(&iv["hi"]) - 1.0).abs() < 1e-6);
    assert!((f(&res["spectrum"]["pos"][0]["value"]) - 1.0).abs() < 1e-10);
    assert!((f(&res["spectrum"]["neg"][0]["value"]) + 2.0).abs() < 1e-10);
    assert_eq!(res["inertia_b"]["pos"], 1);
}

#[test]
fn analyze_jordan_pair_flags_both_copies() {
    let (rc, r) = report(&["analyze", data("jordan_pair.json").to_str().unwrap()]);
    assert_eq!(rc, 0);
    let res = result(&r);
    assert_eq!(res["definiteness"]["is_psd_pair"], true);
    for side in ["pos", "neg"] {
        let e = &res["spectrum"][side][0];
        assert_eq!(e["jordan_pair"], true);
        assert!(f(&e["value"]).abs() < 1e-7);
    }
}

#[test]
fn malformed_and_non_hermitian_inputs() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"A\": [1, 2").unwrap();
    assert_eq!(code(&run(&["analyze", bad.to_str().unwrap()])), 2);
    assert_eq!(code(&run(&["analyze", "/nonexistent/pair.json"])), 2);

    let short = dir.path().join("short.json");
    std::fs::write(
        &short,
        r#"{"A": {"n": 2, "entries": [[1,0]]}, "B": {"n": 1, "entries": [[1,0]]}}"#,
    )
    .unwrap();
    assert_eq!(code(&run(&["analyze", short.to_str().unwrap()])), 2);

    let skew = dir.path().join("skew.json");
    let m = MatrixJson {
        n: 2,
        cols: None,
        entries: vec![[0.0, 0.0], [1.0, 0.0], [0.0, 0.0], [0.0, 0.0]],
    };
    let id = MatrixJson {
        n: 2,
        cols: None,
        entries: vec![[1.0, 0.0], [0.0, 0.0], [0.0, 0.0], [1.0, 0.0]],
    };
    write_json(&skew, &PairJson { a: m, b: id }).unwrap();
    let (rc, r) = report(&["analyze", skew.to_str().unwrap()]);
    assert_eq!(rc, 3);
    assert_eq!(r.error.as_ref().unwrap().kind, "NotHermitian");
}

#[test]
fn infimum_worked_example() {
    let (rc, r) = report(&["infimum", data("worked_problem.json").to_str().unwrap()]);
    assert_eq!(rc, 0);
    let res = result(&r);
    assert_eq!(res["verdict"], "Finite");
    assert!((f(&res["value"]) - 2f64.sqrt()).abs() < 1e-8);
    assert_eq!(res["terms"].as_array().unwrap().len(), 2);
}

#[test]
fn infimum_mixed_signs_exits_4_with_verdict() {
    let dir = TempDir::new().unwrap();
    let (rc, r) = report(&["infimum", &mixed_sign(&dir)]);
    assert_eq!(rc, 4);
    let res = result(&r);
    assert_eq!(res["verdict"], "NegInfinite");
    assert_eq!(res["reason"], "MixedSigns");
    assert!(res["value"].is_null());
    assert!(r.error.is_none());
}

#[test]
fn infimum_zero_hat_is_excluded_constant() {
    let dir = TempDir::new().unwrap();
    let path = write_problem(
        &dir,
        "zero.json",
        pair(diag(&[1.0, 2.0]), diag(&[1.0, -1.0])),
        pair(diag(&[0.0]), diag(&[1.0])),
    );
    let (rc, r) = report(&["infimum", &path]);
    assert_eq!(rc, 0);
    assert_eq!(result(&r)["verdict"], "ExcludedConstant");
    assert_eq!(f(&result(&r)["value"]), 0.0);
}

#[test]
fn infimum_empty_feasible_set_exits_5() {
    let dir = TempDir::new().unwrap();
    let singular = write_problem(
        &dir,
        "s.json",
        pair(diag(&[1.0, 2.0]), diag(&[1.0, 1.0])),
        pair(diag(&[1.0]), diag(&[0.0])),
    );
    assert_eq!(report(&["infimum", &singular]).0, 5);
    let exceeded = write_problem(
        &dir,
        "e.json",
        pair(diag(&[1.0, 2.0]), diag(&[1.0, 1.0])),
        pair(diag(&[1.0]), diag(&[-1.0])),
    );
    let (rc, r) = report(&["infimum", &exceeded]);
    assert_eq!(rc, 5);
    assert_eq!(r.error.as_ref().unwrap().kind, "EmptyFeasibleSet");
}

#[test]
fn minimize_worked_example_writes_matrix() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("x.json");
    let (rc, r) = report(&[
        "minimize",
        data("worked_problem.json").to_str().unwrap(),
        "-o",
        out.to_str().unwrap(),
    ]);
    assert_eq!(rc, 0);
    let res = result(&r);
    assert!((f(&res["achieved"]) - 2f64.sqrt()).abs() < 1e-8);
    assert!(f(&res["feasibility_residual"]) <= 1e-8);
    let x: MatrixJson = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(x.n, 2);
    assert_eq!(x.entries.len(), 4);
}

#[test]
fn minimize_fan_instance() {
    let dir = TempDir::new().unwrap();
    let a = CMat::from_fn(4, 4, |i, j| {
        c(((i + 2 * j) % 5) as f64 - 2.0) + c(((i * j) % 3) as f64) * c(0.5)
    });
    let a = HermitianMatrix::from_hermitian_part(&a);
    let mut eig = a.eigenvalues();
    eig.sort_by(f64::total_cmp);
    let path = write_problem(
        &dir,
        "fan.json",
        pair(a, HermitianMatrix::identity(4)),
        pair(HermitianMatrix::identity(2), HermitianMatrix::identity(2)),
    );
    let out = dir.path().join("x.json");
    let (rc, r) = report(&["minimize", &path, "--out", out.to_str().unwrap()]);
    assert_eq!(rc, 0);
    let x: MatrixJson = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!((x.n, x.cols), (4, Some(2)));
    assert!((f(&result(&r)["achieved"]) - (eig[0] + eig[1])).abs() < 1e-9);
}

#[test]
fn minimize_jordan_consuming_instance_exits_6() {
    let dir = TempDir::new().unwrap();
    let jordan = pair(
        HermitianMatrix::from_real_diagonal(&[0.0, 1.0]),
        HermitianMatrix::new(
            CMat::from_row_slice(2, 2, &[c(0.0), c(1.0), c(1.0), c(0.0)]),
            1e-12,
        )
        .unwrap(),
    );
    let path = write_problem(
        &dir,
        "j.json",
        jordan,
        pair(diag(&[2.0, 1.0]), diag(&[1.0, -1.0])),
    );
    let (rc, r) = report(&["infimum", &path]);
    assert_eq!(rc, 0, "{:?}", r.result);
    let out = dir.path().join("x.json");
    let (rc, r) = report(&["minimize", &path, "-o", out.to_str().unwrap()]);
    assert_eq!(rc, 6);
    assert_eq!(r.error.as_ref().unwrap().kind, "NotAttainable");
    assert!(!out.exists());
}

#[test]
fn witness_mixed_sign_certifies() {
    let dir = TempDir::new().unwrap();
    let (rc, r) = report(&["witness", &mixed_sign(&dir)]);
    assert_eq!(rc, 0);
    let res = result(&r);
    assert_eq!(res["family"]["kind"], "MixedSignSlope");
    assert!((f(&res["family"]["slope"]) + 9.0).abs() < 1e-9);
    assert!(f(&res["certification"]["trace"]) <= -1e6);
    assert!(f(&res["certification"]["residual"]) <= 1e-4);
}

#[test]
fn witness_complex_block_certifies() {
    let dir = TempDir::new().unwrap();
    let tc = block(&BlockSpec::Tc {
        p: 1,
        alpha: 0.0,
        beta: 1.0,
    })
    .unwrap();
    let path = write_problem(&dir, "tc.json", tc.clone(), tc);
    let (rc, r) = report(&["witness", &path, "--threshold", "-1e6", "--tmax", "1e4"]);
    assert_eq!(rc, 0);
    let res = result(&r);
    assert_eq!(res["reason"], "ComplexEigenvalues");
    assert_eq!(res["family"]["kind"], "ComplexBlockSlope");
    assert!(f(&res["certification"]["trace"]) <= -1e6);
}

#[test]
fn witness_exit_codes() {
    let dir = TempDir::new().unwrap();
    let mixed = mixed_sign(&dir);
    let (rc, r) = report(&["witness", &mixed, "--threshold", "-100", "--tmax", "0"]);
    assert_eq!(rc, 8);
    assert_eq!(r.error.as_ref().unwrap().kind, "CertificationFailed");
    assert_eq!(result(&r)["family"]["kind"], "MixedSignSlope");
    let (rc, _) = report(&["witness", &mixed, "--threshold", "5"]);
    assert_eq!(rc, 2);
    let (rc, r) = report(&["witness", data("worked_problem.json").to_str().unwrap()]);
    assert_eq!(rc, 7);
    assert_eq!(r.error.as_ref().unwrap().kind, "NoWitnessConstructible");
}

#[test]
fn verify_worked_example_and_seed_repeat() {
    let p = data("worked_problem.json");
    let args = [
        "verify",
        p.to_str().unwrap(),
        "--samples",
        "2000",
        "--spread",
        "2",
        "--seed",
        "11",
    ];
    let (rc, r) = report(&args);
    assert_eq!(rc, 0);
    let res = result(&r);
    assert!(f(&res["min"]) >= 2f64.sqrt() - 1e-6);
    assert_eq!(res["violated"], false);
    assert_eq!(r.seed, 11);
    let a = run(&[&["--json"][..], &args].concat());
    let b = run(&[&["--json"][..], &args].concat());
    assert_eq!(a.stdout, b.stdout);
    let other = run(&[
        "--json",
        "verify",
        p.to_str().unwrap(),
        "--samples",
        "50",
        "--seed",
        "12",
    ]);
    assert_ne!(a.stdout, other.stdout);
}

#[test]
fn verify_seed_comes_from_the_environment() {
    let p = data("worked_problem.json");
    let o = Command::new(env!("CARGO_BIN_EXE_pencil-tracemin"))
        .args(["--json", "verify", p.to_str().unwrap(), "--samples", "20"])
        .env("PENCIL_TRACEMIN_SEED", "99")
        .output()
        .unwrap();
    let r: Report = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(r.seed, 99);
}

#[test]
fn verify_divergent_problem_reports_most_negative_sample() {
    let dir = TempDir::new().unwrap();
    let (rc, r) = report(&[
        "verify",
        &mixed_sign(&dir),
        "--samples",
        "200",
        "--spread",
        "3",
    ]);
    assert_eq!(rc, 0);
    let res = result(&r);
    assert_eq!(res["verdict"], "NegInfinite");
    assert!(f(&res["min"]) < 0.0);
    assert!(res.get("violated").is_none());
}

#[test]
fn gen_round_trips_through_analyze() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("pair.json");
    let (rc, r) = report(&[
        "gen",
        data("blocks.json").to_str().unwrap(),
        "-o",
        out.to_str().unwrap(),
    ]);
    assert_eq!(rc, 0);
    let truth = &result(&r)["truth"];
    assert_eq!(truth["diagonalizable"], true);
    assert_eq!(truth["psd"], true);
    let sidecar: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("pair.truth.json")).unwrap())
            .unwrap();
    assert_eq!(&sidecar["truth"], truth);

    let (rc, a) = report(&["analyze", out.to_str().unwrap()]);
    assert_eq!(rc, 0);
    let spec = &result(&a)["spectrum"];
    for side in ["pos", "neg"] {
        let want: Vec<f64> = truth["typed_values"][side]
            .as_array()
            .unwrap()
            .iter()
            .map(f)
            .collect();
        let got: Vec<f64> = spec[side]
            .as_array()
            .unwrap()
            .iter()
            .map(|e| f(&e["value"]))
            .collect();
        assert_eq!(want.len(), got.len(), "{side}");
        for (w, g) in want.iter().zip(&got) {
            assert!((w - g).abs() < 1e-7 * (1.0 + w.abs()), "{side}: {w} vs {g}");
        }
    }
    assert_eq!(
        spec["infinite_dims"],
        truth["typed_values"]["infinite_dims"]
    );
    assert_eq!(result(&a)["inertia_b"], truth["inertia_b"]);
    assert_eq!(result(&a)["definiteness"]["is_psd_pair"], truth["psd"]);
}

#[test]
fn gen_truth_labels_and_invalid_specs() {
    let dir = TempDir::new().unwrap();
    let spec = dir.path().join("tc.json");
    std::fs::write(
        &spec,
        r#"{"blocks": [{"kind": "Tc", "p": 1, "alpha": 0.5, "beta": 2.0}], "seed": 3}"#,
    )
    .unwrap();
    let out = dir.path().join("tc_pair.json");
    let (rc, r) = report(&["gen", spec.to_str().unwrap(), "-o", out.to_str().unwrap()]);
    assert_eq!(rc, 0);
    assert_eq!(result(&r)["truth"]["psd"], false);

    let empty = dir.path().join("empty.json");
    std::fs::write(&empty, r#"{"blocks": []}"#).unwrap();
    assert_eq!(
        code(&run(&[
            "gen",
            empty.to_str().unwrap(),
            "-o",
            out.to_str().unwrap()
        ])),
        2
    );
    let bad = dir.path().join("bad.json");
    std::fs::write(
        &bad,
        r#"{"blocks": [{"kind": "Tr", "p": 1, "alpha": 1.0, "eta": 3}]}"#,
    )
    .unwrap();
    assert_eq!(
        code(&run(&[
            "gen",
            bad.to_str().unwrap(),
            "-o",
            out.to_str().unwrap()
        ])),
        2
    );
}

#[test]
fn human_output_and_tolerance_flags() {
    let p = data("worked_problem.json");
    let o = run(&["infimum", p.to_str().unwrap()]);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.starts_with("verdict Finite"), "{text}");
    let (_, r) = report(&[
        "--tol-psd",
        "1e-6",
        "--tol-feas",
        "1e-9",
        "infimum",
        p.to_str().unwrap(),
    ]);
    assert_eq!(r.tolerances.psd, 1e-6);
    assert_eq!(r.tolerances.feas, 1e-9);
    assert_eq!(r.tool, "pencil-tracemin");
    assert_eq!(r.version, env!("CARGO_PKG_VERSION"));
    assert_eq!(
        code(&run(&["--tol-rank", "-1", "infimum", p.to_str().unwrap()])),
        2
    );
}

fn c(x: f64) -> C64 {
    C64::new(x, 0.0)
}

//! End-to-end tests of the `sislab` binary: exit codes, error records,
//! report files, export stability and output-directory precedence.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn run_in(dir: &Path, args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_sislab"));
    cmd.current_dir(dir).args(args).env_remove("SISLAB_OUTPUT_DIR");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary spawns")
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("stdout is UTF-8")
}

/// The single-line machine-readable error record from stderr.
fn error_record(out: &Output) -> Value {
    let text = String::from_utf8(out.stderr.clone()).expect("stderr is UTF-8");
    let parsed: Value = serde_json::from_str(text.trim()).unwrap_or_else(|e| {
        panic!("stderr is not one JSON record ({e}): {text}");
    });
    parsed["error"].clone()
}

fn read_json(path: &Path) -> Value {
    let text = fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    serde_json::from_str(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn write_config(dir: &Path, body: &Value) -> PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_string_pretty(body).unwrap()).unwrap();
    path
}

/// A bank small enough for the unoptimized test binary, with every invariant
/// still passing.
fn small_config() -> Value {
    json!({
        "generators": ["shannon", "bspline(1)"],
        "s_list": [0.0],
        "m": 32,
        "k": 8,
        "oracle": { "q": 128, "stride": 2, "draws": 5, "frame_draws": 3 }
    })
}

#[test]
fn analyze_reports_hat_bounds_at_full_grid() {
    let tmp = TempDir::new().unwrap();
    let out_dir = tmp.path().join("out");
    let out = run_in(
        tmp.path(),
        &[
            "--generators",
            "bspline(1)",
            "--s",
            "0",
            "--output-dir",
            out_dir.to_str().unwrap(),
            "analyze",
        ],
        &[],
    );
    assert_eq!(exit_code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("analyze s=0"), "stdout: {}", stdout(&out));

    let report = read_json(&out_dir.join("analysis_s0.json"));
    let a = report["report"]["frame_lower"].as_f64().unwrap();
    let b = report["report"]["bessel_bound"].as_f64().unwrap();
    assert!((a - 1.0 / 3.0).abs() <= 1e-3, "frame lower {a}");
    assert!((1.0 - 1e-3..=1.0).contains(&b), "bessel bound {b}");
    assert_eq!(report["report"]["is_riesz"], Value::Bool(true));
    assert_eq!(report["meta"]["m"].as_u64(), Some(512));
    assert_eq!(report["meta"]["config_hash"].as_str().unwrap().len(), 64);

    let csv = fs::read_to_string(out_dir.join("eigen_s0.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "t_1,lambda_1");
    assert_eq!(lines.len(), 1 + 512, "one curve row per grid point");
}

#[test]
fn verify_passes_and_records_the_seed() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &small_config());
    let out_dir = tmp.path().join("out");
    let out = run_in(
        tmp.path(),
        &[
            "--config",
            cfg.to_str().unwrap(),
            "--output-dir",
            out_dir.to_str().unwrap(),
            "--seed",
            "9",
            "verify",
        ],
        &[],
    );
    assert_eq!(exit_code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("invariants pass"), "stdout: {}", stdout(&out));
    assert!(!stdout(&out).contains("FAIL"), "stdout: {}", stdout(&out));

    let report = read_json(&out_dir.join("verify.json"));
    assert_eq!(report["meta"]["seed"].as_u64(), Some(9));
    assert_eq!(report["verify"]["all_pass"], Value::Bool(true));
    let invariants = report["verify"]["invariants"].as_array().unwrap();
    assert!(invariants.len() >= 15, "only {} invariants", invariants.len());
    for inv in invariants {
        assert_eq!(inv["pass"], Value::Bool(true), "{}", inv["name"]);
    }
}

#[test]
fn verify_verdicts_do_not_depend_on_thread_count() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &small_config());
    let mut bodies = Vec::new();
    for threads in ["1", "4"] {
        let out_dir = tmp.path().join(format!("out{threads}"));
        let out = run_in(
            tmp.path(),
            &[
                "--config",
                cfg.to_str().unwrap(),
                "--output-dir",
                out_dir.to_str().unwrap(),
                "--threads",
                threads,
                "verify",
            ],
            &[],
        );
        assert_eq!(exit_code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
        let report = read_json(&out_dir.join("verify.json"));
        let mut body = report["verify"].clone();
        body.as_object_mut().unwrap().remove("wall_ms");
        bodies.push(body);
    }
    assert_eq!(bodies[0], bodies[1], "verify body differs between 1 and 4 threads");
}

#[test]
fn injected_gramian_perturbation_fails_verify() {
    let tmp = TempDir::new().unwrap();
    let mut body = small_config();
    body["perturb_gramian"] = json!(1e-3);
    let cfg = write_config(tmp.path(), &body);
    let out_dir = tmp.path().join("out");
    let out = run_in(
        tmp.path(),
        &[
            "--config",
            cfg.to_str().unwrap(),
            "--output-dir",
            out_dir.to_str().unwrap(),
            "verify",
        ],
        &[],
    );
    assert_eq!(exit_code(&out), 1);
    let err = error_record(&out);
    assert_eq!(err["kind"], json!("verify_failed"));
    let failing = err["failing"].as_array().unwrap();
    assert!(
        failing.contains(&json!("gramian_oracle_cross_validation")),
        "failing: {failing:?}"
    );
}

#[test]
fn zero_tabulated_generator_is_degenerate() {
    let tmp = TempDir::new().unwrap();
    let table = tmp.path().join("zero.csv");
    let mut text = String::from("# n=1 decay=8 count=21\n");
    for i in 0..21 {
        text.push_str(&format!("{},0,0\n", 0.5 * i as f64 - 5.0));
    }
    fs::write(&table, text).unwrap();
    let desc = format!("tabulated({})", table.display());
    let out = run_in(
        tmp.path(),
        &["--generators", &desc, "--s", "0", "--m", "16", "--k", "4", "analyze"],
        &[],
    );
    assert_eq!(exit_code(&out), 2);
    assert_eq!(error_record(&out)["kind"], json!("degenerate_system"));
}

#[test]
fn unsound_truncation_refuses_with_exit_3() {
    let tmp = TempDir::new().unwrap();
    let out = run_in(tmp.path(), &["--generators", "bspline(0)", "--s", "1", "analyze"], &[]);
    assert_eq!(exit_code(&out), 3);
    let err = error_record(&out);
    assert_eq!(err["kind"], json!("unsound_truncation"));
    assert_eq!(err["exit_code"], json!(3));
}

#[test]
fn bad_invocations_are_usage_errors() {
    let tmp = TempDir::new().unwrap();
    let out = run_in(tmp.path(), &["--generators", "sinc", "analyze"], &[]);
    assert_eq!(exit_code(&out), 64);
    assert_eq!(error_record(&out)["kind"], json!("usage"));

    let cfg = write_config(tmp.path(), &json!({ "commands": ["polish"] }));
    let out = run_in(tmp.path(), &["--config", cfg.to_str().unwrap(), "analyze"], &[]);
    assert_eq!(exit_code(&out), 64, "unknown command name in the config");

    let out = run_in(tmp.path(), &[], &[]);
    assert_eq!(exit_code(&out), 64, "no verb given anywhere");

    let out = run_in(tmp.path(), &["--config", "missing.json", "analyze"], &[]);
    assert_eq!(exit_code(&out), 64, "unreadable config file");
}

#[test]
fn exports_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &small_config());
    let out_dir = tmp.path().join("out");
    let base = ["--config", cfg.to_str().unwrap(), "--output-dir", out_dir.to_str().unwrap()];
    for verb in [&["analyze"][..], &["decompose"], &["dualize"], &["verify"]] {
        let out = run_in(tmp.path(), &[&base[..], verb].concat(), &[]);
        assert_eq!(exit_code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    }
    let snapshot = |label: &str| -> Vec<(String, Vec<u8>)> {
        let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(&out_dir)
            .unwrap()
            .map(|e| e.unwrap().path())
            .filter(|p| {
                p.extension().is_some_and(|ext| ext == "json" || ext == "csv")
            })
            .map(|p| {
                (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
            })
            .collect();
        files.sort();
        assert!(!files.is_empty(), "{label}: no report files");
        files
    };
    for format in ["json", "csv"] {
        let out = run_in(tmp.path(), &[&base[..], &["export", format]].concat(), &[]);
        assert_eq!(exit_code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
        assert!(stdout(&out).contains("exported"));
        let first = snapshot("first export");
        let out = run_in(tmp.path(), &[&base[..], &["export", format]].concat(), &[]);
        assert_eq!(exit_code(&out), 0);
        assert_eq!(first, snapshot("second export"), "export:{format} changed bytes");
    }
}

#[test]
fn export_with_no_reports_is_an_error() {
    let tmp = TempDir::new().unwrap();
    let out_dir = tmp.path().join("empty");
    fs::create_dir(&out_dir).unwrap();
    let out = run_in(
        tmp.path(),
        &["--output-dir", out_dir.to_str().unwrap(), "export", "json"],
        &[],
    );
    assert_eq!(exit_code(&out), 1);
    assert_eq!(error_record(&out)["kind"], json!("invalid_argument"));
}

#[test]
fn output_dir_flag_beats_environment_beats_config() {
    let tmp = TempDir::new().unwrap();
    let mut body = small_config();
    body["output_dir"] = json!(tmp.path().join("from-config").to_str().unwrap());
    let cfg = write_config(tmp.path(), &body);
    let env_dir = tmp.path().join("from-env");
    let flag_dir = tmp.path().join("from-flag");

    let out = run_in(
        tmp.path(),
        &["--config", cfg.to_str().unwrap(), "analyze"],
        &[("SISLAB_OUTPUT_DIR", env_dir.to_str().unwrap())],
    );
    assert_eq!(exit_code(&out), 0);
    assert!(env_dir.join("analysis_s0.json").exists(), "env override ignored");
    assert!(!tmp.path().join("from-config").exists(), "config dir used despite env");

    let out = run_in(
        tmp.path(),
        &[
            "--config",
            cfg.to_str().unwrap(),
            "--output-dir",
            flag_dir.to_str().unwrap(),
            "analyze",
        ],
        &[("SISLAB_OUTPUT_DIR", tmp.path().join("ignored-env").to_str().unwrap())],
    );
    assert_eq!(exit_code(&out), 0);
    assert!(flag_dir.join("analysis_s0.json").exists(), "flag override ignored");
    assert!(!tmp.path().join("ignored-env").exists(), "env dir used despite flag");
}

#[test]
fn config_command_list_runs_in_order() {
    let tmp = TempDir::new().unwrap();
    let mut body = small_config();
    body["commands"] = json!(["analyze", "export:json"]);
    let cfg = write_config(tmp.path(), &body);
    let out_dir = tmp.path().join("out");
    let out = run_in(
        tmp.path(),
        &["--config", cfg.to_str().unwrap(), "--output-dir", out_dir.to_str().unwrap()],
        &[],
    );
    assert_eq!(exit_code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    let analyze_at = text.find("analyze s=0").expect("analyze ran");
    let export_at = text.find("exported").expect("export ran");
    assert!(analyze_at < export_at, "commands out of order: {text}");
}

#[test]
fn decompose_and_dualize_write_field_files() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &small_config());
    let out_dir = tmp.path().join("out");
    let base = ["--config", cfg.to_str().unwrap(), "--output-dir", out_dir.to_str().unwrap()];

    let out = run_in(tmp.path(), &[&base[..], &["decompose"]].concat(), &[]);
    assert_eq!(exit_code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let dim_csv = fs::read_to_string(out_dir.join("dimension_s0.csv")).unwrap();
    let lines: Vec<&str> = dim_csv.lines().collect();
    assert_eq!(lines[0], "t_1,dim,spectrum_1,spectrum_2");
    assert_eq!(lines.len(), 1 + 32, "one dimension row per grid point");
    let field = fs::read(out_dir.join("qo0_s0.sisf")).unwrap();
    assert_eq!(&field[..4], b"SISF");

    let out = run_in(tmp.path(), &[&base[..], &["dualize"]].concat(), &[]);
    assert_eq!(exit_code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let report = read_json(&out_dir.join("duality_s0.json"));
    let quad = report["duality"]["bound_quadruple"].as_array().unwrap();
    let [a, b, ad, bd] = [0, 1, 2, 3].map(|i| quad[i].as_f64().unwrap());
    assert!((ad * b - 1.0).abs() <= 1e-9, "dual upper {ad} vs primal lower {b}");
    assert!((bd * a - 1.0).abs() <= 1e-9, "dual lower {bd} vs primal upper {a}");
    assert!(out_dir.join("dual0_s0.sisf").exists());
    assert!(out_dir.join("dual1_s0.sisf").exists());
}

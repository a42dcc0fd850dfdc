//! End-to-end contract tests for the binary: exit codes, error JSON,
//! artifact layout, and schema conformance.

mod common;

use std::fs;
use std::path::{Path, PathBuf};

use common::{
    assert_matches_schema, code, manifest_outputs, read_json, run, stderr_json,
};
use sha2::{Digest, Sha256};
use tempfile::tempdir;

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("run.toml");
    fs::write(&path, body).expect("config written");
    path
}

const PAIR_GROUP: &str = "[group]\nshifts = [[0.0, 0.0], [0.5, 0.0]]\n";

fn first_line(path: &Path) -> String {
    let text = fs::read_to_string(path)
        .unwrap_or_else(|e| panic!("cannot read {}: {e}", path.display()));
    text.lines().next().unwrap_or_default().to_string()
}

fn data_rows(path: &Path) -> usize {
    fs::read_to_string(path)
        .expect("table readable")
        .lines()
        .count()
        .saturating_sub(1)
}

#[test]
fn constants_match_their_decimal_expansions() {
    let tmp = tempdir().expect("tempdir");
    let out = tmp.path().join("run");
    let output = run(&["constants", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&output), 0, "stderr: {}", String::from_utf8_lossy(&output.stderr));

    let stdout: serde_json::Value =
        serde_json::from_slice(&output.stdout).expect("stdout is JSON");
    let file = read_json(&out.join("constants.json"));
    assert_eq!(stdout, file);
    assert_matches_schema(&file, "constants.schema.json");

    let expect = [
        ("A_P", -5.242131703646037),
        ("lambda_half", -(2.0f64.ln())),
        ("A_tilde", -5.935278884205982),
        ("maxim_threshold", -5.675754132818691),
        ("bound_approx1", -0.952657895526051),
        ("bound_approx2", 0.693161147320162),
    ];
    for (key, value) in expect {
        let got = file[key].as_f64().unwrap();
        assert!(
            (got - value).abs() < 1e-12,
            "{key}: got {got}, expected {value}"
        );
    }
}

#[test]
fn manifest_digests_cover_the_artifacts() {
    let tmp = tempdir().expect("tempdir");
    let out = tmp.path().join("run");
    let output = run(&["constants", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&output), 0);

    let outputs = manifest_outputs(&out);
    assert!(!outputs.is_empty());
    for (file, digest, bytes) in outputs {
        let body = fs::read(out.join(&file)).expect("artifact exists");
        assert_eq!(bytes, body.len() as u64, "{file} size");
        let mut hasher = Sha256::new();
        hasher.update(&body);
        assert_eq!(digest, format!("{:x}", hasher.finalize()), "{file} digest");
    }
}

#[test]
fn subcommands_without_a_config_are_rejected() {
    for sub in ["green", "solve", "continue", "bubble", "certify", "testfn"] {
        let output = run(&[sub]);
        assert_eq!(code(&output), 2, "{sub} exit code");
        let err = stderr_json(&output);
        assert_eq!(err["error"]["kind"], "config", "{sub} kind");
        let message = err["error"]["message"].as_str().unwrap();
        assert!(message.contains("--config"), "{sub}: {message}");
    }
}

#[test]
fn conflicting_density_parameters_are_rejected() {
    let tmp = tempdir().expect("tempdir");
    let config = write_config(
        tmp.path(),
        "[solver]\neps = 0.3\nrho = 40.0\n",
    );
    let output = run(&["solve", "--config", config.to_str().unwrap()]);
    assert_eq!(code(&output), 2);
    let err = stderr_json(&output);
    let message = err["error"]["message"].as_str().unwrap();
    assert!(message.contains("solver.eps"), "{message}");
    assert!(message.contains("solver.rho"), "{message}");
}

#[test]
fn grids_must_resolve_the_group_shifts() {
    let tmp = tempdir().expect("tempdir");
    let config = write_config(
        tmp.path(),
        "[group]\nshifts = [[0.0, 0.0], [0.25, 0.0], [0.5, 0.0], [0.75, 0.0]]\n",
    );
    let output = run(&[
        "green",
        "--config",
        config.to_str().unwrap(),
        "--grid",
        "250",
    ]);
    assert_eq!(code(&output), 2);
    let err = stderr_json(&output);
    let message = err["error"]["message"].as_str().unwrap();
    assert!(message.contains("250"), "{message}");
}

#[test]
fn weight_modes_must_be_group_invariant() {
    let tmp = tempdir().expect("tempdir");
    let config = write_config(
        tmp.path(),
        &format!(
            "{PAIR_GROUP}[h]\nkind = \"fourier\"\nconstant = 1.0\n\
             modes = [{{ k1 = 1, k2 = 0, cos = 0.1 }}]\n"
        ),
    );
    let output = run(&["solve", "--config", config.to_str().unwrap()]);
    assert_eq!(code(&output), 2);
    let err = stderr_json(&output);
    let message = err["error"]["message"].as_str().unwrap();
    assert!(message.contains("k1 = 1"), "{message}");
    assert!(message.contains("0.5"), "{message}");
}

#[test]
fn nonpositive_weights_are_rejected() {
    let tmp = tempdir().expect("tempdir");
    let config = write_config(tmp.path(), "[h]\nkind = \"constant\"\nvalue = -1.0\n");
    let output = run(&["solve", "--config", config.to_str().unwrap()]);
    assert_eq!(code(&output), 2);
    assert_eq!(stderr_json(&output)["error"]["kind"], "config");
}

#[test]
fn unknown_subcommands_exit_with_the_usage_code() {
    let output = run(&["frobnicate"]);
    assert_eq!(code(&output), 64);
}

#[test]
fn help_prints_and_exits_cleanly() {
    let output = run(&["--help"]);
    assert_eq!(code(&output), 0);
    let text = String::from_utf8_lossy(&output.stdout);
    assert!(text.contains("green"), "{text}");
    assert!(text.contains("certify"), "{text}");
}

#[test]
fn green_artifacts_conform_to_their_schemas() {
    let tmp = tempdir().expect("tempdir");
    let config = write_config(tmp.path(), PAIR_GROUP);
    let out = tmp.path().join("run");
    let output = run(&[
        "green",
        "--config",
        config.to_str().unwrap(),
        "--grid",
        "64",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&output), 0, "stderr: {}", String::from_utf8_lossy(&output.stderr));

    let summary = read_json(&out.join("green.json"));
    assert_matches_schema(&summary, "green.schema.json");
    assert_eq!(summary["ell"], 2);
    assert_eq!(first_line(&out.join("gtilde.csv")), "x1,x2,value");
    assert_eq!(data_rows(&out.join("gtilde.csv")), 64 * 64);
    manifest_outputs(&out);
}

#[test]
fn solve_artifacts_conform_to_their_schemas() {
    let tmp = tempdir().expect("tempdir");
    let config = write_config(
        tmp.path(),
        &format!("{PAIR_GROUP}[solver]\ngrid = 64\neps = 0.3\n"),
    );
    let out = tmp.path().join("run");
    let output = run(&[
        "solve",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&output), 0, "stderr: {}", String::from_utf8_lossy(&output.stderr));

    let summary = read_json(&out.join("summary.json"));
    assert_matches_schema(&summary, "summary.schema.json");
    assert_eq!(summary["converged"], true);
    assert_eq!(
        first_line(&out.join("iterations.csv")),
        "iter,j,grad_norm,residual,c_eps,lambda_eps"
    );
    let field_bytes = fs::read(out.join("u.bin")).expect("field written");
    assert!(field_bytes.len() >= 8 * 64 * 64, "binary field payload");
}

#[test]
fn tabular_outputs_honor_the_json_format_flag() {
    let tmp = tempdir().expect("tempdir");
    let config = write_config(tmp.path(), PAIR_GROUP);
    let out = tmp.path().join("run");
    let output = run(&[
        "green",
        "--config",
        config.to_str().unwrap(),
        "--grid",
        "64",
        "--format",
        "json",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&output), 0);
    let rows = read_json(&out.join("gtilde.json"));
    assert_eq!(rows.as_array().map(Vec::len), Some(64 * 64));
    assert!(!out.join("gtilde.csv").exists());
}

#[test]
fn continuation_stages_cover_the_schedule() {
    let tmp = tempdir().expect("tempdir");
    let config = write_config(
        tmp.path(),
        &format!(
            "{PAIR_GROUP}[solver]\ngrid = 64\neps = 0.3\n\
             [schedule]\neps = [0.3, 0.25]\n"
        ),
    );
    let out = tmp.path().join("run");
    let output = run(&[
        "continue",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&output), 0, "stderr: {}", String::from_utf8_lossy(&output.stderr));

    assert_eq!(data_rows(&out.join("stages.csv")), 2);
    let summary = read_json(&out.join("summary.json"));
    assert_matches_schema(&summary, "continue.schema.json");
    assert_eq!(summary["stages"], 2);
    assert_eq!(summary["converged_stages"], 2);
    assert_matches_schema(&summary["final_state"], "summary.schema.json");
}

#[test]
fn continuation_without_a_schedule_is_rejected() {
    let tmp = tempdir().expect("tempdir");
    let config = write_config(tmp.path(), PAIR_GROUP);
    let output = run(&["continue", "--config", config.to_str().unwrap()]);
    assert_eq!(code(&output), 2);
    let err = stderr_json(&output);
    let message = err["error"]["message"].as_str().unwrap();
    assert!(message.contains("schedule.eps"), "{message}");
}

#[test]
fn certificates_hold_for_the_uniform_weight() {
    let tmp = tempdir().expect("tempdir");
    let config = write_config(tmp.path(), PAIR_GROUP);
    let out = tmp.path().join("run");
    let output = run(&[
        "certify",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&output), 0, "stderr: {}", String::from_utf8_lossy(&output.stderr));

    let report = read_json(&out.join("certificate.json"));
    assert_matches_schema(&report, "certificate.schema.json");
    assert_eq!(report["cond_holds"], true);
    assert_eq!(report["hy2_holds"], true);
}

#[test]
fn testfn_rows_align_with_the_requested_epsilons() {
    let tmp = tempdir().expect("tempdir");
    let config = write_config(tmp.path(), PAIR_GROUP);
    let out = tmp.path().join("run");
    let output = run(&[
        "testfn",
        "--config",
        config.to_str().unwrap(),
        "--eps",
        "0.05",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&output), 0, "stderr: {}", String::from_utf8_lossy(&output.stderr));

    assert_eq!(data_rows(&out.join("testfn.csv")), 1);
    assert_eq!(
        first_line(&out.join("testfn.csv")),
        "eps,r_used,j_numeric,c_star,gap_numeric,gap_asymptotic"
    );
    let summary = read_json(&out.join("testfn.json"));
    assert_matches_schema(&summary, "testfn.schema.json");
}

#[test]
fn bubble_reports_when_no_concentration_scale_fits() {
    let tmp = tempdir().expect("tempdir");
    let config = write_config(
        tmp.path(),
        &format!("{PAIR_GROUP}[solver]\ngrid = 64\neps = 0.3\n"),
    );
    let out = tmp.path().join("run");
    let output = run(&[
        "bubble",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&output), 2);
    let err = stderr_json(&output);
    let message = err["error"]["message"].as_str().unwrap();
    assert!(message.contains("radius"), "{message}");
}

//! End-to-end tests of the `chainlaw` binary: exit codes, CSV schemas,
//! determinism of the emitted reports.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn spec_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("specs")
        .join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chainlaw"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn summary(output: &Output) -> Value {
    serde_json::from_slice(&output.stdout).expect("stdout is JSON")
}

fn exit_code(output: &Output) -> i32 {
    output.status.code().expect("no signal")
}

#[test]
fn validate_accepts_the_shipped_specs() {
    for name in [
        "permutation2.json",
        "alt_dim.json",
        "gambler3.json",
        "reset.json",
    ] {
        let out = run(&["validate", "--spec", spec_path(name).to_str().unwrap()]);
        assert_eq!(exit_code(&out), 0, "{name}: {out:?}");
        let s = summary(&out);
        assert_eq!(s["command"], "validate");
        assert!(s["violations"].as_array().unwrap().is_empty());
        assert_eq!(s["spec_sha256"].as_str().unwrap().len(), 64);
    }
}

#[test]
fn validate_reports_row_defects_with_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    fs::write(
        &path,
        r#"{
            "window": {"start": 0, "end": 1},
            "matrices": [
                {"time": 0, "rows": 2, "cols": 2, "entries": [[0.5, 0.48], [0.2, 0.8]]}
            ]
        }"#,
    )
    .unwrap();
    let out = run(&["validate", "--spec", path.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 2);
    let s = summary(&out);
    let violations = s["violations"].as_array().unwrap();
    assert_eq!(violations.len(), 1);
    assert!(violations[0].as_str().unwrap().contains("row 1"));
}

#[test]
fn truncated_json_exits_3_with_location() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.json");
    fs::write(&path, "{\"window\": {\"start\": 0,").unwrap();
    let out = run(&["validate", "--spec", path.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 3);
    let s = summary(&out);
    assert!(s["error"].as_str().unwrap().contains("line"));
}

#[test]
fn missing_file_exits_3() {
    let out = run(&["validate", "--spec", "/nonexistent/chain.json"]);
    assert_eq!(exit_code(&out), 3);
}

#[test]
fn entrance_on_permutation_reports_non_unique() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "entrance",
        "--spec",
        spec_path("permutation2.json").to_str().unwrap(),
        "--depth",
        "50",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 0, "{out:?}");
    let s = summary(&out);
    assert_eq!(s["unique"], Value::Bool(false));
    assert!(s["law"].is_null());

    let trace = fs::read_to_string(dir.path().join("diameter_trace.csv")).unwrap();
    let lines: Vec<&str> = trace.lines().collect();
    assert_eq!(lines[0], "depth,s,diameter");
    assert_eq!(lines.len(), 51); // header + one row per depth
    assert!(lines[1..].iter().all(|l| l.ends_with(",1.0")));

    let vertices = fs::read_to_string(dir.path().join("vertices.csv")).unwrap();
    assert_eq!(vertices.lines().count(), 1 + 2 * 2);
}

#[test]
fn entrance_on_alt_dim_recovers_the_half_half_law() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "entrance",
        "--spec",
        spec_path("alt_dim.json").to_str().unwrap(),
        "--depth",
        "50",
        "--tol",
        "1e-12",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 0);
    let s = summary(&out);
    assert_eq!(s["unique"], Value::Bool(true));
    let law = s["law"].as_array().unwrap();
    assert!((law[0].as_f64().unwrap() - 0.5).abs() <= 1e-12);
    assert!((law[1].as_f64().unwrap() - 0.5).abs() <= 1e-12);
}

#[test]
fn entrance_depth_beyond_window_is_infeasible() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "entrance",
        "--spec",
        spec_path("alt_dim.json").to_str().unwrap(),
        "--depth",
        "51",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 4);
}

#[test]
fn zeroone_bands_match_closed_form_and_simulation_is_reproducible() {
    let dir1 = tempfile::tempdir().unwrap();
    let spec = spec_path("gambler3.json");
    let args = |out: &Path| {
        vec![
            "zeroone".to_string(),
            "--spec".into(),
            spec.to_str().unwrap().into(),
            "--out".into(),
            out.to_str().unwrap().into(),
            "--simulate".into(),
            "20000".into(),
            "--seed".into(),
            "42".into(),
        ]
    };
    let out = run(&args(dir1.path())
        .iter()
        .map(String::as_str)
        .collect::<Vec<_>>());
    assert_eq!(exit_code(&out), 0, "{out:?}");
    let s = summary(&out);
    assert!((s["p_event"].as_f64().unwrap() - 0.5).abs() <= 1e-11);
    assert_eq!(s["seed"], 42);

    let bands = fs::read_to_string(dir1.path().join("bands.csv")).unwrap();
    let lines: Vec<&str> = bands.lines().collect();
    assert_eq!(
        lines[0],
        "n,P_low,P_mid,P_high,P_A,conservation_residual,\
         emp_P_low,emp_P_mid,emp_P_high,SE_low,SE_mid,SE_high,emp_symdiff,SE_symdiff"
    );
    assert_eq!(lines.len(), 1 + 41); // header + n = 0..=40
                                     // P_mid column is exactly (1/2)^n.
    for (n, line) in lines[1..].iter().enumerate().take(40) {
        let fields: Vec<&str> = line.split(',').collect();
        let p_mid: f64 = fields[2].parse().unwrap();
        assert!((p_mid - 0.5f64.powi(n as i32)).abs() <= 1e-12, "n = {n}");
        // No field is empty and every numeric cell parses finite.
        assert!(fields.iter().all(|f| !f.is_empty()));
    }

    // Byte-identical rerun.
    let dir2 = tempfile::tempdir().unwrap();
    let out2 = run(&args(dir2.path())
        .iter()
        .map(String::as_str)
        .collect::<Vec<_>>());
    assert_eq!(exit_code(&out2), 0);
    let bands2 = fs::read_to_string(dir2.path().join("bands.csv")).unwrap();
    assert_eq!(bands, bands2);
    // Summaries differ only in the output path flag; the spec, seed and
    // verdict fields agree.
    let s2 = summary(&out2);
    assert_eq!(s["p_event"], s2["p_event"]);
    assert_eq!(s["empirical_p_event"], s2["empirical_p_event"]);
}

#[test]
fn zeroone_with_all_ones_seed_puts_everything_in_the_high_band() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("sure.json");
    fs::write(
        &spec,
        r#"{
            "window": {"start": 0, "end": 6},
            "matrices": {"family": "permutation2"},
            "initial": {"time": 0, "probs": [1.0, 0.0]},
            "tail_event": {"type": "terminal_seed", "horizon": 6, "values": [1.0, 1.0]}
        }"#,
    )
    .unwrap();
    let out = run(&[
        "zeroone",
        "--spec",
        spec.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 0, "{out:?}");
    let s = summary(&out);
    assert_eq!(s["p_event"], 1.0);
    let bands = fs::read_to_string(dir.path().join("bands.csv")).unwrap();
    for line in bands.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields[3], "1.0", "P_high row: {line}");
    }
}

#[test]
fn zeroone_without_tail_event_is_infeasible() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "zeroone",
        "--spec",
        spec_path("permutation2.json").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 4);
}

#[test]
fn countable_random_walk_emits_bound_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "countable",
        "--spec",
        spec_path("random_walk.json").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 0, "{out:?}");
    let s = summary(&out);
    assert_eq!(s["rw_bound"]["all_hold"], Value::Bool(true));
    assert!(s["tightness"][0]["tight"] == Value::Bool(false));

    let sweep = fs::read_to_string(dir.path().join("rw_bound.csv")).unwrap();
    let lines: Vec<&str> = sweep.lines().collect();
    assert_eq!(lines[0], "n,exact,bound,holds");
    assert_eq!(lines.len(), 1 + 1000);
    assert!(lines[1..].iter().all(|l| l.ends_with(",true")));

    // Not-tight rows mask the cutoff column.
    let tightness = fs::read_to_string(dir.path().join("tightness.csv")).unwrap();
    let row = tightness.lines().nth(1).unwrap();
    let fields: Vec<&str> = row.split(',').collect();
    assert!(fields[2].is_empty(), "N_eps must be masked: {row}");
    assert_eq!(fields[6], "N_eps;scope");

    // Truncation defects for the walk: boundary rows leak half their mass.
    let trunc = fs::read_to_string(dir.path().join("truncation.csv")).unwrap();
    assert!(trunc.lines().skip(1).all(|l| l.ends_with(",0.5")));
}

#[test]
fn countable_reset_emits_uniform_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "countable",
        "--spec",
        spec_path("reset.json").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 0, "{out:?}");
    let s = summary(&out);
    assert_eq!(s["condition_u"]["uniform"], Value::Bool(true));
    let uniform = fs::read_to_string(dir.path().join("uniform.csv")).unwrap();
    let lines: Vec<&str> = uniform.lines().collect();
    assert_eq!(lines[0], "eps,N_eps,scope");
    assert_eq!(lines[1], "0.1,4,all_states");
}

#[test]
fn countable_shift_demo_and_truncation_flag() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "countable",
        "--spec",
        spec_path("shift1.json").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 0, "{out:?}");
    let s = summary(&out);
    assert_eq!(s["shift_demo"]["max_recursion_residual"], 0.0);
    assert_eq!(s["shift_demo"]["onto_modulo_shift"], Value::Bool(true));
    // The full truncated matrix cannot exist (the top row leaks everything);
    // that is flagged, not silently papered over.
    assert!(s["truncation"]["error"]
        .as_str()
        .unwrap()
        .contains("no mass"));

    let demo = fs::read_to_string(dir.path().join("shift_demo.csv")).unwrap();
    assert_eq!(demo.lines().next().unwrap(), "n,state,recursion_residual");
    assert_eq!(demo.lines().count(), 1 + 21);

    let out0 = run(&[
        "countable",
        "--spec",
        spec_path("shift0.json").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out0), 0);
    let s0 = summary(&out0);
    assert_eq!(s0["shift_demo"]["max_recursion_residual"], 0.0);
    assert_eq!(s0["shift_demo"]["base_state"], 5);
    // Zero-offset truncation is the identity: no leaked mass at all.
    assert_eq!(s0["truncation"]["product_defect_bound"], 0.0);
}

#[test]
fn countable_on_a_finite_family_is_infeasible() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "countable",
        "--spec",
        spec_path("permutation2.json").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 4);
}

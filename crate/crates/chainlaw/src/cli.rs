//! Command implementations behind the `chainlaw` binary.
//!
//! Each command reads a JSON chain spec, runs one analysis, writes CSV
//! tables into the output directory and returns a JSON summary for stdout.
//! Exit codes are stable: 0 success, 2 validation failure, 3 parse failure,
//! 4 analysis infeasible (window too shallow, missing sections, unwritable
//! output). Reports are deterministic functions of the spec, the flags and
//! the seed: float cells use shortest round-trip formatting and summary keys
//! are emitted in sorted order, so repeated runs are byte-identical.
//!
//! Masked values (an undefined cutoff, an absent counterexample) are written
//! as empty CSV fields, and every table with maskable columns carries a
//! `mask` column naming the fields left empty in that row.

use std::fs;
use std::path::Path;

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::countable::{
    condition_p_check, condition_u_check, rw_bound_check, shift_family_checks, CertificateScope,
    RwBoundRow, TightnessVerdict, UniformVerdict, DEFAULT_PROBE_BAND, DEFAULT_UNIFORM_CAP,
};
use crate::entrance::{delta_vertices, detect_uniqueness};
use crate::model::{ChainModel, TimeIndex};
use crate::montecarlo::{empirical_band_report, simulate, EmpiricalReport, SimConfig};
use crate::spec::{load_spec, parse_spec_str, LoadedSpec, Tolerances};
use crate::tail::{band_probabilities, band_sets, harmonic_backward};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_PARSE: i32 = 3;
pub const EXIT_INFEASIBLE: i32 = 4;

/// Epsilon grid used by the tightness checks.
pub const EPS_GRID: [f64; 3] = [0.1, 0.01, 0.001];

/// Length of the central-binomial bound sweep emitted for the random walk.
pub const RW_SWEEP_LEN: u32 = 1000;

/// Result of one command: the exit code and the JSON summary for stdout.
#[derive(Clone, Debug)]
pub struct CliOutcome {
    pub exit_code: i32,
    pub summary: Value,
}

enum Failure {
    Parse(String),
    Validation(Vec<String>),
    Infeasible(String),
}

impl Failure {
    fn exit_code(&self) -> i32 {
        match self {
            Self::Parse(_) => EXIT_PARSE,
            Self::Validation(_) => EXIT_VALIDATION,
            Self::Infeasible(_) => EXIT_INFEASIBLE,
        }
    }

    fn body(&self) -> Value {
        match self {
            Self::Parse(msg) => json!({ "error": msg, "kind": "parse" }),
            Self::Validation(violations) => {
                json!({ "violations": violations, "kind": "validation" })
            }
            Self::Infeasible(msg) => json!({ "error": msg, "kind": "infeasible" }),
        }
    }
}

fn map_analysis_err(e: crate::Error) -> Failure {
    match &e {
        crate::Error::InvalidEvent { .. }
        | crate::Error::InvalidBands { .. }
        | crate::Error::InvalidParameter { .. } => Failure::Validation(vec![e.to_string()]),
        _ => Failure::Infeasible(e.to_string()),
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().fold(String::new(), |mut acc, b| {
        use std::fmt::Write as _;
        let _ = write!(acc, "{b:02x}");
        acc
    })
}

/// Shortest round-trip decimal for a finite float (the serde_json writer).
fn fmt_num(v: f64) -> String {
    debug_assert!(v.is_finite(), "CSV numbers must be finite");
    serde_json::to_string(&v).expect("finite float serializes")
}

fn read_and_load(spec_path: &Path) -> Result<(LoadedSpec, String), Failure> {
    let text = fs::read_to_string(spec_path)
        .map_err(|e| Failure::Parse(format!("cannot read {}: {e}", spec_path.display())))?;
    let sha = sha256_hex(text.as_bytes());
    let parsed = parse_spec_str(&text).map_err(|e| Failure::Parse(e.to_string()))?;
    let loaded = load_spec(&parsed).map_err(Failure::Validation)?;
    Ok((loaded, sha))
}

fn write_file(out_dir: &Path, name: &str, contents: &str) -> Result<(), Failure> {
    fs::create_dir_all(out_dir)
        .map_err(|e| Failure::Infeasible(format!("cannot create {}: {e}", out_dir.display())))?;
    let path = out_dir.join(name);
    fs::write(&path, contents)
        .map_err(|e| Failure::Infeasible(format!("cannot write {}: {e}", path.display())))
}

fn finite_model(loaded: &LoadedSpec) -> Result<&ChainModel, Failure> {
    match (&loaded.model, &loaded.truncation_error) {
        (Some(m), _) => Ok(m),
        (None, Some(e)) => Err(Failure::Infeasible(format!(
            "no finite model: truncation failed ({e})"
        ))),
        (None, None) => Err(Failure::Infeasible(
            "no finite model: countable family without truncation".into(),
        )),
    }
}

fn validated_model(loaded: &LoadedSpec) -> Result<&ChainModel, Failure> {
    let model = finite_model(loaded)?;
    let violations = model.validate();
    if violations.is_empty() {
        Ok(model)
    } else {
        Err(Failure::Validation(
            violations.iter().map(|v| v.to_string()).collect(),
        ))
    }
}

fn outcome(
    command: &str,
    spec_path: &Path,
    sha: Option<&str>,
    exit_code: i32,
    body: Value,
) -> CliOutcome {
    let mut summary = json!({
        "tool": "chainlaw",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "spec": spec_path.display().to_string(),
        "spec_sha256": sha,
    });
    if let (Value::Object(dst), Value::Object(src)) = (&mut summary, body) {
        for (k, v) in src {
            dst.insert(k, v);
        }
    }
    CliOutcome { exit_code, summary }
}

fn tolerances_json(t: &Tolerances) -> Value {
    json!({
        "stochastic": t.stochastic,
        "convergence": t.convergence,
        "dedup": t.dedup,
    })
}

// ---------------------------------------------------------------------------
// validate
// ---------------------------------------------------------------------------

/// `chainlaw validate --spec FILE`
pub fn cmd_validate(spec_path: &Path) -> CliOutcome {
    let command = "validate";
    let (loaded, sha) = match read_and_load(spec_path) {
        Ok(v) => v,
        Err(f) => return outcome(command, spec_path, None, f.exit_code(), f.body()),
    };
    let mut violations: Vec<String> = Vec::new();
    if let Some(model) = &loaded.model {
        violations.extend(model.validate().iter().map(|v| v.to_string()));
    }
    if let Some(e) = &loaded.truncation_error {
        violations.push(format!("truncation failed: {e}"));
    }
    let code = if violations.is_empty() {
        EXIT_OK
    } else {
        EXIT_VALIDATION
    };
    let body = json!({
        "violations": violations,
        "tolerances": tolerances_json(&loaded.tolerances),
        "window": { "start": loaded.window.0, "end": loaded.window.1 },
        "family": loaded.family_name,
    });
    outcome(command, spec_path, Some(&sha), code, body)
}

// ---------------------------------------------------------------------------
// entrance
// ---------------------------------------------------------------------------

/// `chainlaw entrance --spec FILE --depth D [--tol T] --out DIR`
pub fn cmd_entrance(spec_path: &Path, depth: i64, tol: f64, out_dir: &Path) -> CliOutcome {
    let command = "entrance";
    let (loaded, sha) = match read_and_load(spec_path) {
        Ok(v) => v,
        Err(f) => return outcome(command, spec_path, None, f.exit_code(), f.body()),
    };
    let run = || -> Result<Value, Failure> {
        let model = validated_model(&loaded)?;
        let (start, end) = model.window();
        if depth < 1 || end - start < depth {
            return Err(Failure::Infeasible(format!(
                "window depth {} cannot support probe depth {depth}",
                end - start
            )));
        }
        let report = detect_uniqueness(model, end, tol, depth).map_err(map_analysis_err)?;
        let deepest = delta_vertices(model, end - depth, end, loaded.tolerances.dedup)
            .map_err(map_analysis_err)?;

        let mut trace_csv = String::from("depth,s,diameter\n");
        for &(d, diam) in &report.diameter_trace {
            trace_csv.push_str(&format!("{d},{},{}\n", end - d, fmt_num(diam)));
        }
        write_file(out_dir, "diameter_trace.csv", &trace_csv)?;

        let mut vertices_csv = String::from("vertex,state,probability\n");
        for (vi, vertex) in deepest.vertices().iter().enumerate() {
            for (si, &p) in vertex.probs().iter().enumerate() {
                vertices_csv.push_str(&format!("{},{},{}\n", vi + 1, si + 1, fmt_num(p)));
            }
        }
        write_file(out_dir, "vertices.csv", &vertices_csv)?;

        Ok(json!({
            "t": end,
            "depth": depth,
            "tol": tol,
            "dedup_tol": loaded.tolerances.dedup,
            "unique": report.unique,
            "law": report.law.as_ref().map(|l| l.probs().to_vec()),
            "diameter_at_depth": report.diameter_trace.last().map(|&(_, d)| d),
            "vertex_count": deepest.vertices().len(),
            "tolerances": tolerances_json(&loaded.tolerances),
            "outputs": ["diameter_trace.csv", "vertices.csv"],
        }))
    };
    match run() {
        Ok(body) => outcome(command, spec_path, Some(&sha), EXIT_OK, body),
        Err(f) => outcome(command, spec_path, Some(&sha), f.exit_code(), f.body()),
    }
}

// ---------------------------------------------------------------------------
// zeroone
// ---------------------------------------------------------------------------

fn empirical_columns(report: &EmpiricalReport, idx: usize) -> String {
    let row = &report.rows[idx];
    format!(
        ",{},{},{},{},{},{},{},{}",
        fmt_num(row.p_low),
        fmt_num(row.p_mid),
        fmt_num(row.p_high),
        fmt_num(row.se_low),
        fmt_num(row.se_mid),
        fmt_num(row.se_high),
        fmt_num(row.p_sym_diff),
        fmt_num(row.se_sym_diff)
    )
}

/// `chainlaw zeroone --spec FILE --out DIR [--simulate N --seed S]`
pub fn cmd_zeroone(
    spec_path: &Path,
    out_dir: &Path,
    simulate_n: Option<usize>,
    seed: u64,
) -> CliOutcome {
    let command = "zeroone";
    let (loaded, sha) = match read_and_load(spec_path) {
        Ok(v) => v,
        Err(f) => return outcome(command, spec_path, None, f.exit_code(), f.body()),
    };
    let run = || -> Result<Value, Failure> {
        let model = validated_model(&loaded)?;
        let event = loaded
            .event
            .clone()
            .ok_or_else(|| Failure::Infeasible("spec has no tail_event section".into()))?;
        let initial = model
            .initial()
            .cloned()
            .ok_or_else(|| Failure::Infeasible("spec has no initial distribution".into()))?;
        let (p, q) = loaded.bands;
        let h = harmonic_backward(model, &event).map_err(map_analysis_err)?;
        let bands = band_sets(&h, p, q).map_err(map_analysis_err)?;
        let exact = band_probabilities(model, &initial, &h, &bands).map_err(map_analysis_err)?;

        let empirical = match simulate_n {
            None => None,
            Some(n) => {
                let checkpoints: Vec<TimeIndex> = (initial.time()..=h.horizon()).collect();
                let config = SimConfig {
                    n_trajectories: n,
                    horizon: h.horizon(),
                    root_seed: seed,
                    checkpoints,
                };
                let batch = simulate(model, &initial, &config).map_err(map_analysis_err)?;
                let report = empirical_band_report(model, &batch, &bands, &event)
                    .map_err(map_analysis_err)?;
                Some(report)
            }
        };

        let mut csv = String::from("n,P_low,P_mid,P_high,P_A,conservation_residual");
        if empirical.is_some() {
            csv.push_str(
                ",emp_P_low,emp_P_mid,emp_P_high,SE_low,SE_mid,SE_high,emp_symdiff,SE_symdiff",
            );
        }
        csv.push('\n');
        for (idx, row) in exact.rows.iter().enumerate() {
            csv.push_str(&format!(
                "{},{},{},{},{},{}",
                row.time,
                fmt_num(row.p_low),
                fmt_num(row.p_mid),
                fmt_num(row.p_high),
                fmt_num(exact.p_event),
                fmt_num(row.conservation_residual)
            ));
            if let Some(report) = &empirical {
                csv.push_str(&empirical_columns(report, idx));
            }
            csv.push('\n');
        }
        write_file(out_dir, "bands.csv", &csv)?;

        let mut body = json!({
            "p_event": exact.p_event,
            "bands": { "p": p, "q": q },
            "horizon": h.horizon(),
            "stabilization_residual": h.stabilization_residual(),
            "rows": exact.rows.len(),
            "tolerances": tolerances_json(&loaded.tolerances),
            "outputs": ["bands.csv"],
        });
        if let (Value::Object(dst), Some(report)) = (&mut body, &empirical) {
            dst.insert("simulate".into(), json!(report.n_trajectories));
            dst.insert("seed".into(), json!(seed));
            dst.insert("empirical_p_event".into(), json!(report.p_event));
            dst.insert(
                "undecided_fraction".into(),
                json!(report.undecided_fraction),
            );
        }
        Ok(body)
    };
    match run() {
        Ok(body) => outcome(command, spec_path, Some(&sha), EXIT_OK, body),
        Err(f) => outcome(command, spec_path, Some(&sha), f.exit_code(), f.body()),
    }
}

// ---------------------------------------------------------------------------
// countable
// ---------------------------------------------------------------------------

fn scope_str(scope: &CertificateScope) -> String {
    match scope {
        CertificateScope::AllStates => "all_states".into(),
        CertificateScope::ProbeBand(b) => format!("probe_band_{b}"),
    }
}

fn probe_times(window: (TimeIndex, TimeIndex)) -> Vec<TimeIndex> {
    let all: Vec<TimeIndex> = (window.0..window.1).collect();
    if all.len() <= 16 {
        return all;
    }
    let last = all.len() - 1;
    (0..16).map(|i| all[i * last / 15]).collect()
}

/// `chainlaw countable --spec FILE --out DIR`
pub fn cmd_countable(spec_path: &Path, out_dir: &Path) -> CliOutcome {
    let command = "countable";
    let (loaded, sha) = match read_and_load(spec_path) {
        Ok(v) => v,
        Err(f) => return outcome(command, spec_path, None, f.exit_code(), f.body()),
    };
    let run = || -> Result<Value, Failure> {
        let family = loaded
            .family
            .as_ref()
            .ok_or_else(|| Failure::Infeasible("spec names no countable family".into()))?;
        let times = probe_times(loaded.window);
        if times.is_empty() {
            return Err(Failure::Infeasible("window has no steps".into()));
        }
        let verdicts = condition_p_check(family, &times, &EPS_GRID, DEFAULT_PROBE_BAND)
            .map_err(map_analysis_err)?;
        let uniform = condition_u_check(
            family,
            &times,
            &EPS_GRID,
            DEFAULT_PROBE_BAND,
            DEFAULT_UNIFORM_CAP,
        )
        .map_err(map_analysis_err)?;

        // tightness.csv: one row per (time, eps).
        let mut csv =
            String::from("time,eps,N_eps,scope,counterexample_state,counterexample_mass,mask\n");
        let mut verdict_json = Vec::new();
        for verdict in &verdicts {
            match verdict {
                TightnessVerdict::Tight { time, table, scope } => {
                    for &(eps, cutoff) in table {
                        csv.push_str(&format!(
                            "{time},{},{cutoff},{},,,counterexample_state;counterexample_mass\n",
                            fmt_num(eps),
                            scope_str(scope)
                        ));
                    }
                    verdict_json.push(json!({
                        "time": time,
                        "tight": true,
                        "scope": scope_str(scope),
                        "table": table.iter().map(|&(e, n)| json!({"eps": e, "cutoff": n})).collect::<Vec<_>>(),
                    }));
                }
                TightnessVerdict::NotTight {
                    time,
                    counterexample,
                } => {
                    for &eps in EPS_GRID.iter() {
                        csv.push_str(&format!(
                            "{time},{},,,{},{},N_eps;scope\n",
                            fmt_num(eps),
                            counterexample.state,
                            fmt_num(counterexample.mass_inside)
                        ));
                    }
                    verdict_json.push(json!({
                        "time": time,
                        "tight": false,
                        "counterexample": {
                            "state": counterexample.state,
                            "eps": counterexample.eps,
                            "claimed_cutoff": counterexample.claimed_cutoff,
                            "mass_inside": counterexample.mass_inside,
                        },
                    }));
                }
            }
        }
        write_file(out_dir, "tightness.csv", &csv)?;
        let mut outputs = vec!["tightness.csv".to_string()];

        let uniform_json = match &uniform {
            UniformVerdict::Uniform { table, scope } => {
                let mut csv = String::from("eps,N_eps,scope\n");
                for &(eps, cutoff) in table {
                    csv.push_str(&format!("{},{cutoff},{}\n", fmt_num(eps), scope_str(scope)));
                }
                write_file(out_dir, "uniform.csv", &csv)?;
                outputs.push("uniform.csv".into());
                json!({
                    "uniform": true,
                    "scope": scope_str(scope),
                    "table": table.iter().map(|&(e, n)| json!({"eps": e, "cutoff": n})).collect::<Vec<_>>(),
                })
            }
            UniformVerdict::NotUniform { reason } => json!({
                "uniform": false,
                "reason": format!("{reason:?}"),
            }),
        };

        let mut body = json!({
            "family": family.name(),
            "probe_band": DEFAULT_PROBE_BAND,
            "eps_grid": EPS_GRID.to_vec(),
            "uniform_cap": DEFAULT_UNIFORM_CAP,
            "probed_times": times,
            "tightness": verdict_json,
            "condition_u": uniform_json,
            "tolerances": tolerances_json(&loaded.tolerances),
        });
        let dst = body.as_object_mut().expect("object");

        if family.name() == "random_walk" {
            let sweep: Vec<u32> = (1..=RW_SWEEP_LEN).collect();
            let rows = rw_bound_check(&sweep).map_err(map_analysis_err)?;
            let mut csv = String::from("n,exact,bound,holds\n");
            for RwBoundRow {
                n,
                exact,
                bound,
                holds,
            } in &rows
            {
                csv.push_str(&format!(
                    "{n},{},{},{holds}\n",
                    fmt_num(*exact),
                    fmt_num(*bound)
                ));
            }
            write_file(out_dir, "rw_bound.csv", &csv)?;
            outputs.push("rw_bound.csv".into());
            dst.insert(
                "rw_bound".into(),
                json!({
                    "sweep_len": RW_SWEEP_LEN,
                    "all_hold": rows.iter().all(|r| r.holds),
                }),
            );
        }

        if family.name() == "shift" {
            let offset = family.shift_offset().expect("shift family");
            let truncation = loaded.truncation.unwrap_or(64);
            let demo = shift_family_checks(offset, truncation, loaded.window, loaded.shift_base);
            match demo {
                Ok(report) => {
                    let mut csv = String::from("n,state,recursion_residual\n");
                    for law in &report.laws {
                        let state = law
                            .probs()
                            .iter()
                            .position(|&v| v == 1.0)
                            .map(|i| i + 1)
                            .unwrap_or(0);
                        csv.push_str(&format!(
                            "{},{state},{}\n",
                            law.time(),
                            fmt_num(report.max_recursion_residual)
                        ));
                    }
                    write_file(out_dir, "shift_demo.csv", &csv)?;
                    outputs.push("shift_demo.csv".into());
                    dst.insert(
                        "shift_demo".into(),
                        json!({
                            "offset": report.offset,
                            "base_state": report.base_state,
                            "onto_modulo_shift": report.onto_modulo_shift,
                            "max_recursion_residual": report.max_recursion_residual,
                        }),
                    );
                }
                Err(e) => {
                    dst.insert("shift_demo".into(), json!({ "error": e.to_string() }));
                }
            }
        }

        match (&loaded.truncated, &loaded.truncation_error) {
            (Some(t), _) => {
                let mut csv = String::from("time,mass_defect\n");
                for &(time, defect) in &t.step_defects {
                    csv.push_str(&format!("{time},{}\n", fmt_num(defect)));
                }
                write_file(out_dir, "truncation.csv", &csv)?;
                outputs.push("truncation.csv".into());
                dst.insert(
                    "truncation".into(),
                    json!({
                        "m": t.truncation,
                        "product_defect_bound": t.product_defect_bound,
                    }),
                );
            }
            (None, Some(e)) => {
                dst.insert("truncation".into(), json!({ "error": e }));
            }
            (None, None) => {}
        }

        dst.insert("outputs".into(), json!(outputs));
        Ok(body)
    };
    match run() {
        Ok(body) => outcome(command, spec_path, Some(&sha), EXIT_OK, body),
        Err(f) => outcome(command, spec_path, Some(&sha), f.exit_code(), f.body()),
    }
}

//! C ABI for the chainlaw analysis library.
//!
//! The surface mirrors the CLI: a spec handle is created from the JSON chain
//! specification text, analyses run against the handle and return their
//! reports as JSON strings. Status codes follow the CLI exit codes
//! (0 ok, 2 validation, 3 parse, 4 infeasible) plus null-pointer and
//! internal errors. Every returned string is owned by the caller and must
//! be released with [`chainlaw_string_free`]; handles are released with
//! [`chainlaw_spec_free`]. On any failure a thread-local message is set and
//! can be fetched with [`chainlaw_last_error_message`].

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::os::raw::c_char;

use serde_json::{json, Value};

use chainlaw::countable::{
    condition_p_check, condition_u_check, rw_bound_check, shift_family_checks, CertificateScope,
    TightnessVerdict, UniformVerdict, DEFAULT_PROBE_BAND, DEFAULT_UNIFORM_CAP,
};
use chainlaw::entrance::{delta_vertices, detect_uniqueness};
use chainlaw::montecarlo::{empirical_band_report, simulate, SimConfig};
use chainlaw::spec::{load_spec, parse_spec_str, LoadedSpec};
use chainlaw::tail::{band_probabilities, band_sets, harmonic_backward};
use chainlaw::ChainModel;

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChainlawStatus {
    ChainlawOk = 0,
    ChainlawNullPointer = 1,
    ChainlawValidationError = 2,
    ChainlawParseError = 3,
    ChainlawInfeasible = 4,
    ChainlawInternalError = 5,
}

use ChainlawStatus::*;

/// Opaque handle around a parsed and resolved chain specification.
pub struct ChainlawSpec {
    loaded: LoadedSpec,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: &str) {
    let cstring = CString::new(message.replace('\0', " "))
        .unwrap_or_else(|_| CString::new("invalid error message").expect("static"));
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(cstring));
}

fn clear_last_error() {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
}

/// Writes an owned C string through the out pointer.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one `*mut c_char`.
unsafe fn write_string(out: *mut *mut c_char, text: String) -> ChainlawStatus {
    match CString::new(text) {
        Ok(cstring) => {
            *out = cstring.into_raw();
            ChainlawOk
        }
        Err(_) => {
            set_last_error("report contained an interior NUL byte");
            ChainlawInternalError
        }
    }
}

fn model_of(spec: &ChainlawSpec) -> Result<&ChainModel, (ChainlawStatus, String)> {
    match (&spec.loaded.model, &spec.loaded.truncation_error) {
        (Some(m), _) => Ok(m),
        (None, Some(e)) => Err((
            ChainlawInfeasible,
            format!("no finite model: truncation failed ({e})"),
        )),
        (None, None) => Err((
            ChainlawInfeasible,
            "no finite model: countable family without truncation".to_string(),
        )),
    }
}

fn validated_model(spec: &ChainlawSpec) -> Result<&ChainModel, (ChainlawStatus, String)> {
    let model = model_of(spec)?;
    let violations = model.validate();
    if violations.is_empty() {
        Ok(model)
    } else {
        Err((
            ChainlawValidationError,
            violations
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join("; "),
        ))
    }
}

/// Library version as a static NUL-terminated string; do not free.
#[no_mangle]
pub extern "C" fn chainlaw_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Returns the last error message for this thread as an owned string, or
/// NULL when no error has occurred. Free with [`chainlaw_string_free`].
#[no_mangle]
pub extern "C" fn chainlaw_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|slot| match slot.borrow().as_ref() {
        Some(msg) => msg.clone().into_raw(),
        None => std::ptr::null_mut(),
    })
}

/// Parses a JSON chain specification into a handle.
///
/// # Safety
/// `json` must be a valid NUL-terminated string and `out_spec` a valid
/// writable pointer. On success the caller owns the handle and must release
/// it with [`chainlaw_spec_free`].
#[no_mangle]
pub unsafe extern "C" fn chainlaw_spec_parse(
    json: *const c_char,
    out_spec: *mut *mut ChainlawSpec,
) -> ChainlawStatus {
    if json.is_null() || out_spec.is_null() {
        set_last_error("null pointer argument");
        return ChainlawNullPointer;
    }
    clear_last_error();
    let text = match CStr::from_ptr(json).to_str() {
        Ok(t) => t,
        Err(_) => {
            set_last_error("spec text is not valid UTF-8");
            return ChainlawParseError;
        }
    };
    let parsed = match parse_spec_str(text) {
        Ok(p) => p,
        Err(e) => {
            set_last_error(&e.to_string());
            return ChainlawParseError;
        }
    };
    match load_spec(&parsed) {
        Ok(loaded) => {
            *out_spec = Box::into_raw(Box::new(ChainlawSpec { loaded }));
            ChainlawOk
        }
        Err(violations) => {
            set_last_error(&violations.join("; "));
            ChainlawValidationError
        }
    }
}

/// Releases a spec handle. NULL is ignored.
///
/// # Safety
/// `spec` must be NULL or a pointer previously returned by
/// [`chainlaw_spec_parse`] that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn chainlaw_spec_free(spec: *mut ChainlawSpec) {
    if !spec.is_null() {
        drop(Box::from_raw(spec));
    }
}

/// Releases a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must be NULL or a pointer previously returned by a chainlaw call
/// that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn chainlaw_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Validates the spec's model invariants. Writes a JSON report
/// `{"violations": [...]}` and returns `ChainlawOk` when the report is
/// empty, `ChainlawValidationError` otherwise.
///
/// # Safety
/// `spec` must be a live handle from [`chainlaw_spec_parse`] and `out_json`
/// a valid writable pointer.
#[no_mangle]
pub unsafe extern "C" fn chainlaw_validate(
    spec: *const ChainlawSpec,
    out_json: *mut *mut c_char,
) -> ChainlawStatus {
    if spec.is_null() || out_json.is_null() {
        set_last_error("null pointer argument");
        return ChainlawNullPointer;
    }
    clear_last_error();
    let spec = &*spec;
    let mut violations: Vec<String> = Vec::new();
    if let Some(model) = &spec.loaded.model {
        violations.extend(model.validate().iter().map(|v| v.to_string()));
    }
    if let Some(e) = &spec.loaded.truncation_error {
        violations.push(format!("truncation failed: {e}"));
    }
    let ok = violations.is_empty();
    let report = json!({ "violations": violations });
    let status = write_string(out_json, report.to_string());
    if status != ChainlawOk {
        return status;
    }
    if ok {
        ChainlawOk
    } else {
        set_last_error("model invariants violated");
        ChainlawValidationError
    }
}

fn entrance_report(
    spec: &ChainlawSpec,
    depth: i64,
    tol: f64,
) -> Result<Value, (ChainlawStatus, String)> {
    let model = validated_model(spec)?;
    let (start, end) = model.window();
    if depth < 1 || end - start < depth {
        return Err((
            ChainlawInfeasible,
            format!(
                "window depth {} cannot support probe depth {depth}",
                end - start
            ),
        ));
    }
    let report = detect_uniqueness(model, end, tol, depth)
        .map_err(|e| (ChainlawInfeasible, e.to_string()))?;
    let deepest = delta_vertices(model, end - depth, end, spec.loaded.tolerances.dedup)
        .map_err(|e| (ChainlawInfeasible, e.to_string()))?;
    Ok(json!({
        "t": end,
        "depth": depth,
        "tol": tol,
        "unique": report.unique,
        "law": report.law.as_ref().map(|l| l.probs().to_vec()),
        "diameter_trace": report
            .diameter_trace
            .iter()
            .map(|&(d, diam)| json!({"depth": d, "s": end - d, "diameter": diam}))
            .collect::<Vec<_>>(),
        "vertices": deepest
            .vertices()
            .iter()
            .map(|v| v.probs().to_vec())
            .collect::<Vec<_>>(),
    }))
}

/// Entrance-law uniqueness analysis; the JSON report carries the verdict,
/// the diameter trace and the deepest vertex set.
///
/// # Safety
/// `spec` must be a live handle from [`chainlaw_spec_parse`] and `out_json`
/// a valid writable pointer.
#[no_mangle]
pub unsafe extern "C" fn chainlaw_entrance(
    spec: *const ChainlawSpec,
    depth: i64,
    tol: f64,
    out_json: *mut *mut c_char,
) -> ChainlawStatus {
    if spec.is_null() || out_json.is_null() {
        set_last_error("null pointer argument");
        return ChainlawNullPointer;
    }
    clear_last_error();
    match entrance_report(&*spec, depth, tol) {
        Ok(report) => write_string(out_json, report.to_string()),
        Err((status, msg)) => {
            set_last_error(&msg);
            status
        }
    }
}

fn zeroone_report(
    spec: &ChainlawSpec,
    simulate_n: u64,
    seed: u64,
) -> Result<Value, (ChainlawStatus, String)> {
    let model = validated_model(spec)?;
    let event = spec.loaded.event.clone().ok_or((
        ChainlawInfeasible,
        "spec has no tail_event section".to_string(),
    ))?;
    let initial = model.initial().cloned().ok_or((
        ChainlawInfeasible,
        "spec has no initial distribution".to_string(),
    ))?;
    let (p, q) = spec.loaded.bands;
    let h =
        harmonic_backward(model, &event).map_err(|e| (ChainlawValidationError, e.to_string()))?;
    let bands = band_sets(&h, p, q).map_err(|e| (ChainlawValidationError, e.to_string()))?;
    let exact = band_probabilities(model, &initial, &h, &bands)
        .map_err(|e| (ChainlawInfeasible, e.to_string()))?;

    let empirical = if simulate_n > 0 {
        let config = SimConfig {
            n_trajectories: simulate_n as usize,
            horizon: h.horizon(),
            root_seed: seed,
            checkpoints: (initial.time()..=h.horizon()).collect(),
        };
        let batch =
            simulate(model, &initial, &config).map_err(|e| (ChainlawInfeasible, e.to_string()))?;
        Some(
            empirical_band_report(model, &batch, &bands, &event)
                .map_err(|e| (ChainlawValidationError, e.to_string()))?,
        )
    } else {
        None
    };

    let rows: Vec<Value> = exact
        .rows
        .iter()
        .enumerate()
        .map(|(idx, row)| {
            let mut v = json!({
                "n": row.time,
                "p_low": row.p_low,
                "p_mid": row.p_mid,
                "p_high": row.p_high,
                "conservation_residual": row.conservation_residual,
            });
            if let (Value::Object(dst), Some(report)) = (&mut v, &empirical) {
                let e = &report.rows[idx];
                dst.insert("emp_p_low".into(), json!(e.p_low));
                dst.insert("emp_p_mid".into(), json!(e.p_mid));
                dst.insert("emp_p_high".into(), json!(e.p_high));
                dst.insert("emp_symdiff".into(), json!(e.p_sym_diff));
            }
            v
        })
        .collect();
    let mut report = json!({
        "p_event": exact.p_event,
        "bands": {"p": p, "q": q},
        "horizon": h.horizon(),
        "stabilization_residual": h.stabilization_residual(),
        "rows": rows,
    });
    if let (Value::Object(dst), Some(e)) = (&mut report, &empirical) {
        dst.insert("seed".into(), json!(seed));
        dst.insert("n_trajectories".into(), json!(e.n_trajectories));
        dst.insert("empirical_p_event".into(), json!(e.p_event));
        dst.insert("undecided_fraction".into(), json!(e.undecided_fraction));
    }
    Ok(report)
}

/// Exact band probabilities for the spec's tail event, with optional
/// empirical cross-check (`simulate_n > 0` enables simulation).
///
/// # Safety
/// `spec` must be a live handle from [`chainlaw_spec_parse`] and `out_json`
/// a valid writable pointer.
#[no_mangle]
pub unsafe extern "C" fn chainlaw_zeroone(
    spec: *const ChainlawSpec,
    simulate_n: u64,
    seed: u64,
    out_json: *mut *mut c_char,
) -> ChainlawStatus {
    if spec.is_null() || out_json.is_null() {
        set_last_error("null pointer argument");
        return ChainlawNullPointer;
    }
    clear_last_error();
    match zeroone_report(&*spec, simulate_n, seed) {
        Ok(report) => write_string(out_json, report.to_string()),
        Err((status, msg)) => {
            set_last_error(&msg);
            status
        }
    }
}

fn scope_json(scope: &CertificateScope) -> Value {
    match scope {
        CertificateScope::AllStates => json!("all_states"),
        CertificateScope::ProbeBand(b) => json!(format!("probe_band_{b}")),
    }
}

fn countable_report(spec: &ChainlawSpec) -> Result<Value, (ChainlawStatus, String)> {
    let family = spec.loaded.family.as_ref().ok_or((
        ChainlawInfeasible,
        "spec names no countable family".to_string(),
    ))?;
    let (start, end) = spec.loaded.window;
    let times: Vec<i64> = (start..end).collect();
    if times.is_empty() {
        return Err((ChainlawInfeasible, "window has no steps".to_string()));
    }
    let eps_grid = [0.1, 0.01, 0.001];
    let verdicts = condition_p_check(family, &times, &eps_grid, DEFAULT_PROBE_BAND)
        .map_err(|e| (ChainlawInfeasible, e.to_string()))?;
    let uniform = condition_u_check(
        family,
        &times,
        &eps_grid,
        DEFAULT_PROBE_BAND,
        DEFAULT_UNIFORM_CAP,
    )
    .map_err(|e| (ChainlawInfeasible, e.to_string()))?;

    let tightness: Vec<Value> = verdicts
        .iter()
        .map(|v| match v {
            TightnessVerdict::Tight { time, table, scope } => json!({
                "time": time,
                "tight": true,
                "scope": scope_json(scope),
                "table": table
                    .iter()
                    .map(|&(e, n)| json!({"eps": e, "cutoff": n}))
                    .collect::<Vec<_>>(),
            }),
            TightnessVerdict::NotTight {
                time,
                counterexample,
            } => json!({
                "time": time,
                "tight": false,
                "counterexample": {
                    "state": counterexample.state,
                    "eps": counterexample.eps,
                    "claimed_cutoff": counterexample.claimed_cutoff,
                    "mass_inside": counterexample.mass_inside,
                },
            }),
        })
        .collect();
    let condition_u = match &uniform {
        UniformVerdict::Uniform { table, scope } => json!({
            "uniform": true,
            "scope": scope_json(scope),
            "table": table
                .iter()
                .map(|&(e, n)| json!({"eps": e, "cutoff": n}))
                .collect::<Vec<_>>(),
        }),
        UniformVerdict::NotUniform { reason } => json!({
            "uniform": false,
            "reason": format!("{reason:?}"),
        }),
    };

    let mut report = json!({
        "family": family.name(),
        "tightness": tightness,
        "condition_u": condition_u,
        "probe_band": DEFAULT_PROBE_BAND,
        "eps_grid": eps_grid.to_vec(),
    });
    let dst = report.as_object_mut().expect("object");
    if family.name() == "random_walk" {
        let sweep: Vec<u32> = (1..=1000).collect();
        let rows = rw_bound_check(&sweep).map_err(|e| (ChainlawInfeasible, e.to_string()))?;
        dst.insert(
            "rw_bound".into(),
            json!({ "sweep_len": 1000, "all_hold": rows.iter().all(|r| r.holds) }),
        );
    }
    if family.name() == "shift" {
        let offset = family.shift_offset().expect("shift family");
        let truncation = spec.loaded.truncation.unwrap_or(64);
        match shift_family_checks(
            offset,
            truncation,
            spec.loaded.window,
            spec.loaded.shift_base,
        ) {
            Ok(demo) => {
                dst.insert(
                    "shift_demo".into(),
                    json!({
                        "offset": demo.offset,
                        "base_state": demo.base_state,
                        "onto_modulo_shift": demo.onto_modulo_shift,
                        "max_recursion_residual": demo.max_recursion_residual,
                    }),
                );
            }
            Err(e) => {
                dst.insert("shift_demo".into(), json!({ "error": e.to_string() }));
            }
        }
    }
    match (&spec.loaded.truncated, &spec.loaded.truncation_error) {
        (Some(t), _) => {
            dst.insert(
                "truncation".into(),
                json!({ "m": t.truncation, "product_defect_bound": t.product_defect_bound }),
            );
        }
        (None, Some(e)) => {
            dst.insert("truncation".into(), json!({ "error": e }));
        }
        (None, None) => {}
    }
    Ok(report)
}

/// Tightness verdicts, uniform table, walk bounds and truncation defects
/// for a countable-family spec.
///
/// # Safety
/// `spec` must be a live handle from [`chainlaw_spec_parse`] and `out_json`
/// a valid writable pointer.
#[no_mangle]
pub unsafe extern "C" fn chainlaw_countable(
    spec: *const ChainlawSpec,
    out_json: *mut *mut c_char,
) -> ChainlawStatus {
    if spec.is_null() || out_json.is_null() {
        set_last_error("null pointer argument");
        return ChainlawNullPointer;
    }
    clear_last_error();
    match countable_report(&*spec) {
        Ok(report) => write_string(out_json, report.to_string()),
        Err((status, msg)) => {
            set_last_error(&msg);
            status
        }
    }
}

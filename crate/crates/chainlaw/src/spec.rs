//! JSON chain specifications: the ingestion format shared by the CLI and the
//! C bindings.
//!
//! A spec document carries a window, a matrix source (explicit matrices or a
//! named builtin family), and optional initial distribution, tail event,
//! band thresholds, tolerances and truncation. Parsing is strict (unknown
//! keys are rejected so typos surface as parse failures); semantic problems
//! such as an unknown family name are reported as content violations, and
//! stochastic-matrix defects are left to [`ChainModel::validate`].
//!
//! Builtin families:
//!
//! - `"permutation2"`: the 2-state swap matrix at every time.
//! - `"alt_dim"`: two states at even times, one at odd times
//!   (`[[1],[1]]` at even times, `[[0.5, 0.5]]` at odd times).
//! - `"reset"` (countable): `(1 - alpha) delta_{i+1} + alpha geometric(beta)`
//!   rows; params `alpha` (default 1), `beta` (default 0.5), optional
//!   `beta_drift_to_one: true`.
//! - `"random_walk"` (countable): symmetric walk on the integers, zigzag
//!   indexed.
//! - `"shift"` (countable): deterministic shift by `ell` (default 1);
//!   optional `base_state` for the entrance-law demonstration.
//!
//! Countable families become finite [`ChainModel`]s through `truncation.m`.

use serde::{Deserialize, Serialize};

use crate::countable::{truncate_window, BetaSchedule, RowFamily, TruncatedModel};
use crate::model::{ChainModel, Distribution, StochasticMatrix, TimeIndex};
use crate::tail::TailEventSpec;

#[derive(Clone, Copy, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct WindowSpec {
    pub start: i64,
    pub end: i64,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixSpec {
    pub time: i64,
    pub rows: usize,
    pub cols: usize,
    pub entries: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuiltinSpec {
    pub family: String,
    #[serde(default)]
    pub params: serde_json::Value,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum MatrixSource {
    Explicit(Vec<MatrixSpec>),
    Builtin(BuiltinSpec),
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    pub time: i64,
    pub probs: Vec<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum TailEventSpecFile {
    Absorption { targets: Vec<usize> },
    TerminalSeed { horizon: i64, values: Vec<f64> },
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct BandsSpec {
    pub p: f64,
    pub q: f64,
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub stochastic: f64,
    pub convergence: f64,
    pub dedup: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            stochastic: 1e-12,
            convergence: 1e-9,
            dedup: 1e-9,
        }
    }
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruncationSpec {
    pub m: usize,
}

/// On-disk chain specification.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSpecFile {
    pub window: WindowSpec,
    pub matrices: MatrixSource,
    #[serde(default)]
    pub initial: Option<InitialSpec>,
    #[serde(default)]
    pub tail_event: Option<TailEventSpecFile>,
    #[serde(default)]
    pub bands: Option<BandsSpec>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub truncation: Option<TruncationSpec>,
}

/// Parse failure with document location.
#[derive(Clone, Debug)]
pub struct SpecParseError {
    pub message: String,
    pub line: usize,
    pub column: usize,
}

impl std::fmt::Display for SpecParseError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} (line {}, column {})",
            self.message, self.line, self.column
        )
    }
}

impl std::error::Error for SpecParseError {}

/// Parses a spec document, reporting the failure location for malformed
/// input.
pub fn parse_spec_str(text: &str) -> Result<ChainSpecFile, SpecParseError> {
    serde_json::from_str(text).map_err(|e| SpecParseError {
        message: e.to_string(),
        line: e.line(),
        column: e.column(),
    })
}

/// A spec resolved into analysis inputs.
#[derive(Clone, Debug)]
pub struct LoadedSpec {
    pub window: (TimeIndex, TimeIndex),
    pub tolerances: Tolerances,
    pub bands: (f64, f64),
    pub event: Option<TailEventSpec>,
    /// Finite model: explicit matrices, a finite builtin, or a truncated
    /// countable family.
    pub model: Option<ChainModel>,
    /// The countable family itself, when one was named.
    pub family: Option<RowFamily>,
    pub family_name: Option<String>,
    pub truncation: Option<usize>,
    /// Truncation bookkeeping when a countable family was truncated.
    pub truncated: Option<TruncatedModel>,
    /// Why the truncated model could not be built (for instance a shift row
    /// leaving the kept states); analyses that need no full matrix still
    /// run.
    pub truncation_error: Option<String>,
    /// Base state requested for the shift entrance-law demonstration.
    pub shift_base: Option<i64>,
}

fn param_f64(params: &serde_json::Value, key: &str, default: f64) -> Result<f64, String> {
    match params.get(key) {
        None => Ok(default),
        Some(v) => v
            .as_f64()
            .ok_or_else(|| format!("parameter {key} must be a number, got {v}")),
    }
}

fn param_i64(params: &serde_json::Value, key: &str, default: i64) -> Result<i64, String> {
    match params.get(key) {
        None => Ok(default),
        Some(v) => v
            .as_i64()
            .ok_or_else(|| format!("parameter {key} must be an integer, got {v}")),
    }
}

fn param_bool(params: &serde_json::Value, key: &str, default: bool) -> Result<bool, String> {
    match params.get(key) {
        None => Ok(default),
        Some(v) => v
            .as_bool()
            .ok_or_else(|| format!("parameter {key} must be a boolean, got {v}")),
    }
}

fn check_params_known(params: &serde_json::Value, known: &[&str]) -> Result<(), String> {
    if params.is_null() {
        return Ok(());
    }
    let obj = params
        .as_object()
        .ok_or_else(|| format!("params must be an object, got {params}"))?;
    for key in obj.keys() {
        if !known.contains(&key.as_str()) {
            return Err(format!("unknown parameter {key}"));
        }
    }
    Ok(())
}

fn build_countable(builtin: &BuiltinSpec) -> Result<(RowFamily, Option<i64>), String> {
    match builtin.family.as_str() {
        "reset" => {
            check_params_known(&builtin.params, &["alpha", "beta", "beta_drift_to_one"])?;
            let alpha = param_f64(&builtin.params, "alpha", 1.0)?;
            let beta = param_f64(&builtin.params, "beta", 0.5)?;
            let drift = param_bool(&builtin.params, "beta_drift_to_one", false)?;
            let schedule = if drift {
                BetaSchedule::DriftToOne { base: beta }
            } else {
                BetaSchedule::Constant(beta)
            };
            RowFamily::reset(alpha, schedule)
                .map(|f| (f, None))
                .map_err(|e| e.to_string())
        }
        "random_walk" => {
            check_params_known(&builtin.params, &[])?;
            Ok((RowFamily::random_walk(), None))
        }
        "shift" => {
            check_params_known(&builtin.params, &["ell", "base_state"])?;
            let ell = param_i64(&builtin.params, "ell", 1)?;
            let base = match builtin.params.get("base_state") {
                None => None,
                Some(v) => Some(v.as_i64().ok_or("base_state must be an integer")?),
            };
            RowFamily::shift(ell)
                .map(|f| (f, base))
                .map_err(|e| e.to_string())
        }
        other => Err(format!("unknown builtin family {other:?}")),
    }
}

/// Resolves a parsed spec into analysis inputs. Returned `Err` carries
/// content violations (unknown family, malformed entries, bad thresholds);
/// stochastic defects of explicit matrices are *not* checked here, so that
/// `validate` can report them all.
pub fn load_spec(spec: &ChainSpecFile) -> Result<LoadedSpec, Vec<String>> {
    let mut violations = Vec::new();
    let window = (spec.window.start, spec.window.end);
    if window.0 > window.1 {
        violations.push(format!(
            "window start {} exceeds end {}",
            window.0, window.1
        ));
    }
    let bands = match spec.bands {
        None => (0.1, 0.9),
        Some(BandsSpec { p, q }) => {
            if !(0.0 < p && p < q && q < 1.0) {
                violations.push(format!(
                    "bands must satisfy 0 < p < q < 1, got p={p}, q={q}"
                ));
            }
            (p, q)
        }
    };
    let initial = spec
        .initial
        .as_ref()
        .map(|init| Distribution::from_raw(init.time, init.probs.clone()));
    let event = spec.tail_event.as_ref().map(|e| match e {
        TailEventSpecFile::Absorption { targets } => TailEventSpec::Absorption {
            targets: targets.clone(),
        },
        TailEventSpecFile::TerminalSeed { horizon, values } => TailEventSpec::TerminalSeed {
            horizon: *horizon,
            values: values.clone(),
        },
    });

    let mut model = None;
    let mut family = None;
    let mut family_name = None;
    let mut truncated = None;
    let mut truncation_error = None;
    let mut shift_base = None;
    let truncation = spec.truncation.map(|t| t.m);

    match &spec.matrices {
        MatrixSource::Explicit(matrices) => {
            let mut built = Vec::new();
            for m in matrices {
                if m.entries.len() != m.rows || m.entries.iter().any(|row| row.len() != m.cols) {
                    violations.push(format!(
                        "matrix at time {}: entries do not form a {}x{} array",
                        m.time, m.rows, m.cols
                    ));
                    continue;
                }
                match StochasticMatrix::from_rows_unchecked(m.time, &m.entries) {
                    Ok(sm) => built.push(sm),
                    Err(e) => violations.push(format!("matrix at time {}: {e}", m.time)),
                }
            }
            model = Some(ChainModel::new(
                window,
                built,
                initial.clone(),
                spec.tolerances.stochastic,
            ));
        }
        MatrixSource::Builtin(builtin) => {
            family_name = Some(builtin.family.clone());
            match builtin.family.as_str() {
                "permutation2" => {
                    if let Err(e) = check_params_known(&builtin.params, &[]) {
                        violations.push(e);
                    }
                    model = Some(ChainModel::from_step_fn(
                        window,
                        initial.clone(),
                        spec.tolerances.stochastic,
                        |_| ndarray::array![[0.0, 1.0], [1.0, 0.0]],
                    ));
                }
                "alt_dim" => {
                    if let Err(e) = check_params_known(&builtin.params, &[]) {
                        violations.push(e);
                    }
                    model = Some(ChainModel::from_step_fn(
                        window,
                        initial.clone(),
                        spec.tolerances.stochastic,
                        |n| {
                            if n.rem_euclid(2) == 0 {
                                ndarray::array![[1.0], [1.0]]
                            } else {
                                ndarray::array![[0.5, 0.5]]
                            }
                        },
                    ));
                }
                _ => match build_countable(builtin) {
                    Err(e) => violations.push(e),
                    Ok((f, base)) => {
                        shift_base = base;
                        if let Some(m) = truncation {
                            match truncate_window(&f, window, m, spec.tolerances.stochastic) {
                                Ok(t) => {
                                    let mut chain = t.model.clone();
                                    chain.set_initial(initial.clone());
                                    model = Some(chain);
                                    truncated = Some(t);
                                }
                                Err(e) => truncation_error = Some(e.to_string()),
                            }
                        }
                        family = Some(f);
                    }
                },
            }
        }
    }

    if !violations.is_empty() {
        return Err(violations);
    }
    Ok(LoadedSpec {
        window,
        tolerances: spec.tolerances,
        bands,
        event,
        model,
        family,
        family_name,
        truncation,
        truncated,
        truncation_error,
        shift_base,
    })
}

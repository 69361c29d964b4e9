//! Time-indexed chain models.
//!
//! A [`ChainModel`] is a window of integer times `[start, end]` together with
//! one stochastic matrix per step `n -> n+1`. State-space sizes may differ
//! from time to time, so the matrix at `n` is `N_n x N_{n+1}` and consecutive
//! matrices must chain: columns at `n` equal rows at `n+1`.
//!
//! State indices are 1-based in all inputs, outputs and reports, matching the
//! usual `{1, ..., N}` labelling; internally everything is 0-based.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{Error, Result};

/// Discrete time index. Negative values address the past (chains indexed by
/// the nonpositive integers); nonnegative values address forward time.
pub type TimeIndex = i64;

/// Default tolerance on row sums of stochastic matrices and distributions.
pub const DEFAULT_TOL_STOCHASTIC: f64 = 1e-12;

/// Total variation distance between two probability vectors: half the L1
/// distance. Panics if the lengths differ (callers compare same-space
/// distributions only).
pub fn total_variation(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    assert_eq!(a.len(), b.len(), "total variation needs equal lengths");
    0.5 * a
        .iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .sum::<f64>()
}

/// A probability vector attached to a point in time.
#[derive(Clone, Debug, PartialEq)]
pub struct Distribution {
    time: TimeIndex,
    probs: Array1<f64>,
}

impl Distribution {
    /// Builds a distribution, checking nonnegativity and that the entries sum
    /// to 1 within `tol`.
    pub fn new(time: TimeIndex, probs: Vec<f64>, tol: f64) -> Result<Self> {
        let probs = Array1::from_vec(probs);
        if let Some((i, &v)) = probs
            .iter()
            .enumerate()
            .find(|(_, &v)| v < 0.0 || !v.is_finite())
        {
            return Err(Error::InvalidEvent {
                reason: format!(
                    "probability {v} at state {} is negative or non-finite",
                    i + 1
                ),
            });
        }
        let sum: f64 = probs.sum();
        if (sum - 1.0).abs() > tol {
            return Err(Error::InvalidEvent {
                reason: format!("probabilities sum to {sum}, expected 1 within {tol:.1e}"),
            });
        }
        Ok(Self { time, probs })
    }

    /// Point mass at the 1-based state `i` on a space of `n` states.
    pub fn delta(i: usize, n: usize, time: TimeIndex) -> Result<Self> {
        if i == 0 || i > n {
            return Err(Error::IndexOutOfRange { index: i, len: n });
        }
        let mut probs = Array1::zeros(n);
        probs[i - 1] = 1.0;
        Ok(Self { time, probs })
    }

    /// Wraps an already-normalized vector without checking the invariants.
    /// Used where the entries are convex combinations of validated inputs.
    pub(crate) fn from_parts(time: TimeIndex, probs: Array1<f64>) -> Self {
        Self { time, probs }
    }

    /// Wraps raw values without validating them, so that ingestion can defer
    /// defect reporting to [`ChainModel::validate`].
    pub fn from_raw(time: TimeIndex, probs: Vec<f64>) -> Self {
        Self {
            time,
            probs: Array1::from_vec(probs),
        }
    }

    pub fn time(&self) -> TimeIndex {
        self.time
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn probs(&self) -> ArrayView1<'_, f64> {
        self.probs.view()
    }

    /// Probability of the 1-based state `i`.
    pub fn prob(&self, i: usize) -> f64 {
        self.probs[i - 1]
    }

    /// Total variation distance to another distribution on the same space.
    pub fn tv_distance(&self, other: &Self) -> f64 {
        total_variation(self.probs.view(), other.probs.view())
    }
}

/// A row-stochastic transition matrix for one time step.
///
/// The matrix at time `n` has one row per state at time `n` and one column
/// per state at time `n+1`.
#[derive(Clone, Debug, PartialEq)]
pub struct StochasticMatrix {
    from_time: TimeIndex,
    entries: Array2<f64>,
}

impl StochasticMatrix {
    /// Builds a matrix, checking nonnegativity and unit row sums within `tol`.
    pub fn new(from_time: TimeIndex, entries: Array2<f64>, tol: f64) -> Result<Self> {
        let m = Self::new_unchecked(from_time, entries);
        match m.check(tol) {
            Some(violation) => Err(Error::InvalidEvent {
                reason: violation.to_string(),
            }),
            None => Ok(m),
        }
    }

    /// Builds a matrix from nested row vectors.
    pub fn from_rows(from_time: TimeIndex, rows: &[Vec<f64>], tol: f64) -> Result<Self> {
        let m = Self::from_rows_unchecked(from_time, rows)?;
        match m.check(tol) {
            Some(violation) => Err(Error::InvalidEvent {
                reason: violation.to_string(),
            }),
            None => Ok(m),
        }
    }

    /// Wraps entries without validating the stochastic invariants. Used by
    /// ingestion paths that report violations instead of failing fast.
    pub fn new_unchecked(from_time: TimeIndex, entries: Array2<f64>) -> Self {
        Self { from_time, entries }
    }

    /// Like [`Self::new_unchecked`] but from nested rows; still errors when
    /// the rows are ragged, since no matrix shape exists at all then.
    pub fn from_rows_unchecked(from_time: TimeIndex, rows: &[Vec<f64>]) -> Result<Self> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(Error::DimensionMismatch {
                what: "matrix row length",
                expected: ncols,
                got: rows.iter().map(Vec::len).find(|&l| l != ncols).unwrap_or(0),
            });
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let entries = Array2::from_shape_vec((nrows, ncols), flat).expect("shape checked above");
        Ok(Self { from_time, entries })
    }

    fn check(&self, tol: f64) -> Option<Violation> {
        for (i, row) in self.entries.rows().into_iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if v < 0.0 || !v.is_finite() {
                    return Some(Violation::NegativeEntry {
                        time: self.from_time,
                        row: i + 1,
                        col: j + 1,
                        value: v,
                    });
                }
            }
            let defect = (row.sum() - 1.0).abs();
            if defect > tol {
                return Some(Violation::RowSumDefect {
                    time: self.from_time,
                    row: i + 1,
                    defect,
                });
            }
        }
        None
    }

    pub fn from_time(&self) -> TimeIndex {
        self.from_time
    }

    pub fn rows(&self) -> usize {
        self.entries.nrows()
    }

    pub fn cols(&self) -> usize {
        self.entries.ncols()
    }

    pub fn entries(&self) -> &Array2<f64> {
        &self.entries
    }

    /// Row of the 1-based state `i`.
    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.entries.row(i - 1)
    }

    /// Returns a copy with every row rescaled to unit sum. Rows are never
    /// renormalized implicitly anywhere else; a zero row is an error.
    pub fn renormalized(&self) -> Result<Self> {
        let mut entries = self.entries.clone();
        for (i, mut row) in entries.rows_mut().into_iter().enumerate() {
            let sum = row.sum();
            if sum <= 0.0 {
                return Err(Error::EmptyTruncatedRow {
                    time: self.from_time,
                    state: i + 1,
                });
            }
            row.mapv_inplace(|v| v / sum);
        }
        Ok(Self {
            from_time: self.from_time,
            entries,
        })
    }
}

/// One defect found by [`ChainModel::validate`].
#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    /// The window start exceeds its end.
    BadWindow { start: TimeIndex, end: TimeIndex },
    /// A matrix entry is negative or non-finite.
    NegativeEntry {
        time: TimeIndex,
        row: usize,
        col: usize,
        value: f64,
    },
    /// A matrix row sum misses 1 by `defect`.
    RowSumDefect {
        time: TimeIndex,
        row: usize,
        defect: f64,
    },
    /// Columns at `time - 1` and rows at `time` disagree.
    DimensionChain {
        time: TimeIndex,
        cols_before: usize,
        rows_at: usize,
    },
    /// The window requires a matrix at `time` but none is stored.
    MissingMatrix { time: TimeIndex },
    /// A matrix is stored at a time outside `[start, end - 1]`.
    UnexpectedMatrix { time: TimeIndex },
    /// The initial distribution sits at a time outside the window.
    InitialOutOfWindow { time: TimeIndex },
    /// The initial distribution length disagrees with the state count.
    InitialDimension {
        time: TimeIndex,
        expected: usize,
        got: usize,
    },
    /// An initial-distribution entry is negative or non-finite.
    NegativeProbability {
        time: TimeIndex,
        state: usize,
        value: f64,
    },
    /// The initial distribution sums to `1 + defect` in magnitude.
    DistributionSumDefect { time: TimeIndex, defect: f64 },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::BadWindow { start, end } => {
                write!(f, "window start {start} exceeds end {end}")
            }
            Self::NegativeEntry {
                time,
                row,
                col,
                value,
            } => write!(
                f,
                "matrix at time {time}: entry ({row},{col}) = {value} is negative or non-finite"
            ),
            Self::RowSumDefect { time, row, defect } => write!(
                f,
                "matrix at time {time}: row {row} sum misses 1 by {defect:.6e}"
            ),
            Self::DimensionChain {
                time,
                cols_before,
                rows_at,
            } => write!(
                f,
                "dimension chaining broken at time {time}: {cols_before} columns feed {rows_at} rows"
            ),
            Self::MissingMatrix { time } => write!(f, "missing transition matrix at time {time}"),
            Self::UnexpectedMatrix { time } => {
                write!(f, "matrix at time {time} lies outside the window")
            }
            Self::InitialOutOfWindow { time } => {
                write!(f, "initial distribution at time {time} lies outside the window")
            }
            Self::InitialDimension {
                time,
                expected,
                got,
            } => write!(
                f,
                "initial distribution at time {time} has length {got}, state space has {expected}"
            ),
            Self::NegativeProbability { time, state, value } => write!(
                f,
                "initial distribution at time {time}: state {state} carries {value}"
            ),
            Self::DistributionSumDefect { time, defect } => write!(
                f,
                "initial distribution at time {time} sums off 1 by {defect:.6e}"
            ),
        }
    }
}

/// A time window with one transition matrix per step.
///
/// Construction is permissive: any collection of matrices is accepted and
/// [`ChainModel::validate`] reports every defect. Analyses assume a valid
/// model and return [`Error`]s when they hit inconsistent shapes.
#[derive(Clone, Debug)]
pub struct ChainModel {
    start: TimeIndex,
    end: TimeIndex,
    matrices: BTreeMap<TimeIndex, StochasticMatrix>,
    initial: Option<Distribution>,
    tol_stochastic: f64,
}

impl ChainModel {
    pub fn new(
        window: (TimeIndex, TimeIndex),
        matrices: Vec<StochasticMatrix>,
        initial: Option<Distribution>,
        tol_stochastic: f64,
    ) -> Self {
        let map = matrices
            .into_iter()
            .map(|m| (m.from_time(), m))
            .collect::<BTreeMap<_, _>>();
        Self {
            start: window.0,
            end: window.1,
            matrices: map,
            initial,
            tol_stochastic,
        }
    }

    /// Model with the same step matrix at every time of the window.
    pub fn homogeneous(
        window: (TimeIndex, TimeIndex),
        step: Array2<f64>,
        initial: Option<Distribution>,
        tol_stochastic: f64,
    ) -> Self {
        Self::from_step_fn(window, initial, tol_stochastic, |_| step.clone())
    }

    /// Model whose step matrix at time `n` is `f(n)`.
    pub fn from_step_fn(
        window: (TimeIndex, TimeIndex),
        initial: Option<Distribution>,
        tol_stochastic: f64,
        f: impl Fn(TimeIndex) -> Array2<f64>,
    ) -> Self {
        let matrices = (window.0..window.1)
            .map(|n| StochasticMatrix::new_unchecked(n, f(n)))
            .collect();
        Self::new(window, matrices, initial, tol_stochastic)
    }

    pub fn window(&self) -> (TimeIndex, TimeIndex) {
        (self.start, self.end)
    }

    pub fn start(&self) -> TimeIndex {
        self.start
    }

    pub fn end(&self) -> TimeIndex {
        self.end
    }

    pub fn tol_stochastic(&self) -> f64 {
        self.tol_stochastic
    }

    pub fn initial(&self) -> Option<&Distribution> {
        self.initial.as_ref()
    }

    pub fn set_initial(&mut self, initial: Option<Distribution>) {
        self.initial = initial;
    }

    /// The stored step matrix mapping time `n` to `n + 1`.
    pub fn matrix_at(&self, n: TimeIndex) -> Result<&StochasticMatrix> {
        if n < self.start || n >= self.end {
            return Err(Error::OutOfWindow {
                time: n,
                start: self.start,
                end: self.end,
            });
        }
        self.matrices
            .get(&n)
            .ok_or(Error::MissingMatrix { time: n })
    }

    /// Number of states at time `t`, derived from the adjacent matrices.
    pub fn dim_at(&self, t: TimeIndex) -> Result<usize> {
        if t < self.start || t > self.end {
            return Err(Error::OutOfWindow {
                time: t,
                start: self.start,
                end: self.end,
            });
        }
        if t < self.end {
            return Ok(self.matrix_at(t)?.rows());
        }
        if t > self.start {
            return Ok(self.matrix_at(t - 1)?.cols());
        }
        // Empty window: no matrix pins the dimension.
        self.initial
            .as_ref()
            .map(Distribution::len)
            .ok_or(Error::MissingMatrix { time: t })
    }

    /// Times carrying matrices, in increasing order.
    pub fn step_times(&self) -> impl Iterator<Item = TimeIndex> + '_ {
        self.matrices.keys().copied()
    }

    /// Checks every stored invariant and returns the full list of defects.
    /// An empty report means the model is valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.start > self.end {
            out.push(Violation::BadWindow {
                start: self.start,
                end: self.end,
            });
            return out;
        }
        for &time in self.matrices.keys() {
            if time < self.start || time >= self.end {
                out.push(Violation::UnexpectedMatrix { time });
            }
        }
        for n in self.start..self.end {
            match self.matrices.get(&n) {
                None => out.push(Violation::MissingMatrix { time: n }),
                Some(m) => {
                    if let Some(v) = m.check(self.tol_stochastic) {
                        out.push(v);
                    }
                    if let Some(next) = self.matrices.get(&(n + 1)) {
                        if m.cols() != next.rows() {
                            out.push(Violation::DimensionChain {
                                time: n + 1,
                                cols_before: m.cols(),
                                rows_at: next.rows(),
                            });
                        }
                    }
                }
            }
        }
        if let Some(initial) = &self.initial {
            let t = initial.time();
            if t < self.start || t > self.end {
                out.push(Violation::InitialOutOfWindow { time: t });
            } else if let Ok(expected) = self.dim_at(t) {
                if expected != initial.len() {
                    out.push(Violation::InitialDimension {
                        time: t,
                        expected,
                        got: initial.len(),
                    });
                }
            }
            for (i, &v) in initial.probs().iter().enumerate() {
                if v < 0.0 || !v.is_finite() {
                    out.push(Violation::NegativeProbability {
                        time: t,
                        state: i + 1,
                        value: v,
                    });
                }
            }
            let defect = (initial.probs().sum() - 1.0).abs();
            if defect > self.tol_stochastic {
                out.push(Violation::DistributionSumDefect { time: t, defect });
            }
        }
        out
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_empty()
    }
}

/// Free-function form of [`ChainModel::validate`].
pub fn validate_chain(model: &ChainModel) -> Vec<Violation> {
    model.validate()
}

/// One chain step: `result(j) = sum_i m(i) p(i, j)` at time `m.time() + 1`.
///
/// The output is a convex combination of the matrix rows, so it satisfies the
/// distribution invariants whenever the inputs satisfy theirs; it is not
/// re-validated.
pub fn push_forward(m: &Distribution, p: &StochasticMatrix) -> Result<Distribution> {
    if m.time() != p.from_time() {
        return Err(Error::TimeMismatch {
            expected: p.from_time(),
            got: m.time(),
        });
    }
    if m.len() != p.rows() {
        return Err(Error::DimensionMismatch {
            what: "push_forward input",
            expected: p.rows(),
            got: m.len(),
        });
    }
    let probs = m.probs().dot(p.entries());
    Ok(Distribution::from_parts(m.time() + 1, probs))
}

/// Point mass at the 1-based state `i`; alias of [`Distribution::delta`]
/// with the argument order used throughout the analyses.
pub fn delta_distribution(i: usize, n: usize, time: TimeIndex) -> Result<Distribution> {
    Distribution::delta(i, n, time)
}

//! Multistep products, reverse-time kernels, and homogeneity diagnostics.
//!
//! Products are accumulated left to right in plain f64; the entries are
//! probabilities and windows are short, so no log-space handling is needed.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::model::{push_forward, total_variation, ChainModel, Distribution, TimeIndex};

/// Tolerance used when checking that supplied marginals actually follow the
/// forward kernels.
pub const MARGINAL_CONSISTENCY_TOL: f64 = 1e-9;

/// The ordered product `P_s P_{s+1} ... P_{t-1}`, an `N_s x N_t` matrix.
#[derive(Clone, Debug)]
pub struct ProductMatrix {
    s: TimeIndex,
    t: TimeIndex,
    matrix: Array2<f64>,
}

impl ProductMatrix {
    pub fn s(&self) -> TimeIndex {
        self.s
    }

    pub fn t(&self) -> TimeIndex {
        self.t
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.ncols()
    }
}

/// Ordered product of the step matrices over `[s, t)`.
pub fn product(model: &ChainModel, s: TimeIndex, t: TimeIndex) -> Result<ProductMatrix> {
    if s >= t {
        return Err(Error::EmptyRange { s, t });
    }
    let mut acc = model.matrix_at(s)?.entries().clone();
    for n in (s + 1)..t {
        let step = model.matrix_at(n)?;
        if acc.ncols() != step.rows() {
            return Err(Error::DimensionMismatch {
                what: "product chaining",
                expected: acc.ncols(),
                got: step.rows(),
            });
        }
        acc = acc.dot(step.entries());
    }
    Ok(ProductMatrix { s, t, matrix: acc })
}

/// Dobrushin contraction coefficient: half the maximum L1 distance between
/// any two rows. Submultiplicative under products and an upper bound on the
/// diameter of the row hull.
pub fn dobrushin_coefficient(matrix: ArrayView2<'_, f64>) -> f64 {
    let n = matrix.nrows();
    let mut delta = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            let tv = total_variation(matrix.row(i), matrix.row(j));
            delta = delta.max(tv);
        }
    }
    delta
}

/// Bayes reversal of one step: row `j` holds `P(Z_n = . | Z_{n+1} = j)`.
///
/// Rows conditioning on a state with zero marginal mass are undefined; they
/// are flagged in `supported` and left as zeros rather than filled with an
/// arbitrary convention.
#[derive(Clone, Debug)]
pub struct ReverseKernel {
    n: TimeIndex,
    matrix: Array2<f64>,
    supported: Vec<bool>,
}

impl ReverseKernel {
    pub fn n(&self) -> TimeIndex {
        self.n
    }

    /// `N_{n+1} x N_n` matrix; meaningful only on supported rows.
    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    /// One flag per row (state at time `n + 1`); `false` marks a row whose
    /// conditioning state has zero probability.
    pub fn supported(&self) -> &[bool] {
        &self.supported
    }
}

fn marginal_at(marginals: &[Distribution], t: TimeIndex) -> Result<&Distribution> {
    marginals
        .iter()
        .find(|m| m.time() == t)
        .ok_or(Error::MissingMatrix { time: t })
}

/// Marginal sequence generated from `initial` by pushing forward to the end
/// of the window.
pub fn marginals_from(model: &ChainModel, initial: &Distribution) -> Result<Vec<Distribution>> {
    let (start, end) = model.window();
    if initial.time() < start || initial.time() > end {
        return Err(Error::OutOfWindow {
            time: initial.time(),
            start,
            end,
        });
    }
    let mut out = vec![initial.clone()];
    for n in initial.time()..end {
        let next = push_forward(out.last().expect("nonempty"), model.matrix_at(n)?)?;
        out.push(next);
    }
    Ok(out)
}

/// Reverse kernel at time `n` built from the forward kernel and marginals:
/// entry `(j, i) = p_n(i, j) m_n(i) / m_{n+1}(j)` where `m_{n+1}(j) > 0`.
///
/// The marginals must contain times `n` and `n + 1` and be consistent with
/// the forward kernel within [`MARGINAL_CONSISTENCY_TOL`].
pub fn reverse_kernel(
    model: &ChainModel,
    marginals: &[Distribution],
    n: TimeIndex,
) -> Result<ReverseKernel> {
    let step = model.matrix_at(n)?;
    let m_n = marginal_at(marginals, n)?;
    let m_next = marginal_at(marginals, n + 1)?;
    if m_n.len() != step.rows() {
        return Err(Error::DimensionMismatch {
            what: "marginal at n",
            expected: step.rows(),
            got: m_n.len(),
        });
    }
    if m_next.len() != step.cols() {
        return Err(Error::DimensionMismatch {
            what: "marginal at n+1",
            expected: step.cols(),
            got: m_next.len(),
        });
    }
    let pushed = push_forward(m_n, step)?;
    let residual = total_variation(pushed.probs(), m_next.probs());
    if residual > MARGINAL_CONSISTENCY_TOL {
        return Err(Error::InconsistentMarginals { time: n, residual });
    }

    let mut matrix = Array2::zeros((step.cols(), step.rows()));
    let mut supported = vec![false; step.cols()];
    for j in 0..step.cols() {
        let mass = m_next.probs()[j];
        if mass > 0.0 {
            supported[j] = true;
            for i in 0..step.rows() {
                matrix[[j, i]] = step.entries()[[i, j]] * m_n.probs()[i] / mass;
            }
        }
    }
    Ok(ReverseKernel {
        n,
        matrix,
        supported,
    })
}

/// Outcome of [`reversal_diagnostics`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ReversalReport {
    /// All forward kernels equal across the window.
    pub is_homogeneous: bool,
    /// Marginals generated from the initial distribution are constant.
    pub is_stationary: bool,
    /// All reverse kernels equal across the window.
    pub reverse_is_homogeneous: bool,
    /// Homogeneous, stationary, and the reverse kernel equals the forward
    /// kernel (detailed balance).
    pub is_reversible: bool,
}

fn max_abs_diff(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Maximum absolute difference between two reverse kernels on rows supported
/// in both; `None` when the support masks disagree or shapes differ.
pub fn reverse_kernel_distance(a: &ReverseKernel, b: &ReverseKernel) -> Option<f64> {
    if a.matrix.shape() != b.matrix.shape() || a.supported != b.supported {
        return None;
    }
    let mut d = 0.0_f64;
    for (j, &sup) in a.supported.iter().enumerate() {
        if !sup {
            continue;
        }
        for i in 0..a.matrix.ncols() {
            d = d.max((a.matrix[[j, i]] - b.matrix[[j, i]]).abs());
        }
    }
    Some(d)
}

/// Pairwise max-abs comparison of kernels and marginals across the window.
///
/// Homogeneity comparisons require equal dimensions at all times; in a
/// window with varying state counts every flag except stationarity of a
/// constant marginal is false by definition.
pub fn reversal_diagnostics(
    model: &ChainModel,
    initial: &Distribution,
    tol: f64,
) -> Result<ReversalReport> {
    let marginals = marginals_from(model, initial)?;
    let times: Vec<TimeIndex> = (initial.time()..model.end()).collect();
    if times.is_empty() {
        return Err(Error::EmptyRange {
            s: initial.time(),
            t: model.end(),
        });
    }

    let first = model.matrix_at(times[0])?;
    let mut is_homogeneous = true;
    for &n in &times[1..] {
        let m = model.matrix_at(n)?;
        if m.rows() != first.rows() || m.cols() != first.cols() || m.rows() != m.cols() {
            is_homogeneous = false;
            break;
        }
        if max_abs_diff(first.entries().view(), m.entries().view()) > tol {
            is_homogeneous = false;
            break;
        }
    }
    if first.rows() != first.cols() {
        is_homogeneous = false;
    }

    let mut is_stationary = true;
    for pair in marginals.windows(2) {
        if pair[0].len() != pair[1].len() || total_variation(pair[0].probs(), pair[1].probs()) > tol
        {
            is_stationary = false;
            break;
        }
    }

    let reversed: Vec<ReverseKernel> = times
        .iter()
        .map(|&n| reverse_kernel(model, &marginals, n))
        .collect::<Result<_>>()?;
    let mut reverse_is_homogeneous = true;
    for k in &reversed[1..] {
        match reverse_kernel_distance(&reversed[0], k) {
            Some(d) if d <= tol => {}
            _ => {
                reverse_is_homogeneous = false;
                break;
            }
        }
    }

    let mut is_reversible = is_homogeneous && is_stationary;
    if is_reversible {
        for (idx, &n) in times.iter().enumerate() {
            let forward = model.matrix_at(n)?;
            let rk = &reversed[idx];
            if forward.rows() != rk.matrix.nrows() {
                is_reversible = false;
                break;
            }
            let mut d = 0.0_f64;
            for (j, &sup) in rk.supported.iter().enumerate() {
                if !sup {
                    continue;
                }
                for i in 0..forward.cols() {
                    d = d.max((rk.matrix[[j, i]] - forward.entries()[[j, i]]).abs());
                }
            }
            if d > tol {
                is_reversible = false;
                break;
            }
        }
    }

    Ok(ReversalReport {
        is_homogeneous,
        is_stationary,
        reverse_is_homogeneous,
        is_reversible,
    })
}

//! Tail-event machinery for forward-time chains.
//!
//! The carrier of the zero-one law is the harmonic sequence
//! `h_n(i) = P(A | Z_n = i)`, computed by the backward recursion
//! `h_n = P_n h_{n+1}` from a terminal condition. Splitting each state space
//! into bands by `h_n(i)` and weighing the bands with the forward marginals
//! gives the exact probabilities whose limits the law describes: the middle
//! band drains while the outer bands absorb `P(A)` and `1 - P(A)`.
//!
//! Two constructive event classes are supported: absorption in a set of
//! absorbing target states, and a terminal seed of conditional probabilities
//! at a fixed horizon. A terminal seed only represents an honest tail event
//! if the recursion has stabilized, which is certified by recomputing with a
//! shifted horizon and reporting the change.

use ndarray::Array1;

use crate::error::{Error, Result};
use crate::model::{ChainModel, Distribution, TimeIndex};

/// Horizon shift used to certify stabilization of the harmonic recursion.
pub const STABILIZATION_LOOKBACK: i64 = 10;

/// A representable tail event.
#[derive(Clone, Debug, PartialEq)]
pub enum TailEventSpec {
    /// Eventual absorption in one of the 1-based `targets`, each of which
    /// must be absorbing under every matrix in the window.
    Absorption { targets: Vec<usize> },
    /// Conditional probabilities `values` prescribed at `horizon`.
    TerminalSeed {
        horizon: TimeIndex,
        values: Vec<f64>,
    },
}

/// The vectors `h_n` over `[start, horizon]`, with `h_n = P_n h_{n+1}`.
#[derive(Clone, Debug)]
pub struct HarmonicSequence {
    start: TimeIndex,
    horizon: TimeIndex,
    values: Vec<Array1<f64>>,
    stabilization_residual: Option<f64>,
}

impl HarmonicSequence {
    pub fn start(&self) -> TimeIndex {
        self.start
    }

    pub fn horizon(&self) -> TimeIndex {
        self.horizon
    }

    /// `h_n` for `start <= n <= horizon`.
    pub fn value_at(&self, n: TimeIndex) -> &Array1<f64> {
        &self.values[(n - self.start) as usize]
    }

    pub fn times(&self) -> impl Iterator<Item = TimeIndex> + '_ {
        self.start..=self.horizon
    }

    /// Sup-norm change of the left-edge vector when the recursion is re-run
    /// from a horizon shifted by up to [`STABILIZATION_LOOKBACK`] steps.
    /// `None` when the window is too short to compare.
    pub fn stabilization_residual(&self) -> Option<f64> {
        self.stabilization_residual
    }
}

fn check_absorbing_targets(model: &ChainModel, targets: &[usize]) -> Result<()> {
    let (start, end) = model.window();
    let tol = model.tol_stochastic();
    for &i in targets {
        if i == 0 {
            return Err(Error::IndexOutOfRange { index: i, len: 0 });
        }
        for n in start..end {
            let m = model.matrix_at(n)?;
            if i > m.rows() || i > m.cols() {
                return Err(Error::InvalidEvent {
                    reason: format!(
                        "target state {i} does not exist at time {n} ({}x{} step)",
                        m.rows(),
                        m.cols()
                    ),
                });
            }
            let diag = m.entries()[[i - 1, i - 1]];
            if (diag - 1.0).abs() > tol {
                return Err(Error::InvalidEvent {
                    reason: format!(
                        "target state {i} is not absorbing at time {n}: p({i},{i}) = {diag}"
                    ),
                });
            }
        }
    }
    Ok(())
}

fn indicator_seed(dim: usize, targets: &[usize]) -> Array1<f64> {
    let mut seed = Array1::zeros(dim);
    for &i in targets {
        if i >= 1 && i <= dim {
            seed[i - 1] = 1.0;
        }
    }
    seed
}

/// Backward recursion from `horizon` down to the window start.
fn run_backward(
    model: &ChainModel,
    horizon: TimeIndex,
    seed: Array1<f64>,
) -> Result<Vec<Array1<f64>>> {
    let start = model.start();
    let mut values = vec![seed];
    let mut n = horizon - 1;
    while n >= start {
        let step = model.matrix_at(n)?;
        let next = values.last().expect("nonempty");
        if step.cols() != next.len() {
            return Err(Error::DimensionMismatch {
                what: "harmonic recursion",
                expected: step.cols(),
                got: next.len(),
            });
        }
        values.push(step.entries().dot(next));
        n -= 1;
    }
    values.reverse();
    Ok(values)
}

/// Computes `h_n(i) = P(A | Z_n = i)` for the event over the model window.
///
/// For absorption events the terminal condition is the target indicator at
/// the window end; for terminal seeds it is the given vector at its horizon.
/// The recursion propagates exactly; the stabilization residual reports how
/// much the left edge would move under a shifted horizon.
pub fn harmonic_backward(model: &ChainModel, event: &TailEventSpec) -> Result<HarmonicSequence> {
    let (start, end) = model.window();
    match event {
        TailEventSpec::Absorption { targets } => {
            check_absorbing_targets(model, targets)?;
            let dim_end = model.dim_at(end)?;
            for &i in targets {
                if i == 0 || i > dim_end {
                    return Err(Error::IndexOutOfRange {
                        index: i,
                        len: dim_end,
                    });
                }
            }
            let values = run_backward(model, end, indicator_seed(dim_end, targets))?;
            let mut residual = None;
            let lookback = STABILIZATION_LOOKBACK.min(end - start);
            if lookback >= 1 {
                let alt_horizon = end - lookback;
                let alt_dim = model.dim_at(alt_horizon)?;
                if targets.iter().all(|&i| i <= alt_dim) {
                    let alt = run_backward(model, alt_horizon, indicator_seed(alt_dim, targets))?;
                    residual = Some(
                        values[0]
                            .iter()
                            .zip(alt[0].iter())
                            .map(|(a, b)| (a - b).abs())
                            .fold(0.0, f64::max),
                    );
                }
            }
            Ok(HarmonicSequence {
                start,
                horizon: end,
                values,
                stabilization_residual: residual,
            })
        }
        TailEventSpec::TerminalSeed { horizon, values } => {
            if *horizon < start || *horizon > end {
                return Err(Error::OutOfWindow {
                    time: *horizon,
                    start,
                    end,
                });
            }
            let dim = model.dim_at(*horizon)?;
            if values.len() != dim {
                return Err(Error::DimensionMismatch {
                    what: "terminal seed",
                    expected: dim,
                    got: values.len(),
                });
            }
            if let Some(&bad) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::InvalidEvent {
                    reason: format!("seed value {bad} outside [0, 1]"),
                });
            }
            let seed = Array1::from_vec(values.clone());
            let computed = run_backward(model, *horizon, seed.clone())?;
            // Re-seed at a shifted horizon with matching dimension to measure
            // horizon sensitivity.
            let mut residual = None;
            for d in (1..=STABILIZATION_LOOKBACK).rev() {
                let alt_horizon = *horizon - d;
                if alt_horizon < start {
                    continue;
                }
                if model.dim_at(alt_horizon)? != dim {
                    continue;
                }
                let alt = run_backward(model, alt_horizon, seed.clone())?;
                residual = Some(
                    computed[0]
                        .iter()
                        .zip(alt[0].iter())
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0, f64::max),
                );
                break;
            }
            Ok(HarmonicSequence {
                start,
                horizon: *horizon,
                values: computed,
                stabilization_residual: residual,
            })
        }
    }
}

/// Per-time split of the state space by conditional probability.
///
/// Convention: `low = [0, p)`, `mid = [p, q]`, `high = (q, 1]`. The bands
/// partition every state space exactly, so the three probabilities always
/// sum to one.
#[derive(Clone, Debug)]
pub struct BandPartition {
    p: f64,
    q: f64,
    start: TimeIndex,
    low: Vec<Vec<usize>>,
    mid: Vec<Vec<usize>>,
    high: Vec<Vec<usize>>,
}

impl BandPartition {
    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn start(&self) -> TimeIndex {
        self.start
    }

    pub fn len(&self) -> usize {
        self.low.len()
    }

    pub fn is_empty(&self) -> bool {
        self.low.is_empty()
    }

    /// `(low, mid, high)` 1-based index sets at time `n`.
    pub fn bands_at(&self, n: TimeIndex) -> (&[usize], &[usize], &[usize]) {
        let idx = (n - self.start) as usize;
        (&self.low[idx], &self.mid[idx], &self.high[idx])
    }
}

/// Classifies one conditional-probability value by band.
fn band_of(h: f64, p: f64, q: f64) -> u8 {
    if h < p {
        0
    } else if h <= q {
        1
    } else {
        2
    }
}

/// Splits every state space of the harmonic sequence into the three bands.
pub fn band_sets(h: &HarmonicSequence, p: f64, q: f64) -> Result<BandPartition> {
    if !(0.0 < p && p < q && q < 1.0) {
        return Err(Error::InvalidBands { p, q });
    }
    let mut low = Vec::new();
    let mut mid = Vec::new();
    let mut high = Vec::new();
    for n in h.times() {
        let hv = h.value_at(n);
        let mut l = Vec::new();
        let mut m = Vec::new();
        let mut hi = Vec::new();
        for (i, &v) in hv.iter().enumerate() {
            match band_of(v, p, q) {
                0 => l.push(i + 1),
                1 => m.push(i + 1),
                _ => hi.push(i + 1),
            }
        }
        low.push(l);
        mid.push(m);
        high.push(hi);
    }
    Ok(BandPartition {
        p,
        q,
        start: h.start(),
        low,
        mid,
        high,
    })
}

/// Exact band weights at one time.
#[derive(Clone, Copy, Debug)]
pub struct BandProbRow {
    pub time: TimeIndex,
    pub p_low: f64,
    pub p_mid: f64,
    pub p_high: f64,
    /// `|sum_i m_n(i) h_n(i) - P(A)|`; the sum is a martingale, so this is
    /// floating noise only.
    pub conservation_residual: f64,
}

/// Band probabilities over `[initial.time, horizon]` plus the event weight.
#[derive(Clone, Debug)]
pub struct BandProbabilities {
    pub rows: Vec<BandProbRow>,
    /// `P(A) = sum_i m(i) h(i)` at the initial time.
    pub p_event: f64,
}

/// Weighs the bands with the forward marginals.
///
/// `p_low` and `p_high` are direct sums; `p_mid` is evaluated as
/// `1 - (p_low + p_high)` so that `(p_low + p_high) + p_mid == 1` holds
/// exactly in floating point at every time.
pub fn band_probabilities(
    model: &ChainModel,
    initial: &Distribution,
    h: &HarmonicSequence,
    bands: &BandPartition,
) -> Result<BandProbabilities> {
    if bands.start() != h.start() || bands.len() != (h.horizon() - h.start() + 1) as usize {
        return Err(Error::InvalidSchedule {
            reason: "band partition does not match the harmonic sequence",
        });
    }
    let t0 = initial.time();
    if t0 < h.start() || t0 > h.horizon() {
        return Err(Error::OutOfWindow {
            time: t0,
            start: h.start(),
            end: h.horizon(),
        });
    }
    if initial.len() != h.value_at(t0).len() {
        return Err(Error::DimensionMismatch {
            what: "initial distribution",
            expected: h.value_at(t0).len(),
            got: initial.len(),
        });
    }
    let p_event = initial.probs().dot(h.value_at(t0));
    let mut rows = Vec::new();
    let mut m = initial.clone();
    for n in t0..=h.horizon() {
        if n > t0 {
            m = crate::model::push_forward(&m, model.matrix_at(n - 1)?)?;
        }
        let (low, _, high) = bands.bands_at(n);
        let p_low: f64 = low.iter().map(|&i| m.prob(i)).sum();
        let p_high: f64 = high.iter().map(|&i| m.prob(i)).sum();
        let p_mid = 1.0 - (p_low + p_high);
        let conserved = m.probs().dot(h.value_at(n));
        rows.push(BandProbRow {
            time: n,
            p_low,
            p_mid,
            p_high,
            conservation_residual: (conserved - p_event).abs(),
        });
    }
    Ok(BandProbabilities { rows, p_event })
}

/// Rectangular cylinder event: at each time of `[k, k + allowed.len() - 1]`
/// the chain must sit inside the corresponding allowed set.
#[derive(Clone, Debug)]
pub struct CylinderEvent {
    pub k: TimeIndex,
    /// 1-based allowed states per time, starting at `k`.
    pub allowed: Vec<Vec<usize>>,
}

impl CylinderEvent {
    pub fn n(&self) -> TimeIndex {
        self.k + self.allowed.len() as i64 - 1
    }
}

/// Conditional weights of a past event given the present state.
#[derive(Clone, Debug)]
pub struct BackwardBandReport {
    pub k: TimeIndex,
    pub n: TimeIndex,
    /// `P(A_kn | Z_n = i)` per state; `None` where the marginal vanishes and
    /// the conditional is undefined.
    pub conditionals: Vec<Option<f64>>,
    /// 1-based states with undefined conditionals.
    pub masked: Vec<usize>,
    pub low: Vec<usize>,
    pub mid: Vec<usize>,
    pub high: Vec<usize>,
    pub p_low: f64,
    pub p_mid: f64,
    /// `P(Z_n in S_kn(q, 1))`.
    pub p_high: f64,
    /// `P(A_kn)`: total mass that survived the cylinder.
    pub p_event: f64,
    /// No trajectory can satisfy the cylinder (for instance an allowed set
    /// is empty); all conditionals are zero.
    pub impossible: bool,
}

/// Computes `P(A_kn | Z_n = i)` for a rectangular cylinder by constrained
/// forward propagation: mass outside an allowed set is dropped at each time,
/// and the surviving mass at `n` is divided by the unconstrained marginal.
/// Band thresholds follow the [`band_sets`] convention.
pub fn backward_band_sets(
    model: &ChainModel,
    initial: &Distribution,
    cylinder: &CylinderEvent,
    p: f64,
    q: f64,
) -> Result<BackwardBandReport> {
    if !(0.0 < p && p < q && q < 1.0) {
        return Err(Error::InvalidBands { p, q });
    }
    if cylinder.allowed.is_empty() {
        return Err(Error::InvalidSchedule {
            reason: "cylinder needs at least one time",
        });
    }
    let k = cylinder.k;
    let n = cylinder.n();
    let (start, end) = model.window();
    if k < start || n > end {
        return Err(Error::OutOfWindow {
            time: if k < start { k } else { n },
            start,
            end,
        });
    }
    if initial.time() > k {
        return Err(Error::TimeMismatch {
            expected: k,
            got: initial.time(),
        });
    }

    // Unconstrained marginal up to k.
    let mut m = initial.clone();
    for t in initial.time()..k {
        m = crate::model::push_forward(&m, model.matrix_at(t)?)?;
    }

    let mask_for = |t: TimeIndex, dim: usize| -> Result<Vec<bool>> {
        let allowed = &cylinder.allowed[(t - k) as usize];
        let mut mask = vec![false; dim];
        for &i in allowed {
            if i == 0 || i > dim {
                return Err(Error::IndexOutOfRange { index: i, len: dim });
            }
            mask[i - 1] = true;
        }
        Ok(mask)
    };

    // Constrained mass, dropping whatever leaves the allowed sets.
    let dim_k = m.len();
    let mask_k = mask_for(k, dim_k)?;
    let mut alpha: Array1<f64> = Array1::from_iter(
        m.probs()
            .iter()
            .zip(mask_k.iter())
            .map(|(&v, &ok)| if ok { v } else { 0.0 }),
    );
    let mut m_run = m;
    for t in k..n {
        let step = model.matrix_at(t)?;
        alpha = alpha.dot(step.entries());
        let mask = mask_for(t + 1, step.cols())?;
        for (a, ok) in alpha.iter_mut().zip(mask.iter()) {
            if !ok {
                *a = 0.0;
            }
        }
        m_run = crate::model::push_forward(&m_run, step)?;
    }

    let p_event = alpha.sum();
    let impossible = p_event == 0.0;
    let mut conditionals = Vec::with_capacity(alpha.len());
    let mut masked = Vec::new();
    let mut low = Vec::new();
    let mut mid = Vec::new();
    let mut high = Vec::new();
    let mut p_low = 0.0;
    let mut p_high = 0.0;
    for (idx, (&surv, &marg)) in alpha.iter().zip(m_run.probs().iter()).enumerate() {
        let state = idx + 1;
        if marg == 0.0 {
            conditionals.push(None);
            masked.push(state);
            continue;
        }
        let cond = (surv / marg).clamp(0.0, 1.0);
        conditionals.push(Some(cond));
        match band_of(cond, p, q) {
            0 => {
                low.push(state);
                p_low += marg;
            }
            1 => mid.push(state),
            _ => {
                high.push(state);
                p_high += marg;
            }
        }
    }
    let p_mid = 1.0 - (p_low + p_high);
    Ok(BackwardBandReport {
        k,
        n,
        conditionals,
        masked,
        low,
        mid,
        high,
        p_low,
        p_mid,
        p_high,
        p_event,
        impossible,
    })
}

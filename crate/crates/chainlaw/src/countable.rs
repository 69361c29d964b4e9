//! Countable-state kernels via row generators and certified tail envelopes.
//!
//! A countable-state kernel is represented by a family that can materialize
//! any prefix of any row. Tightness of a kernel means a single cutoff
//! `N_eps` keeps `1 - eps` of the mass of *every* row; no finite computation
//! can quantify over all of the naturals, so verdicts here are certificates
//! over a documented probe band, backed by analytic envelopes for the
//! shipped families. The certificate scope is carried in the verdict: pure
//! resampling rows admit an all-states geometric envelope, while families
//! with a drifting component are certified on the probe band only, and the
//! banded walk families are refuted outright by an explicit state whose row
//! puts zero mass below any claimed cutoff.
//!
//! Truncation keeps the first `M` states, renormalizes rows, and carries the
//! leaked mass separately; per-step defects add up to a product-level bound
//! (union bound), which keeps downstream quantities honest.

use ndarray::{Array1, Array2};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::model::{ChainModel, Distribution, StochasticMatrix, TimeIndex};

/// Default probe band for tightness certificates.
pub const DEFAULT_PROBE_BAND: usize = 64;

/// Default cap on the uniform cutoff before a table is declared divergent at
/// grid resolution.
pub const DEFAULT_UNIFORM_CAP: usize = 10_000;

/// `sqrt(e / (2 pi))`, the constant of the Stirling-type bound on the
/// central binomial probability.
pub fn stirling_bound_constant() -> f64 {
    (std::f64::consts::E / (2.0 * std::f64::consts::PI)).sqrt()
}

/// Geometric parameter per time step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BetaSchedule {
    Constant(f64),
    /// `beta_n = 1 - (1 - base) / (1 + |n|)`: approaches 1 into the past, so
    /// per-time envelopes exist but no uniform cutoff does.
    DriftToOne {
        base: f64,
    },
}

impl BetaSchedule {
    fn at(&self, n: TimeIndex) -> f64 {
        match *self {
            Self::Constant(b) => b,
            Self::DriftToOne { base } => 1.0 - (1.0 - base) / (1.0 + n.unsigned_abs() as f64),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum FamilyKind {
    /// `p_n(i, .) = (1 - alpha) delta_{i+1} + alpha geometric(beta_n)`.
    Reset { alpha: f64, beta: BetaSchedule },
    /// Symmetric nearest-neighbour walk on the integers, folded onto the
    /// naturals by the zigzag indexing `0, 1, -1, 2, -2, ...`.
    RandomWalk,
    /// Deterministic shift `p_n(i, k) = [k = i + offset]` on the naturals.
    Shift { offset: i64 },
}

/// A countable-state kernel given by a lazy row generator.
#[derive(Clone, Debug, PartialEq)]
pub struct RowFamily {
    kind: FamilyKind,
}

/// Zigzag embedding of the integers into 1-based indices.
fn zig(z: i64) -> usize {
    if z == 0 {
        1
    } else if z > 0 {
        2 * z as usize
    } else {
        2 * z.unsigned_abs() as usize + 1
    }
}

fn unzig(i: usize) -> i64 {
    if i == 1 {
        0
    } else if i.is_multiple_of(2) {
        (i / 2) as i64
    } else {
        -(((i - 1) / 2) as i64)
    }
}

/// Smallest `n >= 1` with `beta^n <= eps`.
fn geometric_cutoff(beta: f64, eps: f64) -> usize {
    let mut n = (eps.ln() / beta.ln()).ceil().max(1.0) as usize;
    while beta.powi(n as i32) > eps {
        n += 1;
    }
    n
}

impl RowFamily {
    pub fn reset(alpha: f64, beta: BetaSchedule) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::InvalidParameter {
                what: "reset alpha",
                value: alpha,
            });
        }
        let base = match beta {
            BetaSchedule::Constant(b) | BetaSchedule::DriftToOne { base: b } => b,
        };
        if !(0.0 < base && base < 1.0) {
            return Err(Error::InvalidParameter {
                what: "reset beta",
                value: base,
            });
        }
        Ok(Self {
            kind: FamilyKind::Reset { alpha, beta },
        })
    }

    pub fn random_walk() -> Self {
        Self {
            kind: FamilyKind::RandomWalk,
        }
    }

    pub fn shift(offset: i64) -> Result<Self> {
        if offset < 0 {
            return Err(Error::InvalidParameter {
                what: "shift offset",
                value: offset as f64,
            });
        }
        Ok(Self {
            kind: FamilyKind::Shift { offset },
        })
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            FamilyKind::Reset { .. } => "reset",
            FamilyKind::RandomWalk => "random_walk",
            FamilyKind::Shift { .. } => "shift",
        }
    }

    /// The shift amount, for shift families.
    pub fn shift_offset(&self) -> Option<i64> {
        match self.kind {
            FamilyKind::Shift { offset } => Some(offset),
            _ => None,
        }
    }

    /// First `len` entries of row `i` (1-based) of the kernel at time `n`.
    pub fn row_prefix(&self, n: TimeIndex, i: usize, len: usize) -> Vec<f64> {
        assert!(i >= 1, "states are 1-based");
        let mut row = vec![0.0; len];
        match self.kind {
            FamilyKind::Reset { alpha, beta } => {
                let b = beta.at(n);
                let mut tail = alpha; // alpha * b^(k-1)
                for slot in row.iter_mut() {
                    *slot = tail * (1.0 - b);
                    tail *= b;
                }
                if i < len {
                    row[i] += 1.0 - alpha;
                }
            }
            FamilyKind::RandomWalk => {
                let z = unzig(i);
                for target in [z - 1, z + 1] {
                    let j = zig(target);
                    if j <= len {
                        row[j - 1] += 0.5;
                    }
                }
            }
            FamilyKind::Shift { offset } => {
                let j = i as i64 + offset;
                if j >= 1 && j as usize <= len {
                    row[j as usize - 1] = 1.0;
                }
            }
        }
        row
    }

    /// Maximum index distance between a row's support and its own index, for
    /// families whose rows have bounded support. Dense-tailed families
    /// return `None`.
    pub fn bandwidth(&self) -> Option<usize> {
        match self.kind {
            FamilyKind::Reset { alpha, .. } => {
                if alpha == 0.0 {
                    Some(1)
                } else {
                    None
                }
            }
            FamilyKind::RandomWalk => Some(2),
            FamilyKind::Shift { offset } => Some(offset.unsigned_abs() as usize),
        }
    }

    /// Analytic envelope `N_eps(n)` with `sum_{k <= N} p_n(i, k) >= 1 - eps`
    /// for every state the certificate covers, or `None` when the family is
    /// not tight at `n`. The second return value tells whether the
    /// certificate covers all states or only the probe band.
    pub fn envelope(
        &self,
        n: TimeIndex,
        eps: f64,
        probe_band: usize,
    ) -> Option<(usize, CertificateScope)> {
        match self.kind {
            FamilyKind::Reset { alpha, beta } => {
                if alpha == 0.0 {
                    return None;
                }
                let geo = geometric_cutoff(beta.at(n), eps);
                if alpha == 1.0 {
                    Some((geo, CertificateScope::AllStates))
                } else {
                    // The drifting component must be inside the cutoff for
                    // every probed state.
                    Some((
                        geo.max(probe_band + 1),
                        CertificateScope::ProbeBand(probe_band),
                    ))
                }
            }
            FamilyKind::RandomWalk | FamilyKind::Shift { .. } => None,
        }
    }

    /// For banded families: a state whose row carries no mass at or below
    /// the claimed cutoff.
    pub fn counterexample_state(&self, claimed: usize) -> Option<usize> {
        self.bandwidth().map(|bw| claimed + bw + 1)
    }
}

/// Whether an envelope certificate covers every state or only the probed
/// band (plus adversarial points).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CertificateScope {
    AllStates,
    ProbeBand(usize),
}

/// A concrete violation of a claimed cutoff.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TightnessCounterexample {
    pub state: usize,
    pub eps: f64,
    pub claimed_cutoff: usize,
    pub mass_inside: f64,
}

/// Per-time tightness verdict.
#[derive(Clone, Debug, PartialEq)]
pub enum TightnessVerdict {
    Tight {
        time: TimeIndex,
        /// `eps -> N_eps(time)` over the requested grid.
        table: Vec<(f64, usize)>,
        scope: CertificateScope,
    },
    NotTight {
        time: TimeIndex,
        counterexample: TightnessCounterexample,
    },
}

fn check_eps_grid(eps_grid: &[f64]) -> Result<()> {
    if eps_grid.is_empty() {
        return Err(Error::InvalidSchedule {
            reason: "empty epsilon grid",
        });
    }
    for &eps in eps_grid {
        if !(0.0 < eps && eps < 1.0) {
            return Err(Error::InvalidParameter {
                what: "epsilon",
                value: eps,
            });
        }
    }
    Ok(())
}

fn not_tight_verdict(
    family: &RowFamily,
    n: TimeIndex,
    eps_grid: &[f64],
    probe_band: usize,
) -> TightnessVerdict {
    let claimed = probe_band;
    let state = family.counterexample_state(claimed).unwrap_or(claimed + 1);
    let mass_inside: f64 = family.row_prefix(n, state, claimed).iter().sum();
    let eps = eps_grid
        .iter()
        .copied()
        .find(|&e| mass_inside < 1.0 - e)
        .unwrap_or(eps_grid[0]);
    TightnessVerdict::NotTight {
        time: n,
        counterexample: TightnessCounterexample {
            state,
            eps,
            claimed_cutoff: claimed,
            mass_inside,
        },
    }
}

/// Verifies one envelope numerically on the probe band plus, for banded
/// families, the adversarial state just beyond the cutoff.
fn verify_envelope(
    family: &RowFamily,
    n: TimeIndex,
    eps: f64,
    cutoff: usize,
    probe_band: usize,
) -> Option<TightnessCounterexample> {
    let mut probes: Vec<usize> = (1..=probe_band).collect();
    if let Some(bw) = family.bandwidth() {
        probes.push(cutoff + bw);
    }
    for i in probes {
        let mass: f64 = family.row_prefix(n, i, cutoff).iter().sum();
        if mass < 1.0 - eps - 1e-12 {
            return Some(TightnessCounterexample {
                state: i,
                eps,
                claimed_cutoff: cutoff,
                mass_inside: mass,
            });
        }
    }
    None
}

/// Per-time tightness check over an epsilon grid.
///
/// A `Tight` verdict carries the envelope table and its scope; it is issued
/// only after the analytic envelope has been spot-checked numerically on the
/// probe grid. A `NotTight` verdict carries an explicit state whose row
/// defeats the claimed cutoff.
pub fn condition_p_check(
    family: &RowFamily,
    times: &[TimeIndex],
    eps_grid: &[f64],
    probe_band: usize,
) -> Result<Vec<TightnessVerdict>> {
    check_eps_grid(eps_grid)?;
    if probe_band == 0 {
        return Err(Error::InvalidParameter {
            what: "probe band",
            value: 0.0,
        });
    }
    let mut out = Vec::with_capacity(times.len());
    for &n in times {
        let mut table = Vec::with_capacity(eps_grid.len());
        let mut scope = CertificateScope::AllStates;
        let mut failure = None;
        for &eps in eps_grid {
            match family.envelope(n, eps, probe_band) {
                None => {
                    failure = Some(not_tight_verdict(family, n, eps_grid, probe_band));
                    break;
                }
                Some((cutoff, s)) => {
                    if let Some(cex) = verify_envelope(family, n, eps, cutoff, probe_band) {
                        failure = Some(TightnessVerdict::NotTight {
                            time: n,
                            counterexample: cex,
                        });
                        break;
                    }
                    if let CertificateScope::ProbeBand(_) = s {
                        scope = s;
                    }
                    table.push((eps, cutoff));
                }
            }
        }
        out.push(match failure {
            Some(v) => v,
            None => TightnessVerdict::Tight {
                time: n,
                table,
                scope,
            },
        });
    }
    Ok(out)
}

/// Why a uniform cutoff table could not be issued.
#[derive(Clone, Debug, PartialEq)]
pub enum NotUniformReason {
    /// Some probed time already fails the per-time condition.
    NotTight {
        time: TimeIndex,
        counterexample: TightnessCounterexample,
    },
    /// Per-time cutoffs exist but their maximum exceeds the cap: divergent
    /// at grid resolution.
    Diverges {
        eps: f64,
        required: usize,
        cap: usize,
        per_time: Vec<(TimeIndex, usize)>,
    },
}

/// Uniform-tightness verdict.
#[derive(Clone, Debug, PartialEq)]
pub enum UniformVerdict {
    Uniform {
        /// A single `eps -> N_eps` valid at every probed time.
        table: Vec<(f64, usize)>,
        scope: CertificateScope,
    },
    NotUniform {
        reason: NotUniformReason,
    },
}

/// Uniform version of the tightness check: a single cutoff per epsilon must
/// work at every probed time, and must stay below `cap` (finitely many
/// probes cannot distinguish a slowly growing table from a divergent one,
/// so the cap pins down what "uniform at grid resolution" means).
pub fn condition_u_check(
    family: &RowFamily,
    times: &[TimeIndex],
    eps_grid: &[f64],
    probe_band: usize,
    cap: usize,
) -> Result<UniformVerdict> {
    let per_time = condition_p_check(family, times, eps_grid, probe_band)?;
    let mut tables = Vec::new();
    let mut scope = CertificateScope::AllStates;
    for verdict in &per_time {
        match verdict {
            TightnessVerdict::NotTight {
                time,
                counterexample,
            } => {
                return Ok(UniformVerdict::NotUniform {
                    reason: NotUniformReason::NotTight {
                        time: *time,
                        counterexample: *counterexample,
                    },
                });
            }
            TightnessVerdict::Tight {
                time,
                table,
                scope: s,
            } => {
                if let CertificateScope::ProbeBand(_) = s {
                    scope = *s;
                }
                tables.push((*time, table.clone()));
            }
        }
    }
    let mut uniform = Vec::with_capacity(eps_grid.len());
    for (idx, &eps) in eps_grid.iter().enumerate() {
        let per_time_cutoffs: Vec<(TimeIndex, usize)> = tables
            .iter()
            .map(|(time, table)| (*time, table[idx].1))
            .collect();
        let required = per_time_cutoffs.iter().map(|&(_, n)| n).max().unwrap_or(1);
        if required > cap {
            return Ok(UniformVerdict::NotUniform {
                reason: NotUniformReason::Diverges {
                    eps,
                    required,
                    cap,
                    per_time: per_time_cutoffs,
                },
            });
        }
        uniform.push((eps, required));
    }
    Ok(UniformVerdict::Uniform {
        table: uniform,
        scope,
    })
}

/// One renormalized truncated step with its leaked mass.
#[derive(Clone, Debug)]
pub struct TruncatedStep {
    pub time: TimeIndex,
    pub matrix: StochasticMatrix,
    /// Largest mass leaked beyond the truncation by any kept row.
    pub mass_defect: f64,
}

/// Keeps the first `truncation` states of the kernel at time `n`,
/// renormalizing each row and recording the worst leak. A row with no mass
/// inside the truncation cannot be renormalized and is an error.
pub fn truncate(family: &RowFamily, n: TimeIndex, truncation: usize) -> Result<TruncatedStep> {
    if truncation == 0 {
        return Err(Error::InvalidParameter {
            what: "truncation",
            value: 0.0,
        });
    }
    let mut entries = Array2::zeros((truncation, truncation));
    let mut mass_defect = 0.0_f64;
    for i in 1..=truncation {
        let prefix = family.row_prefix(n, i, truncation);
        let inside: f64 = prefix.iter().sum();
        if inside <= 0.0 {
            return Err(Error::EmptyTruncatedRow { time: n, state: i });
        }
        mass_defect = mass_defect.max((1.0 - inside).max(0.0));
        for (j, &v) in prefix.iter().enumerate() {
            entries[[i - 1, j]] = v / inside;
        }
    }
    Ok(TruncatedStep {
        time: n,
        matrix: StochasticMatrix::new_unchecked(n, entries),
        mass_defect,
    })
}

/// A finite window of truncated steps plus the accumulated defect bound.
#[derive(Clone, Debug)]
pub struct TruncatedModel {
    pub model: ChainModel,
    pub truncation: usize,
    pub step_defects: Vec<(TimeIndex, f64)>,
    /// Union bound: the sum of per-step defects bounds the mass any product
    /// over the window can lose to the truncation.
    pub product_defect_bound: f64,
}

/// Truncates every step of the window.
pub fn truncate_window(
    family: &RowFamily,
    window: (TimeIndex, TimeIndex),
    truncation: usize,
    tol_stochastic: f64,
) -> Result<TruncatedModel> {
    let mut matrices = Vec::new();
    let mut step_defects = Vec::new();
    let mut bound = 0.0;
    for n in window.0..window.1 {
        let step = truncate(family, n, truncation)?;
        step_defects.push((n, step.mass_defect));
        bound += step.mass_defect;
        matrices.push(step.matrix);
    }
    Ok(TruncatedModel {
        model: ChainModel::new(window, matrices, None, tol_stochastic),
        truncation,
        step_defects,
        product_defect_bound: bound,
    })
}

/// One row of the central-binomial bound sweep.
#[derive(Clone, Copy, Debug)]
pub struct RwBoundRow {
    pub n: u32,
    /// `(1/2)^(2n) C(2n, n)`, evaluated in log space via `ln Gamma`.
    pub exact: f64,
    /// `sqrt(e / (2 pi)) / sqrt(n)`.
    pub bound: f64,
    pub holds: bool,
}

/// Central binomial probability `(1/2)^(2n) C(2n, n)` via log-gamma.
pub fn central_binomial_probability(n: u32) -> f64 {
    let nf = n as f64;
    (ln_gamma(2.0 * nf + 1.0) - 2.0 * ln_gamma(nf + 1.0) - 2.0 * nf * 2.0_f64.ln()).exp()
}

/// Checks `(1/2)^(2n) C(2n, n) <= sqrt(e / 2pi) n^(-1/2)` over the list.
/// The right side squeezes every row of the 2n-step symmetric walk to zero,
/// which is what rules out an entrance law for it.
pub fn rw_bound_check(n_list: &[u32]) -> Result<Vec<RwBoundRow>> {
    let c = stirling_bound_constant();
    n_list
        .iter()
        .map(|&n| {
            if n == 0 {
                return Err(Error::InvalidParameter {
                    what: "bound sweep n",
                    value: 0.0,
                });
            }
            let exact = central_binomial_probability(n);
            let bound = c / (n as f64).sqrt();
            Ok(RwBoundRow {
                n,
                exact,
                bound,
                holds: exact <= bound,
            })
        })
        .collect()
}

/// Largest entry of the centered row of the `2n`-step truncated walk
/// product. Equals the central binomial probability as long as the support
/// fits, which requires `truncation >= 4n + 1` under the zigzag indexing.
pub fn rw_max_row_entry(n: u32, truncation: usize) -> Result<f64> {
    let needed = 4 * n as usize + 1;
    if truncation < needed {
        return Err(Error::SupportExceedsTruncation { needed, truncation });
    }
    let family = RowFamily::random_walk();
    // The walk is time-homogeneous; one truncated step serves every time.
    let step = truncate(&family, -1, truncation)?;
    let mut v: Array1<f64> = Array1::zeros(truncation);
    v[0] = 1.0; // zigzag index 1 is the origin
    for _ in 0..(2 * n) {
        v = v.dot(step.matrix.entries());
    }
    Ok(v.iter().copied().fold(0.0, f64::max))
}

/// Entrance-law demonstration for the shift family.
#[derive(Clone, Debug)]
pub struct ShiftReport {
    pub offset: i64,
    pub truncation: usize,
    /// Base state `c` of the family `m_n = delta_{c + n * offset}`.
    pub base_state: i64,
    /// Every truncated state above the offset has a preimage under the
    /// shift.
    pub onto_modulo_shift: bool,
    /// The laws along the window, earliest first.
    pub laws: Vec<Distribution>,
    /// Worst TV residual of `m_{n+1} = m_n P_n` along the window.
    pub max_recursion_residual: f64,
}

/// Demonstrates the shifted-delta entrance-law family `m_n = delta_{c+n l}`
/// on a finite window, checking the recursion exactly against the family
/// rows. The window must stay inside the truncation; leaving it is a hard
/// error rather than a silent wrap.
pub fn shift_family_checks(
    offset: i64,
    truncation: usize,
    window: (TimeIndex, TimeIndex),
    base_state: Option<i64>,
) -> Result<ShiftReport> {
    let family = RowFamily::shift(offset)?;
    if window.0 > window.1 {
        return Err(Error::EmptyRange {
            s: window.0,
            t: window.1,
        });
    }
    let c = base_state.unwrap_or(1 - window.0 * offset);
    let position = |n: TimeIndex| c + n * offset;
    for n in window.0..=window.1 {
        let pos = position(n);
        if pos < 1 || pos > truncation as i64 {
            return Err(Error::LeavesTruncation {
                time: n,
                state: pos,
                truncation,
            });
        }
    }
    let mut laws = Vec::new();
    let mut max_residual = 0.0_f64;
    for n in window.0..=window.1 {
        let pos = position(n) as usize;
        laws.push(Distribution::delta(pos, truncation, n)?);
        if n < window.1 {
            let row = family.row_prefix(n, pos, truncation);
            let next = position(n + 1) as usize;
            let mut residual = 0.0;
            for (j, &v) in row.iter().enumerate() {
                let target = if j + 1 == next { 1.0 } else { 0.0 };
                residual += (v - target).abs();
            }
            max_residual = max_residual.max(0.5 * residual);
        }
    }
    let onto_modulo_shift = ((offset.max(0) as usize + 1)..=truncation).all(|k| {
        let preimage = k as i64 - offset;
        preimage >= 1 && preimage <= truncation as i64
    });
    Ok(ShiftReport {
        offset,
        truncation,
        base_state: c,
        onto_modulo_shift,
        laws,
        max_recursion_residual: max_residual,
    })
}
